//! Canonical JSON interchange for feature graphs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    FeatureGraph, Function, GraphError, InlineOrigin, MatchingFeatures, NumArgs,
    PredictiveFeatures, Side,
};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    side: Side,
    functions: Vec<FunctionRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionRecord {
    id: String,
    #[serde(default)]
    strings: BTreeSet<String>,
    #[serde(default)]
    ints: BTreeSet<i64>,
    #[serde(default)]
    libcalls: BTreeSet<String>,
    #[serde(default)]
    callers: BTreeSet<String>,
    #[serde(default)]
    callees: BTreeSet<String>,
    num_args: NumArgs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predictive: Option<PredictiveFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inlined_from: Option<InlineOrigin>,
}

pub fn ingest_json(bytes: &[u8]) -> Result<FeatureGraph, GraphError> {
    let doc: Document = serde_json::from_slice(bytes)?;
    let functions = doc.functions.into_iter().map(|r| {
        (
            r.id,
            Function {
                features: MatchingFeatures {
                    strings: r.strings,
                    ints: r.ints,
                    libcalls: r.libcalls,
                    callers: r.callers,
                    callees: r.callees,
                    num_args: r.num_args,
                },
                predictive: r.predictive,
                pseudo_inline_origin: r.inlined_from,
            },
        )
    });
    FeatureGraph::from_functions(doc.side, functions)
}

/// Serializes to pretty-printed JSON with functions in ascending id order.
pub fn to_json(graph: &FeatureGraph) -> String {
    let doc = Document {
        side: graph.side(),
        functions: graph
            .iter()
            .map(|(id, f)| FunctionRecord {
                id: id.clone(),
                strings: f.features.strings.clone(),
                ints: f.features.ints.clone(),
                libcalls: f.features.libcalls.clone(),
                callers: f.features.callers.clone(),
                callees: f.features.callees.clone(),
                num_args: f.features.num_args,
                predictive: f.predictive,
                inlined_from: f.pseudo_inline_origin.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("graph documents always serialize");
    out.push('\n');
    out
}
