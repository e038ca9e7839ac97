//! Inlining prediction over source functions and pseudo-inlined function synthesis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{
    FeatureGraph, Function, InlineOrigin, MatchingFeatures, PredictiveFeature, PredictiveFeatures,
    PSEUDO_INLINE_SEPARATOR,
};

#[derive(Debug, thiserror::Error)]
pub enum InlineModelError {
    #[error("malformed inline model: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inline model contains a non-finite score")]
    NonFinite,
}

/// One additive stump: contributes `score` when `feature == polarity`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub feature: PredictiveFeature,
    pub polarity: bool,
    pub score: f64,
}

impl Rule {
    pub fn holds(&self, p: &PredictiveFeatures) -> bool {
        p.get(self.feature) == self.polarity
    }
}

/// Sum-of-rules classifier in the style of an alternating decision tree
/// flattened to root-level stumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    #[serde(rename = "base")]
    pub base_score: f64,
    #[serde(default)]
    pub threshold: f64,
    pub rules: Vec<Rule>,
}

impl InlineModel {
    pub fn from_json(bytes: &[u8]) -> Result<Self, InlineModelError> {
        let model: InlineModel = serde_json::from_slice(bytes)?;
        let finite = model.base_score.is_finite()
            && model.threshold.is_finite()
            && model.rules.iter().all(|r| r.score.is_finite());
        if !finite {
            return Err(InlineModelError::NonFinite);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("models always serialize");
        s.push('\n');
        s
    }

    /// A model that never predicts inlining.
    pub fn never() -> Self {
        InlineModel {
            base_score: -1.0,
            threshold: 0.0,
            rules: Vec::new(),
        }
    }
}

pub fn score_function(p: &PredictiveFeatures, m: &InlineModel) -> f64 {
    m.base_score
        + m.rules
            .iter()
            .filter(|r| r.holds(p))
            .map(|r| r.score)
            .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InlineDecision {
    pub function: String,
    pub score: f64,
    pub inline: bool,
}

/// Scores every source function that carries predictive features; the others
/// are reported with `inline = false` and the base score. Pseudo-inlined
/// functions are skipped.
pub fn predict_all(src: &FeatureGraph, m: &InlineModel) -> Vec<InlineDecision> {
    src.iter()
        .filter(|(_, f)| !f.is_pseudo())
        .map(|(id, f)| match &f.predictive {
            Some(p) => {
                let score = score_function(p, m);
                InlineDecision {
                    function: id.clone(),
                    score,
                    inline: score > m.threshold,
                }
            }
            None => InlineDecision {
                function: id.clone(),
                score: m.base_score,
                inline: false,
            },
        })
        .collect()
}

pub fn pseudo_id(caller: &str, callee: &str) -> String {
    format!("{caller}{PSEUDO_INLINE_SEPARATOR}{callee}")
}

/// Features of `caller` after `callee` has been inlined into it once.
pub fn merge_inlined(caller: &MatchingFeatures, callee_id: &str, callee: &MatchingFeatures) -> MatchingFeatures {
    let mut callees = caller.callees.clone();
    callees.remove(callee_id);
    callees.extend(callee.callees.iter().cloned());
    MatchingFeatures {
        strings: caller.strings.union(&callee.strings).cloned().collect(),
        ints: caller.ints.union(&callee.ints).copied().collect(),
        libcalls: caller.libcalls.union(&callee.libcalls).cloned().collect(),
        callers: caller.callers.clone(),
        callees,
        num_args: caller.num_args,
    }
}

/// Adds one pseudo-inlined function per call edge whose callee is predicted
/// to be inlined. Originals are kept unchanged; self-calls are ignored.
pub fn synthesize_pseudo_inlined(src: &FeatureGraph, decisions: &[InlineDecision]) -> FeatureGraph {
    let inlined: BTreeMap<&str, bool> = decisions
        .iter()
        .map(|d| (d.function.as_str(), d.inline))
        .collect();
    let mut functions = src.functions().clone();
    for (caller_id, caller) in src.iter() {
        if caller.is_pseudo() {
            continue;
        }
        for callee_id in &caller.features.callees {
            if callee_id == caller_id || !inlined.get(callee_id.as_str()).copied().unwrap_or(false) {
                continue;
            }
            let Some(callee) = src.get(callee_id) else { continue };
            if callee.is_pseudo() {
                continue;
            }
            let id = pseudo_id(caller_id, callee_id);
            if functions.contains_key(&id) {
                continue;
            }
            functions.insert(
                id,
                Function {
                    features: merge_inlined(&caller.features, callee_id, &callee.features),
                    predictive: None,
                    pseudo_inline_origin: Some(InlineOrigin {
                        caller: caller_id.clone(),
                        callee: callee_id.clone(),
                    }),
                },
            );
        }
    }
    FeatureGraph::from_raw(src.side(), functions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Side;

    fn example_model() -> InlineModel {
        InlineModel {
            base_score: -0.1,
            threshold: 0.0,
            rules: vec![
                Rule { feature: PredictiveFeature::Static, polarity: true, score: 0.8 },
                Rule { feature: PredictiveFeature::Recursive, polarity: true, score: -1.2 },
                Rule { feature: PredictiveFeature::Variadic, polarity: true, score: -0.9 },
            ],
        }
    }

    fn with(features: &[PredictiveFeature]) -> PredictiveFeatures {
        let mut p = PredictiveFeatures::default();
        for f in features {
            p.set(*f, true);
        }
        p
    }

    #[test]
    fn scores_sum_matching_rules() {
        let m = example_model();
        assert!((score_function(&with(&[PredictiveFeature::Static]), &m) - 0.7).abs() < 1e-12);
        assert!((score_function(&with(&[PredictiveFeature::Recursive]), &m) + 1.3).abs() < 1e-12);
        assert_eq!(score_function(&with(&[]), &m), -0.1);
    }

    #[test]
    fn model_json_round_trip() {
        let m = example_model();
        let json = m.to_json();
        assert!(json.contains("\"base\": -0.1"));
        assert_eq!(InlineModel::from_json(json.as_bytes()).unwrap(), m);
        assert!(InlineModel::from_json(br#"{"base": 0, "rules": [{"feature": "loud", "polarity": true, "score": 1}]}"#).is_err());
    }

    fn func(strings: &[&str], callees: &[&str], p: PredictiveFeatures) -> Function {
        Function {
            features: MatchingFeatures {
                strings: strings.iter().map(|s| s.to_string()).collect(),
                callees: callees.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            },
            predictive: Some(p),
            pseudo_inline_origin: None,
        }
    }

    fn program() -> FeatureGraph {
        FeatureGraph::from_functions(
            Side::Source,
            [
                ("f".to_string(), func(&["a"], &["g", "h"], with(&[]))),
                ("g".to_string(), func(&["b"], &["h"], with(&[PredictiveFeature::Static]))),
                ("h".to_string(), func(&["c"], &[], with(&[PredictiveFeature::Static]))),
            ],
        )
        .unwrap()
    }

    #[test]
    fn predict_all_examples() {
        let m = example_model();
        let decisions = predict_all(&program(), &m);
        assert_eq!(decisions.len(), 3);
        assert_eq!(decisions.iter().filter(|d| d.inline).count(), 2);
        assert!(predict_all(&FeatureGraph::empty(Side::Source), &m).is_empty());

        let recursive = FeatureGraph::from_functions(
            Side::Source,
            [
                ("r".to_string(), func(&[], &["r"], with(&[PredictiveFeature::Recursive, PredictiveFeature::Static]))),
                ("s".to_string(), func(&[], &["s"], with(&[PredictiveFeature::Recursive]))),
            ],
        )
        .unwrap();
        assert!(predict_all(&recursive, &m).iter().all(|d| !d.inline));
    }

    #[test]
    fn synthesis_merges_caller_and_callee() {
        let src = FeatureGraph::from_functions(
            Side::Source,
            [
                ("f".to_string(), func(&["a"], &["g"], with(&[]))),
                ("g".to_string(), func(&["b"], &["h"], with(&[]))),
                ("h".to_string(), func(&[], &[], with(&[]))),
            ],
        )
        .unwrap();
        let decisions = vec![
            InlineDecision { function: "f".into(), score: 0.0, inline: false },
            InlineDecision { function: "g".into(), score: 1.0, inline: true },
            InlineDecision { function: "h".into(), score: 0.0, inline: false },
        ];
        let out = synthesize_pseudo_inlined(&src, &decisions);
        assert_eq!(out.len(), 4);
        let p = out.get("f+inl+g").unwrap();
        assert_eq!(p.features.strings, ["a".to_string(), "b".to_string()].into());
        assert_eq!(p.features.callees, ["h".to_string()].into());
        assert_eq!(out.resolve_origin("f+inl+g"), "f");
        for id in ["f", "g", "h"] {
            assert_eq!(out.get(id), src.get(id));
        }
        assert!(crate::graph::validate(&out).is_empty());
    }

    #[test]
    fn one_pseudo_function_per_inlined_edge() {
        let src = program();
        let decisions: Vec<_> = ["f", "g", "h"]
            .iter()
            .map(|id| InlineDecision { function: id.to_string(), score: 0.0, inline: *id != "f" })
            .collect();
        let out = synthesize_pseudo_inlined(&src, &decisions);
        // f->g, f->h, g->h
        assert_eq!(out.len(), 3 + 3);
        assert!(out.contains("f+inl+g") && out.contains("f+inl+h") && out.contains("g+inl+h"));

        let none: Vec<_> = decisions.iter().map(|d| InlineDecision { inline: false, ..d.clone() }).collect();
        assert_eq!(synthesize_pseudo_inlined(&src, &none).len(), 3);
    }
}
