//! Training the pair-weight coefficients and the inlining model from labelled corpora.

mod boost;
mod svm;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cost::{arg_cost, set_feature_cost, ActiveSet, CostVector, Feature};
use crate::graph::{FeatureGraph, PredictiveFeatures};
use crate::matcher::{translate_fcg, AddressNameMap, FcgToken};

pub use boost::{evaluate_inliner, train_inliner, BoostConfig};
pub use svm::{train_weights, SvmConfig, TrainedWeights};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("training corpus is degenerate: {0}")]
    Degenerate(&'static str),
    #[error("ground truth has no entry for binary function `{0}`")]
    TruthIncomplete(String),
    #[error("ground truth maps `{binary}` to unknown source function `{source_id}`")]
    UnknownSource { binary: String, source_id: String },
    #[error("cannot split {groups} corpora into {folds} folds")]
    Folds { groups: usize, folds: usize },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: String, line: usize, source: serde_json::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Same,
    Different,
}

/// Costs of one binary/source pair with every feature active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairExample {
    pub costs: [f64; 6],
    pub label: PairLabel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    costs: BTreeMap<String, f64>,
    label: PairLabel,
}

impl Serialize for PairExample {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PairRecord {
            costs: Feature::ALL
                .iter()
                .map(|f| (f.name().to_string(), self.costs[f.index()]))
                .collect(),
            label: self.label,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PairExample {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rec = PairRecord::deserialize(deserializer)?;
        let mut costs = [0.0; 6];
        for f in Feature::ALL {
            costs[f.index()] = *rec
                .costs
                .get(f.name())
                .ok_or_else(|| serde::de::Error::custom(format!("missing cost `{}`", f.name())))?;
        }
        if let Some(extra) = rec.costs.keys().find(|k| Feature::ALL.iter().all(|f| f.name() != k.as_str())) {
            return Err(serde::de::Error::custom(format!("unknown cost `{extra}`")));
        }
        Ok(PairExample { costs, label: rec.label })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InlineLabel {
    Inlined,
    NotInlined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineExample {
    pub predictive: PredictiveFeatures,
    pub label: InlineLabel,
}

/// One compiled program with its ground truth, as input to corpus building.
#[derive(Clone, Copy, Debug)]
pub struct LabelledPair<'a> {
    pub binary: &'a FeatureGraph,
    pub source: &'a FeatureGraph,
    pub truth: &'a BTreeMap<String, String>,
    /// Call edges `(caller, callee)` the compiler inlined.
    pub inlined_edges: &'a [(String, String)],
}

impl<'a> From<&'a crate::sim::SimPair> for LabelledPair<'a> {
    fn from(p: &'a crate::sim::SimPair) -> Self {
        LabelledPair {
            binary: &p.binary,
            source: &p.source,
            truth: &p.truth,
            inlined_edges: &p.inlined_edges,
        }
    }
}

fn cost_vector_with_truth(
    bin: &crate::graph::Function,
    src: &crate::graph::Function,
    map: &AddressNameMap,
) -> [f64; 6] {
    let names = |ids: &BTreeSet<String>| -> BTreeSet<FcgToken> {
        ids.iter().map(|s| FcgToken::Name(s.clone())).collect()
    };
    let mut cv = CostVector::new(ActiveSet::ALL);
    let (b, s) = (&bin.features, &src.features);
    cv.set(Feature::Strings, set_feature_cost(&b.strings, &s.strings));
    cv.set(Feature::Ints, set_feature_cost(&b.ints, &s.ints));
    cv.set(Feature::Libcalls, set_feature_cost(&b.libcalls, &s.libcalls));
    cv.set(Feature::Callers, set_feature_cost(&translate_fcg(&b.callers, map), &names(&s.callers)));
    cv.set(Feature::Callees, set_feature_cost(&translate_fcg(&b.callees, map), &names(&s.callees)));
    cv.set(Feature::NumArgs, arg_cost(b.num_args, s.num_args));
    cv.costs
}

/// Balanced SAME/DIFFERENT corpus from ground-truth pairs.
///
/// Call-graph features are translated through the ground truth. Functions
/// that took part in inlining, as caller or callee, are left out because
/// their features no longer describe a single source function. Each SAME
/// example is paired with one DIFFERENT example against a uniformly drawn
/// wrong source function.
pub fn build_pair_corpus(pairs: &[LabelledPair<'_>], seed: u64) -> Result<Vec<PairExample>, LearnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for pair in pairs {
        let involved: BTreeSet<&str> = pair
            .inlined_edges
            .iter()
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .collect();
        let map = AddressNameMap::new(pair.truth.clone());
        let source_ids: Vec<&String> = pair
            .source
            .iter()
            .filter(|(_, f)| !f.is_pseudo())
            .map(|(id, _)| id)
            .collect();
        for (bid, bf) in pair.binary.iter() {
            let sid = pair
                .truth
                .get(bid)
                .ok_or_else(|| LearnError::TruthIncomplete(bid.clone()))?;
            if involved.contains(sid.as_str()) {
                continue;
            }
            let sf = pair.source.get(sid).ok_or_else(|| LearnError::UnknownSource {
                binary: bid.clone(),
                source_id: sid.clone(),
            })?;
            if source_ids.len() < 2 {
                continue;
            }
            let wrong = loop {
                let candidate = source_ids[rng.gen_range(0..source_ids.len())];
                if candidate != sid {
                    break candidate;
                }
            };
            out.push(PairExample {
                costs: cost_vector_with_truth(bf, sf, &map),
                label: PairLabel::Same,
            });
            out.push(PairExample {
                costs: cost_vector_with_truth(bf, pair.source.get(wrong).unwrap(), &map),
                label: PairLabel::Different,
            });
        }
    }
    Ok(out)
}

/// Inlining examples for one program: every source function with predictive
/// features and at least one caller other than itself, labelled by whether
/// the compiler inlined it anywhere.
pub fn inline_candidates(source: &FeatureGraph, inlined: &BTreeSet<&str>) -> Vec<InlineExample> {
    source
        .iter()
        .filter(|(id, f)| !f.is_pseudo() && f.features.callers.iter().any(|c| c != *id))
        .filter_map(|(id, f)| {
            f.predictive.map(|predictive| InlineExample {
                predictive,
                label: if inlined.contains(id.as_str()) {
                    InlineLabel::Inlined
                } else {
                    InlineLabel::NotInlined
                },
            })
        })
        .collect()
}

/// Balances one program's examples 50/50 by subsampling the larger class.
/// A program lacking either class contributes nothing.
pub fn balance(mut examples: Vec<InlineExample>, rng: &mut ChaCha8Rng) -> Vec<InlineExample> {
    examples.shuffle(rng);
    let (pos, neg): (Vec<_>, Vec<_>) = examples
        .into_iter()
        .partition(|e| e.label == InlineLabel::Inlined);
    let n = pos.len().min(neg.len());
    pos.into_iter().take(n).chain(neg.into_iter().take(n)).collect()
}

/// Concatenates per-program balanced inlining corpora.
pub fn build_inline_corpus(pairs: &[LabelledPair<'_>], seed: u64) -> Vec<InlineExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .flat_map(|pair| {
            let inlined: BTreeSet<&str> = pair.inlined_edges.iter().map(|(_, c)| c.as_str()).collect();
            balance(inline_candidates(pair.source, &inlined), &mut rng)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits corpus sources `0..groups` into `k` folds; source `g` is tested in fold `g % k`.
pub fn kfold(groups: usize, k: usize) -> Result<Vec<Fold>, LearnError> {
    if k < 2 || k > groups {
        return Err(LearnError::Folds { groups, folds: k });
    }
    Ok((0..k)
        .map(|fold| {
            let (test, train) = (0..groups).partition(|g| g % k == fold);
            Fold { train, test }
        })
        .collect())
}

/// Trains on every fold's training sources and reports `(tpr, fpr)` on its test sources.
pub fn cross_evaluate_inliner(
    groups: &[Vec<InlineExample>],
    k: usize,
    cfg: &BoostConfig,
) -> Result<Vec<(f64, f64)>, LearnError> {
    kfold(groups.len(), k)?
        .into_iter()
        .map(|fold| {
            let train: Vec<InlineExample> = fold.train.iter().flat_map(|&g| groups[g].iter().copied()).collect();
            let test: Vec<InlineExample> = fold.test.iter().flat_map(|&g| groups[g].iter().copied()).collect();
            let model = train_inliner(&train, cfg)?;
            Ok(evaluate_inliner(&model, &test))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), LearnError> {
    let io = |source| LearnError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for item in items {
        let line = serde_json::to_string(item).expect("examples always serialize");
        writeln!(file, "{line}").map_err(io)?;
    }
    file.flush().map_err(io)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LearnError> {
    let io = |source| LearnError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LearnError::Json {
            path: path.display().to_string(),
            line: k + 1,
            source,
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
