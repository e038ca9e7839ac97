//! Iterative function matching.
//!
//! Each round builds the binary×source weight matrix, solves the assignment
//! and labels every binary function. The first round ignores callers and
//! callees because binary call-graph neighbours are addresses and nothing
//! maps them to source names yet; later rounds translate them through the
//! pairs matched in the previous round. The loop stops once the set of
//! uniquely matched pairs stops changing.

mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::assignment::{self, Assignment, AssignmentError, WeightMatrix};
use crate::cost::{
    arg_cost, cost_from_overlap, pair_weight, ActiveSet, CostVector, Feature, WeightVector,
};
use crate::graph::{FeatureGraph, Function, NumArgs};

pub use report::{IterationSnapshot, Label, MatchReport, Tallies, Termination};

/// Absolute tolerance when deciding whether two weights in a row are equal.
pub const TIE_EPSILON: f64 = 1e-9;

pub const DEFAULT_MAX_ITERATIONS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum MatchError {
    #[error("binary graph has no functions")]
    EmptyBinary,
    #[error("ground truth has no entry for binary function `{0}`")]
    MissingTruth(String),
    #[error("invalid weights: {0}")]
    Weights(#[from] crate::cost::WeightError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchOptions {
    pub max_iterations: usize,
    /// Worker threads for weight-matrix construction; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            threads: None,
        }
    }
}

/// Binary address to source name, taken from uniquely matched pairs only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AddressNameMap(BTreeMap<String, String>);

impl AddressNameMap {
    pub fn new(pairs: BTreeMap<String, String>) -> Self {
        AddressNameMap(pairs)
    }

    pub fn from_labels(labels: &BTreeMap<String, Label>) -> Self {
        AddressNameMap(
            labels
                .iter()
                .filter_map(|(b, l)| l.matched_source().map(|s| (b.clone(), s.to_string())))
                .collect(),
        )
    }

    pub fn get(&self, binary: &str) -> Option<&str> {
        self.0.get(binary).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.0.iter()
    }
}

/// A call-graph neighbour made comparable across the two sides.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FcgToken {
    /// A source function name.
    Name(String),
    /// An unmapped binary address; equal to nothing on the source side.
    Opaque(String),
}

pub fn translate_fcg(binary_ids: &BTreeSet<String>, map: &AddressNameMap) -> BTreeSet<FcgToken> {
    binary_ids
        .iter()
        .map(|b| match map.get(b) {
            Some(name) => FcgToken::Name(name.to_string()),
            None => FcgToken::Opaque(b.clone()),
        })
        .collect()
}

/// Weight matrix together with the function ids of its rows and columns.
#[derive(Clone, Debug)]
pub struct PairWeights {
    pub binary_ids: Vec<String>,
    pub source_ids: Vec<String>,
    pub matrix: WeightMatrix,
    pub active: ActiveSet,
}

impl PairWeights {
    pub fn max_weight(&self) -> f64 {
        self.matrix.pad()
    }
}

/// Features with every set element replaced by a small integer; sets become
/// sorted vectors so overlaps are a linear merge.
struct Interned {
    strings: Vec<u32>,
    ints: Vec<i64>,
    libcalls: Vec<u32>,
    callers: Vec<u32>,
    callees: Vec<u32>,
    num_args: NumArgs,
}

#[derive(Default)]
struct Interner(HashMap<String, u32>);

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        let next = self.0.len() as u32;
        *self.0.entry(s.to_string()).or_insert(next)
    }

    fn lookup(&self, s: &str) -> Option<u32> {
        self.0.get(s).copied()
    }
}

fn sorted<I: IntoIterator<Item = u32>>(it: I) -> Vec<u32> {
    let mut v: Vec<u32> = it.into_iter().collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn overlap<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn set_cost<T: Ord>(binary: &[T], source: &[T]) -> f64 {
    cost_from_overlap(binary.len(), source.len(), overlap(binary, source)).0
}

fn cost_vector(b: &Interned, s: &Interned, active: ActiveSet) -> CostVector {
    let mut cv = CostVector::new(active);
    cv.set(Feature::Strings, set_cost(&b.strings, &s.strings));
    cv.set(Feature::Ints, set_cost(&b.ints, &s.ints));
    cv.set(Feature::Libcalls, set_cost(&b.libcalls, &s.libcalls));
    if active.contains(Feature::Callers) {
        cv.set(Feature::Callers, set_cost(&b.callers, &s.callers));
    }
    if active.contains(Feature::Callees) {
        cv.set(Feature::Callees, set_cost(&b.callees, &s.callees));
    }
    cv.set(Feature::NumArgs, arg_cost(b.num_args, s.num_args));
    cv
}

struct InternedPair {
    binary: Vec<Interned>,
    source: Vec<Interned>,
}

/// Interns both graphs. Source call-graph neighbours intern by name; a mapped
/// binary neighbour interns to the name of the source function it was matched
/// to (the caller, for pseudo-inlined targets) and an unmapped one to a fresh
/// id that no source name can share.
fn intern_graphs(bin: &FeatureGraph, src: &FeatureGraph, map: &AddressNameMap) -> InternedPair {
    let mut strings = Interner::default();
    let mut names = Interner::default();
    for id in src.ids() {
        names.intern(id);
    }
    let opaque_base = names.0.len() as u32;

    let intern_common = |f: &Function, strings: &mut Interner| Interned {
        strings: sorted(f.features.strings.iter().map(|s| strings.intern(s))),
        ints: f.features.ints.iter().copied().collect(),
        libcalls: sorted(f.features.libcalls.iter().map(|s| strings.intern(s))),
        callers: Vec::new(),
        callees: Vec::new(),
        num_args: f.features.num_args,
    };

    let source = src
        .iter()
        .map(|(_, f)| {
            let mut i = intern_common(f, &mut strings);
            i.callers = sorted(f.features.callers.iter().filter_map(|c| names.lookup(c)));
            i.callees = sorted(f.features.callees.iter().filter_map(|c| names.lookup(c)));
            i
        })
        .collect();

    let bin_index: HashMap<&str, u32> = bin
        .ids()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k as u32))
        .collect();
    let translate = |ids: &BTreeSet<String>| -> Vec<u32> {
        sorted(ids.iter().map(|b| {
            map.get(b)
                .and_then(|s| names.lookup(src.resolve_origin(s)))
                .unwrap_or_else(|| opaque_base + bin_index[b.as_str()])
        }))
    };
    let binary = bin
        .iter()
        .map(|(_, f)| {
            let mut i = intern_common(f, &mut strings);
            i.callers = translate(&f.features.callers);
            i.callees = translate(&f.features.callees);
            i
        })
        .collect();
    InternedPair { binary, source }
}

/// Weight of every (binary, source) pair for one matching round.
///
/// Round 0 leaves callers and callees out of the active feature set; from
/// round 1 on they are included, with binary neighbours translated through `map`.
pub fn build_weight_matrix(
    bin: &FeatureGraph,
    src: &FeatureGraph,
    wv: &WeightVector,
    map: &AddressNameMap,
    iteration: usize,
) -> PairWeights {
    let active = if iteration == 0 {
        ActiveSet::WITHOUT_CALL_GRAPH
    } else {
        ActiveSet::ALL
    };
    let interned = intern_graphs(bin, src, map);
    let data: Vec<f64> = interned
        .binary
        .par_iter()
        .flat_map_iter(|b| {
            interned
                .source
                .iter()
                .map(|s| pair_weight(&cost_vector(b, s, active), wv))
                .collect::<Vec<_>>()
        })
        .collect();
    let matrix = WeightMatrix::new(bin.len(), src.len(), data, wv.max_weight(active))
        .expect("pair weights are finite and non-negative");
    PairWeights {
        binary_ids: bin.ids().cloned().collect(),
        source_ids: src.ids().cloned().collect(),
        matrix,
        active,
    }
}

/// Labels every binary function from a solved assignment.
pub fn label_assignment(pw: &PairWeights, a: &Assignment) -> BTreeMap<String, Label> {
    let max_weight = pw.max_weight();
    pw.binary_ids
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let label = match a.col_of_row.get(r).copied().flatten() {
                None => Label::Unmatched { weight: None },
                Some(c) => {
                    let row = pw.matrix.row(r);
                    let weight = row[c];
                    if weight >= max_weight - TIE_EPSILON {
                        Label::Unmatched {
                            weight: Some(weight),
                        }
                    } else {
                        let tied: Vec<String> = row
                            .iter()
                            .enumerate()
                            .filter(|(_, w)| (**w - weight).abs() <= TIE_EPSILON)
                            .map(|(j, _)| pw.source_ids[j].clone())
                            .collect();
                        if tied.len() == 1 {
                            Label::Matched {
                                source: pw.source_ids[c].clone(),
                                weight,
                            }
                        } else {
                            Label::Multi {
                                candidates: tied,
                                weight,
                            }
                        }
                    }
                }
            };
            (id.clone(), label)
        })
        .collect()
}

/// Runs the full iterative matching of a binary graph against a source graph.
pub fn match_graphs(
    bin: &FeatureGraph,
    src: &FeatureGraph,
    wv: &WeightVector,
    opts: &MatchOptions,
) -> Result<MatchReport, MatchError> {
    wv.check()?;
    if bin.is_empty() {
        return Err(MatchError::EmptyBinary);
    }
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| MatchError::ThreadPool(e.to_string()))?;
            pool.install(|| run_rounds(bin, src, wv, opts.max_iterations.max(1)))
        }
        None => run_rounds(bin, src, wv, opts.max_iterations.max(1)),
    }
}

fn run_rounds(
    bin: &FeatureGraph,
    src: &FeatureGraph,
    wv: &WeightVector,
    max_iterations: usize,
) -> Result<MatchReport, MatchError> {
    if src.is_empty() {
        let labels = bin
            .ids()
            .map(|id| (id.clone(), Label::Unmatched { weight: None }))
            .collect();
        return Ok(MatchReport {
            labels,
            similarity: 0.0,
            iterations: 0,
            termination: Termination::Steady,
            average_weight: 0.0,
            trace: Vec::new(),
            pseudo_callers: BTreeMap::new(),
            tallies: None,
        });
    }

    let mut map = AddressNameMap::default();
    let mut history: Vec<BTreeMap<String, String>> = Vec::new();
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut last = None;

    for iteration in 0..max_iterations {
        let pw = build_weight_matrix(bin, src, wv, &map, iteration);
        let assignment = assignment::solve(&pw.matrix)?;
        let labels = label_assignment(&pw, &assignment);
        let next_map = AddressNameMap::from_labels(&labels);
        trace.push(IterationSnapshot {
            iteration,
            total_cost: assignment.total_cost,
            matched: next_map.0.clone(),
        });
        let average_weight = if assignment.pairs().count() == 0 {
            0.0
        } else {
            assignment.total_cost / assignment.pairs().count() as f64
        };
        last = Some((labels, average_weight));

        if history.last() == Some(&next_map.0) {
            termination = Termination::Steady;
            break;
        }
        if history.contains(&next_map.0) {
            termination = Termination::Cycle;
            break;
        }
        history.push(next_map.0.clone());
        map = next_map;
    }

    let (labels, average_weight) = last.expect("at least one round runs");
    let matched = labels.values().filter(|l| l.kind() == "matched").count();
    let pseudo_callers = labels
        .values()
        .flat_map(|l| match l {
            Label::Matched { source, .. } => vec![source.as_str()],
            Label::Multi { candidates, .. } => candidates.iter().map(String::as_str).collect(),
            Label::Unmatched { .. } => vec![],
        })
        .filter_map(|s| {
            src.get(s)
                .and_then(|f| f.pseudo_inline_origin.as_ref())
                .map(|o| (s.to_string(), o.caller.clone()))
        })
        .collect();
    Ok(MatchReport {
        similarity: matched as f64 / bin.len() as f64,
        iterations: trace.len(),
        termination,
        average_weight,
        labels,
        trace,
        pseudo_callers,
        tallies: None,
    })
}

/// Splits the labels into correct/incorrect unique matches, multi-matches and
/// unmatched functions. A match to a pseudo-inlined function counts as a match
/// to its caller.
pub fn score_against_ground_truth(
    report: &MatchReport,
    truth: &BTreeMap<String, String>,
) -> Result<Tallies, MatchError> {
    let mut t = Tallies {
        total: report.labels.len(),
        ..Default::default()
    };
    let resolve = |s: &str| -> String {
        report
            .pseudo_callers
            .get(s)
            .cloned()
            .unwrap_or_else(|| s.to_string())
    };
    for (b, label) in &report.labels {
        let expected = truth
            .get(b)
            .ok_or_else(|| MatchError::MissingTruth(b.clone()))?;
        match label {
            Label::Matched { source, .. } => {
                if &resolve(source) == expected {
                    t.c_matched += 1;
                } else {
                    t.ic_matched += 1;
                }
            }
            Label::Multi { candidates, .. } => {
                t.multi += 1;
                if candidates.iter().any(|c| &resolve(c) == expected) {
                    t.multi_with_truth += 1;
                }
            }
            Label::Unmatched { .. } => t.unmatched += 1,
        }
    }
    Ok(t)
}
