use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SimPair, SimProfile};
use crate::graph::{FeatureGraph, Function, MatchingFeatures, NumArgs, Side};
use crate::inline::merge_inlined;

use super::source::LIBC_POOL;

/// Runs the simulated compiler over a source graph.
///
/// Steps, in order: inlining, library-call substitution, string insertion,
/// integer-constant drops, argument-count corruption, compiler-inserted
/// library calls, random feature perturbation (mostly removals), and finally
/// renaming every function to a synthetic address.
pub fn compile(src: &FeatureGraph, p: &SimProfile) -> SimPair {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let (mut functions, inlined_edges) = inline_step(src, p, &mut rng);

    let substitutions: BTreeMap<&str, &str> = p
        .libcall_substitutions
        .iter()
        .map(|(from, to)| (from.as_str(), to.as_str()))
        .collect();
    if !substitutions.is_empty() {
        for f in functions.values_mut() {
            f.libcalls = f
                .libcalls
                .iter()
                .map(|l| substitutions.get(l.as_str()).map_or_else(|| l.clone(), |s| s.to_string()))
                .collect();
        }
    }

    // Pre-processor strings such as __FILE__ repeat across a translation unit.
    let file_names: Vec<String> = (0..3)
        .map(|k| format!("src/unit{k}_{:04x}.c", rng.gen::<u16>()))
        .collect();
    for f in functions.values_mut() {
        if rng.gen_bool(p.string_insertion_rate) {
            f.strings.insert(file_names.choose(&mut rng).unwrap().clone());
        }
    }

    for f in functions.values_mut() {
        let ints: Vec<i64> = f.ints.iter().copied().collect();
        for v in ints {
            if rng.gen_bool(p.int_constant_drop_rate) {
                f.ints.remove(&v);
            }
        }
    }

    for f in functions.values_mut() {
        if rng.gen_bool(p.arg_corruption_rate) {
            f.num_args = corrupt_args(f.num_args, &mut rng);
        }
    }

    if !p.compiler_functions.is_empty() {
        for f in functions.values_mut() {
            if rng.gen_bool(p.compiler_function_rate) {
                f.libcalls.insert(p.compiler_functions.choose(&mut rng).unwrap().clone());
            }
        }
    }

    let ids: Vec<String> = functions.keys().cloned().collect();
    for f in functions.values_mut() {
        if rng.gen_bool(p.feature_perturbation_rate) {
            perturb(f, &mut rng);
        }
    }
    for f in functions.values_mut() {
        f.callees.retain(|c| ids.binary_search(c).is_ok());
    }

    // Rename to addresses laid out in a shuffled order.
    let mut order = ids.clone();
    order.shuffle(&mut rng);
    let mut address: u64 = 0x401000;
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    for id in &order {
        rename.insert(id.clone(), format!("0x{address:x}"));
        address += 0x10 * rng.gen_range(2..64);
    }
    let mut truth = BTreeMap::new();
    let binary_functions = functions.into_iter().map(|(id, mut f)| {
        f.callers.clear();
        f.callees = f.callees.iter().map(|c| rename[c].clone()).collect();
        let new_id = rename[&id].clone();
        truth.insert(new_id.clone(), id);
        (
            new_id,
            Function {
                features: f,
                predictive: None,
                pseudo_inline_origin: None,
            },
        )
    });
    let binary = FeatureGraph::from_functions(Side::Binary, binary_functions.collect::<Vec<_>>())
        .expect("compiled graphs are well formed");

    SimPair {
        source: src.clone(),
        binary,
        truth,
        inlined_edges,
        profile: p.clone(),
        origin: None,
    }
}

fn corrupt_args(n: NumArgs, rng: &mut ChaCha8Rng) -> NumArgs {
    match n {
        NumArgs::Variadic => NumArgs::Count(rng.gen_range(1..=3)),
        NumArgs::Count(k) => {
            let next = match rng.gen_range(0..3) {
                0 => k.saturating_add(1),
                1 if k > 0 => k - 1,
                _ if k > 0 => k - rng.gen_range(1..=k),
                _ => k + 1,
            };
            NumArgs::Count(next)
        }
    }
}

/// One random change, removals three to one over additions.
fn perturb(f: &mut MatchingFeatures, rng: &mut ChaCha8Rng) {
    fn drop_one<T: Ord + Clone>(set: &mut BTreeSet<T>, rng: &mut ChaCha8Rng) {
        if !set.is_empty() {
            let k = rng.gen_range(0..set.len());
            let v = set.iter().nth(k).unwrap().clone();
            set.remove(&v);
        }
    }
    match rng.gen_range(0..12) {
        0..=2 => drop_one(&mut f.strings, rng),
        3..=5 => drop_one(&mut f.ints, rng),
        6..=7 => drop_one(&mut f.libcalls, rng),
        8 => drop_one(&mut f.callees, rng),
        _ => {
            f.libcalls.insert(LIBC_POOL[rng.gen_range(0..LIBC_POOL.len())].to_string());
        }
    }
}

/// Inlines call edges whose callee satisfies the profile's rule, bottom-up so
/// that nested inlining composes. Callees whose every call site was inlined
/// disappear. Returns the surviving functions' features and the inlined edges.
fn inline_step(
    src: &FeatureGraph,
    p: &SimProfile,
    rng: &mut ChaCha8Rng,
) -> (BTreeMap<String, MatchingFeatures>, Vec<(String, String)>) {
    let chosen: BTreeSet<&String> = src
        .iter()
        .filter(|(_, f)| !f.is_pseudo())
        .filter(|(_, f)| {
            let hit = f.predictive.as_ref().is_some_and(|pf| p.inline_rule.holds(pf));
            // Always draw so that the random stream does not depend on the rule.
            let coin = rng.gen_bool(p.inline_probability);
            hit && coin
        })
        .map(|(id, _)| id)
        .collect();

    let mut edges: BTreeMap<&String, Vec<&String>> = BTreeMap::new();
    for (caller, f) in src.iter().filter(|(_, f)| !f.is_pseudo()) {
        for callee in &f.features.callees {
            if callee == caller || !chosen.contains(callee) {
                continue;
            }
            if rng.gen_bool(p.partial_inline_rate) {
                continue;
            }
            edges.entry(caller).or_default().push(callee);
        }
    }

    // Depth-first post-order; an edge closing a cycle is not inlined.
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        New,
        Open,
        Done,
    }
    let mut state: BTreeMap<&String, State> = src.ids().map(|id| (id, State::New)).collect();
    let mut merged: BTreeMap<String, MatchingFeatures> = BTreeMap::new();
    let mut kept_edges: Vec<(String, String)> = Vec::new();

    fn visit<'a>(
        id: &'a String,
        src: &'a FeatureGraph,
        edges: &BTreeMap<&'a String, Vec<&'a String>>,
        state: &mut BTreeMap<&'a String, State>,
        merged: &mut BTreeMap<String, MatchingFeatures>,
        kept: &mut Vec<(String, String)>,
    ) {
        state.insert(id, State::Open);
        let mut features = src.get(id).unwrap().features.clone();
        for &callee in edges.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            match state[callee] {
                State::Open => continue,
                State::New => visit(callee, src, edges, state, merged, kept),
                State::Done => {}
            }
            features = merge_inlined(&features, callee, &merged[callee]);
            kept.push((id.clone(), callee.clone()));
        }
        merged.insert(id.clone(), features);
        state.insert(id, State::Done);
    }
    for id in src.ids() {
        if src.get(id).unwrap().is_pseudo() {
            continue;
        }
        if state[id] == State::New {
            visit(id, src, &edges, &mut state, &mut merged, &mut kept_edges);
        }
    }
    kept_edges.sort();

    let inlined_sites: BTreeSet<(&str, &str)> = kept_edges
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let removed: BTreeSet<String> = src
        .iter()
        .filter(|(id, f)| {
            // A self-call is never inlined, so recursive functions always survive.
            f.features.callers.iter().any(|c| c != *id)
                && f.features.callers.iter().all(|c| inlined_sites.contains(&(c.as_str(), id.as_str())))
        })
        .map(|(id, _)| id.clone())
        .collect();
    for id in &removed {
        merged.remove(id);
    }
    (merged, kept_edges)
}
