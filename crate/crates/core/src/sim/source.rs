use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{FeatureGraph, Function, MatchingFeatures, NumArgs, PredictiveFeatures, Side};

const VERBS: [&str; 16] = [
    "parse", "read", "write", "init", "free", "find", "load", "emit", "check", "copy", "scan",
    "hash", "open", "close", "push", "pop",
];
const NOUNS: [&str; 16] = [
    "header", "buffer", "token", "entry", "table", "node", "file", "block", "state", "config",
    "list", "record", "stream", "field", "index", "frame",
];

/// Library calls every generated program draws from, most common first.
pub const LIBC_POOL: [&str; 32] = [
    "printf", "malloc", "free", "memcpy", "strlen", "memset", "fprintf", "strcmp", "puts",
    "fopen", "fclose", "exit", "calloc", "realloc", "strcpy", "strncpy", "snprintf", "fwrite",
    "fread", "abort", "strchr", "strtol", "qsort", "getenv", "atoi", "fputs", "putchar",
    "vsprintf", "sprintf", "memmove", "fflush", "perror",
];

/// Strings that show up in many unrelated programs.
pub const COMMON_STRINGS: [&str; 12] = [
    "%s\n", "%d\n", "error", "usage: %s\n", "out of memory", "r", "w", "rb", "%s: %s\n", "\n",
    "-", "ok",
];

/// Knobs for random source programs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceShape {
    /// Share of functions that reference at least one string.
    pub string_fraction: f64,
    /// Mean number of program-specific strings in a function that has strings.
    pub mean_strings: f64,
    /// Chance that a string reference comes from the shared pool.
    pub common_string_rate: f64,
    pub int_fraction: f64,
    pub mean_ints: f64,
    /// Chance that an integer comes from the small shared range instead of being program specific.
    pub common_int_rate: f64,
    pub libcall_fraction: f64,
    pub mean_libcalls: f64,
    pub mean_callees: f64,
    /// Chance that a call edge points upward, against the mostly acyclic layering.
    pub back_edge_rate: f64,
    pub recursive_rate: f64,
    pub variadic_rate: f64,
    pub static_rate: f64,
    pub virtual_rate: f64,
    pub nested_rate: f64,
}

impl Default for SourceShape {
    fn default() -> Self {
        SourceShape {
            string_fraction: 0.55,
            mean_strings: 2.0,
            common_string_rate: 0.1,
            int_fraction: 0.6,
            mean_ints: 2.5,
            common_int_rate: 0.15,
            libcall_fraction: 0.7,
            mean_libcalls: 2.0,
            mean_callees: 2.0,
            back_edge_rate: 0.04,
            recursive_rate: 0.05,
            variadic_rate: 0.03,
            static_rate: 0.5,
            virtual_rate: 0.05,
            nested_rate: 0.05,
        }
    }
}

/// Count drawn around `mean` with a geometric tail; at least one.
fn positive_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    let p = 1.0 / mean.max(1.0);
    let mut n = 1;
    while n < 32 && !rng.gen_bool(p) {
        n += 1;
    }
    n
}

/// Index into a list whose popularity falls off roughly as 1/rank.
fn zipf_index(rng: &mut ChaCha8Rng, len: usize) -> usize {
    let u: f64 = rng.gen();
    let x = ((len as f64 + 1.0).ln() * u).exp() - 1.0;
    (x as usize).min(len - 1)
}

fn random_token(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ";
    let len = rng.gen_range(6..18);
    (0..len)
        .map(|_| *ALPHABET.choose(rng).unwrap() as char)
        .collect::<String>()
        .trim()
        .to_string()
}

pub fn generate_source(seed: u64, n_functions: usize, shape: &SourceShape) -> FeatureGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_functions.max(1);

    let ids: Vec<String> = (0..n)
        .map(|i| {
            if i == 0 {
                "main".to_string()
            } else {
                let v = VERBS.choose(&mut rng).unwrap();
                let o = NOUNS.choose(&mut rng).unwrap();
                format!("{v}_{o}_{i}")
            }
        })
        .collect();

    let mut functions: Vec<Function> = Vec::with_capacity(n);
    let mut used_strings: BTreeSet<String> = BTreeSet::new();
    let mut used_ints: BTreeSet<i64> = BTreeSet::new();
    for _ in 0..n {
        let mut f = MatchingFeatures::default();
        if rng.gen_bool(shape.string_fraction) {
            for _ in 0..positive_count(&mut rng, shape.mean_strings) {
                if rng.gen_bool(shape.common_string_rate) {
                    f.strings.insert(COMMON_STRINGS[zipf_index(&mut rng, COMMON_STRINGS.len())].to_string());
                } else {
                    let mut token = random_token(&mut rng);
                    while token.is_empty() || !used_strings.insert(token.clone()) {
                        token = random_token(&mut rng);
                    }
                    f.strings.insert(token);
                }
            }
        }
        if rng.gen_bool(shape.int_fraction) {
            for _ in 0..positive_count(&mut rng, shape.mean_ints) {
                if rng.gen_bool(shape.common_int_rate) {
                    f.ints.insert(rng.gen_range(2..=16));
                } else {
                    let mut v = rng.gen_range(17..1_000_000);
                    while !used_ints.insert(v) {
                        v = rng.gen_range(17..1_000_000);
                    }
                    f.ints.insert(v);
                }
            }
        }
        if rng.gen_bool(shape.libcall_fraction) {
            for _ in 0..positive_count(&mut rng, shape.mean_libcalls) {
                f.libcalls.insert(LIBC_POOL[zipf_index(&mut rng, LIBC_POOL.len())].to_string());
            }
        }
        let variadic = rng.gen_bool(shape.variadic_rate);
        f.num_args = if variadic {
            NumArgs::Variadic
        } else {
            NumArgs::Count([0, 1, 1, 2, 2, 2, 3, 3, 4, 5][rng.gen_range(0..10)])
        };
        let is_static = rng.gen_bool(shape.static_rate);
        let predictive = PredictiveFeatures {
            is_static,
            is_extern: !is_static && rng.gen_bool(0.8),
            is_virtual: rng.gen_bool(shape.virtual_rate),
            is_nested: rng.gen_bool(shape.nested_rate),
            has_variadic_args: variadic,
            is_recursive: false,
        };
        functions.push(Function {
            features: f,
            predictive: Some(predictive),
            pseudo_inline_origin: None,
        });
    }

    // Layered call graph: function i mostly calls functions with larger
    // indices, preferring callees that are already popular.
    let mut popularity = vec![1usize; n];
    let mut called = vec![false; n];
    for i in 0..n {
        let later = n - i - 1;
        if later == 0 && i == 0 {
            break;
        }
        let mut degree = if rng.gen_bool(0.25) { 0 } else { positive_count(&mut rng, shape.mean_callees) };
        if i == 0 {
            degree = degree.max(3);
        }
        for _ in 0..degree {
            let target = if later == 0 || rng.gen_bool(shape.back_edge_rate) {
                rng.gen_range(0..n)
            } else {
                let total: usize = popularity[i + 1..].iter().sum();
                let mut pick = rng.gen_range(0..total);
                let mut t = i + 1;
                while pick >= popularity[t] {
                    pick -= popularity[t];
                    t += 1;
                }
                t
            };
            if target == i {
                continue;
            }
            if functions[i].features.callees.insert(ids[target].clone()) {
                popularity[target] += 1;
                called[target] = true;
            }
        }
        if rng.gen_bool(shape.recursive_rate) {
            functions[i].features.callees.insert(ids[i].clone());
        }
    }
    // Every function other than main gets at least one caller, like real code.
    for t in 1..n {
        if !called[t] {
            let caller = rng.gen_range(0..t);
            functions[caller].features.callees.insert(ids[t].clone());
        }
    }
    for (i, f) in functions.iter_mut().enumerate() {
        let recursive = f.features.callees.contains(&ids[i]);
        if let Some(p) = f.predictive.as_mut() {
            p.is_recursive = recursive;
        }
    }

    let map: BTreeMap<String, Function> = ids.into_iter().zip(functions).collect();
    FeatureGraph::from_functions(Side::Source, map).expect("generated graphs are well formed")
}
