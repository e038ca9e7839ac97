//! Synthetic programs and a parameterized stand-in for an optimizing compiler.
//!
//! `generate_source` draws a random source feature graph; `compile` turns it
//! into a binary-side graph the way optimization distorts features (inlining,
//! library-call substitution, inserted strings, folded constants, misread
//! argument counts, renaming to addresses) and records the ground truth.

mod compile;
mod source;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::json::{ingest_json, to_json};
use crate::graph::{FeatureGraph, GraphError, PredictiveFeature, PredictiveFeatures};

pub use compile::compile;
pub use source::{generate_source, SourceShape, COMMON_STRINGS, LIBC_POOL};

/// Library calls a compiler emits on its own, e.g. for stack protection.
pub const DEFAULT_COMPILER_FUNCTIONS: [&str; 2] = ["__stack_chk_fail", "__stack_chk_fail_local"];

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{name} = {value} is outside [0, 1]")]
    BadRate { name: &'static str, value: f64 },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("malformed {path}: {source}")]
    Graph { path: String, source: GraphError },
}

/// One literal of a conjunctive inlining rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Literal {
    pub feature: PredictiveFeature,
    pub value: bool,
}

/// Hidden ground-truth inlining rule: all literals must hold.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineRule {
    pub all_of: Vec<Literal>,
}

impl InlineRule {
    pub fn new(literals: &[(PredictiveFeature, bool)]) -> Self {
        InlineRule {
            all_of: literals
                .iter()
                .map(|&(feature, value)| Literal { feature, value })
                .collect(),
        }
    }

    pub fn holds(&self, p: &PredictiveFeatures) -> bool {
        self.all_of.iter().all(|l| p.get(l.feature) == l.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimProfile {
    pub seed: u64,
    pub inline_rule: InlineRule,
    /// Chance that a function satisfying the rule is inlined.
    pub inline_probability: f64,
    /// Chance that one call site of an inlined function keeps the call instead.
    pub partial_inline_rate: f64,
    /// Library calls rewritten to cheaper equivalents, `(from, to)`.
    pub libcall_substitutions: Vec<(String, String)>,
    pub string_insertion_rate: f64,
    pub int_constant_drop_rate: f64,
    pub arg_corruption_rate: f64,
    pub compiler_functions: Vec<String>,
    /// Chance that a function gains a call to one of `compiler_functions`.
    pub compiler_function_rate: f64,
    pub feature_perturbation_rate: f64,
}

impl SimProfile {
    /// A compiler that changes nothing except names.
    pub fn identity(seed: u64) -> Self {
        SimProfile {
            seed,
            inline_rule: InlineRule::default(),
            inline_probability: 0.0,
            partial_inline_rate: 0.0,
            libcall_substitutions: Vec::new(),
            string_insertion_rate: 0.0,
            int_constant_drop_rate: 0.0,
            arg_corruption_rate: 0.0,
            compiler_functions: Vec::new(),
            compiler_function_rate: 0.0,
            feature_perturbation_rate: 0.0,
        }
    }

    pub fn o2_like(seed: u64) -> Self {
        use PredictiveFeature::*;
        SimProfile {
            seed,
            inline_rule: InlineRule::new(&[(Static, true), (Recursive, false), (Variadic, false), (Virtual, false)]),
            inline_probability: 0.85,
            partial_inline_rate: 0.1,
            libcall_substitutions: vec![("printf".into(), "puts".into()), ("fprintf".into(), "fputs".into())],
            string_insertion_rate: 0.05,
            int_constant_drop_rate: 0.1,
            arg_corruption_rate: 0.36,
            compiler_functions: DEFAULT_COMPILER_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            compiler_function_rate: 0.1,
            feature_perturbation_rate: 0.15,
        }
    }

    pub fn o3_like(seed: u64) -> Self {
        use PredictiveFeature::*;
        SimProfile {
            inline_rule: InlineRule::new(&[(Static, true), (Recursive, false), (Variadic, false)]),
            inline_probability: 0.9,
            partial_inline_rate: 0.05,
            string_insertion_rate: 0.08,
            int_constant_drop_rate: 0.15,
            compiler_function_rate: 0.15,
            feature_perturbation_rate: 0.2,
            ..SimProfile::o2_like(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "identity" => Some(Self::identity(seed)),
            "o2" | "o2-like" => Some(Self::o2_like(seed)),
            "o3" | "o3-like" => Some(Self::o3_like(seed)),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        for (name, value) in [
            ("inline_probability", self.inline_probability),
            ("partial_inline_rate", self.partial_inline_rate),
            ("string_insertion_rate", self.string_insertion_rate),
            ("int_constant_drop_rate", self.int_constant_drop_rate),
            ("arg_corruption_rate", self.arg_corruption_rate),
            ("compiler_function_rate", self.compiler_function_rate),
            ("feature_perturbation_rate", self.feature_perturbation_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::BadRate { name, value });
            }
        }
        Ok(())
    }
}

/// How a source graph was generated, so a pair can be rebuilt from its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceOrigin {
    pub seed: u64,
    pub n_functions: usize,
    pub shape: SourceShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceOrigin>,
    pub profile: SimProfile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimPair {
    pub source: FeatureGraph,
    pub binary: FeatureGraph,
    /// Binary id to the source function it was compiled from.
    pub truth: BTreeMap<String, String>,
    /// Call edges `(caller, callee)` that were inlined, sorted.
    pub inlined_edges: Vec<(String, String)>,
    pub profile: SimProfile,
    pub origin: Option<SourceOrigin>,
}

impl SimPair {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            source: self.origin.clone(),
            profile: self.profile.clone(),
        }
    }

    /// Source functions inlined at one or more call sites.
    pub fn inlined_functions(&self) -> std::collections::BTreeSet<&str> {
        self.inlined_edges.iter().map(|(_, callee)| callee.as_str()).collect()
    }
}

/// Generates a source graph and compiles it.
pub fn simulate(origin: SourceOrigin, profile: &SimProfile) -> Result<SimPair, SimError> {
    profile.check()?;
    let src = generate_source(origin.seed, origin.n_functions, &origin.shape);
    let mut pair = compile(&src, profile);
    pair.origin = Some(origin);
    Ok(pair)
}

/// Rebuilds a pair from a manifest that records its source origin.
pub fn replay(manifest: &Manifest) -> Option<Result<SimPair, SimError>> {
    let origin = manifest.source.clone()?;
    Some(simulate(origin, &manifest.profile))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), SimError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serializes");
    s.push('\n');
    s
}

/// Writes `source.json`, `binary.json`, `truth.json`, `profile.json` and
/// `inlined.json` into `dir`, creating it if needed.
pub fn emit_pair(sp: &SimPair, dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|source| SimError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write(dir, "source.json", &to_json(&sp.source))?;
    write(dir, "binary.json", &to_json(&sp.binary))?;
    write(dir, "truth.json", &pretty(&sp.truth))?;
    write(dir, "profile.json", &pretty(&sp.manifest()))?;
    write(dir, "inlined.json", &pretty(&sp.inlined_edges))?;
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>, SimError> {
    let path = dir.join(name);
    fs::read(&path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T, SimError> {
    serde_json::from_slice(&read(dir, name)?).map_err(|source| SimError::Json {
        path: dir.join(name).display().to_string(),
        source,
    })
}

/// Reads back a directory written by [`emit_pair`].
pub fn load_pair(dir: &Path) -> Result<SimPair, SimError> {
    let graph = |name: &str| -> Result<FeatureGraph, SimError> {
        ingest_json(&read(dir, name)?).map_err(|source| SimError::Graph {
            path: dir.join(name).display().to_string(),
            source,
        })
    };
    let manifest: Manifest = read_json(dir, "profile.json")?;
    let inlined_edges = if dir.join("inlined.json").exists() {
        read_json(dir, "inlined.json")?
    } else {
        Vec::new()
    };
    Ok(SimPair {
        source: graph("source.json")?,
        binary: graph("binary.json")?,
        truth: read_json(dir, "truth.json")?,
        inlined_edges,
        profile: manifest.profile,
        origin: manifest.source,
    })
}
