//! Feature-graph data model.
//!
//! A [`FeatureGraph`] is one side (source or binary) of a provenance comparison:
//! every function carries its matching features, and source functions may also
//! carry the boolean predictive features used for inlining prediction. Graphs
//! are normalized on construction (reserved constants dropped, caller/callee
//! symmetry repaired) and treated as immutable afterwards.

pub mod dot;
pub mod json;
mod validate;
pub mod whitelist;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use validate::{validate, Violation, ViolationKind};
pub use whitelist::{apply_whitelists, WhitelistConfig};

/// Integer constants that carry no identifying information and are never kept.
pub const RESERVED_CONSTANTS: [i64; 3] = [-1, 0, 1];

/// Arity assumed for variadic source functions (x86-64 passes six arguments in registers).
pub const VARIADIC_ARITY: u8 = 6;

/// Suffix joining a caller and an inlined callee in a pseudo-inlined function id.
pub const PSEUDO_INLINE_SEPARATOR: &str = "+inl+";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Binary,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Source => f.write_str("source"),
            Side::Binary => f.write_str("binary"),
        }
    }
}

/// Declared argument count of a function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NumArgs {
    Count(u8),
    Variadic,
}

impl NumArgs {
    /// The count used for comparison: variadic functions behave as if they took six arguments.
    pub fn effective(self) -> u8 {
        match self {
            NumArgs::Count(n) => n,
            NumArgs::Variadic => VARIADIC_ARITY,
        }
    }
}

impl Default for NumArgs {
    fn default() -> Self {
        NumArgs::Count(0)
    }
}

impl fmt::Display for NumArgs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumArgs::Count(n) => write!(f, "{n}"),
            NumArgs::Variadic => f.write_str("variadic"),
        }
    }
}

impl std::str::FromStr for NumArgs {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "variadic" {
            return Ok(NumArgs::Variadic);
        }
        s.parse::<u8>()
            .map(NumArgs::Count)
            .map_err(|_| format!("expected an integer in 0..=255 or \"variadic\", got {s:?}"))
    }
}

impl Serialize for NumArgs {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            NumArgs::Count(n) => serializer.serialize_u8(*n),
            NumArgs::Variadic => serializer.serialize_str("variadic"),
        }
    }
}

impl<'de> Deserialize<'de> for NumArgs {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;

        impl serde::de::Visitor<'_> for Visitor {
            type Value = NumArgs;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an argument count in 0..=255 or \"variadic\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<NumArgs, E> {
                u8::try_from(v)
                    .map(NumArgs::Count)
                    .map_err(|_| E::custom(format!("argument count {v} out of range")))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<NumArgs, E> {
                u8::try_from(v)
                    .map(NumArgs::Count)
                    .map_err(|_| E::custom(format!("argument count {v} out of range")))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<NumArgs, E> {
                if v == "variadic" {
                    Ok(NumArgs::Variadic)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(Visitor)
    }
}

/// Features compared between a binary function and a source function.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchingFeatures {
    pub strings: BTreeSet<String>,
    pub ints: BTreeSet<i64>,
    pub libcalls: BTreeSet<String>,
    pub callers: BTreeSet<String>,
    pub callees: BTreeSet<String>,
    pub num_args: NumArgs,
}

/// The six source-only booleans used to predict inlining.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictiveFeature {
    Static,
    Extern,
    Virtual,
    Nested,
    Variadic,
    Recursive,
}

impl PredictiveFeature {
    pub const ALL: [PredictiveFeature; 6] = [
        PredictiveFeature::Static,
        PredictiveFeature::Extern,
        PredictiveFeature::Virtual,
        PredictiveFeature::Nested,
        PredictiveFeature::Variadic,
        PredictiveFeature::Recursive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictiveFeature::Static => "static",
            PredictiveFeature::Extern => "extern",
            PredictiveFeature::Virtual => "virtual",
            PredictiveFeature::Nested => "nested",
            PredictiveFeature::Variadic => "variadic",
            PredictiveFeature::Recursive => "recursive",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for PredictiveFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictiveFeatures {
    #[serde(rename = "static")]
    pub is_static: bool,
    #[serde(rename = "extern")]
    pub is_extern: bool,
    #[serde(rename = "virtual")]
    pub is_virtual: bool,
    #[serde(rename = "nested")]
    pub is_nested: bool,
    #[serde(rename = "variadic")]
    pub has_variadic_args: bool,
    #[serde(rename = "recursive")]
    pub is_recursive: bool,
}

impl PredictiveFeatures {
    pub fn get(&self, feature: PredictiveFeature) -> bool {
        match feature {
            PredictiveFeature::Static => self.is_static,
            PredictiveFeature::Extern => self.is_extern,
            PredictiveFeature::Virtual => self.is_virtual,
            PredictiveFeature::Nested => self.is_nested,
            PredictiveFeature::Variadic => self.has_variadic_args,
            PredictiveFeature::Recursive => self.is_recursive,
        }
    }

    pub fn set(&mut self, feature: PredictiveFeature, value: bool) {
        let slot = match feature {
            PredictiveFeature::Static => &mut self.is_static,
            PredictiveFeature::Extern => &mut self.is_extern,
            PredictiveFeature::Virtual => &mut self.is_virtual,
            PredictiveFeature::Nested => &mut self.is_nested,
            PredictiveFeature::Variadic => &mut self.has_variadic_args,
            PredictiveFeature::Recursive => &mut self.is_recursive,
        };
        *slot = value;
    }
}

/// Caller and callee that a pseudo-inlined function was synthesized from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InlineOrigin {
    pub caller: String,
    pub callee: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Function {
    pub features: MatchingFeatures,
    pub predictive: Option<PredictiveFeatures>,
    pub pseudo_inline_origin: Option<InlineOrigin>,
}

impl Function {
    pub fn is_pseudo(&self) -> bool {
        self.pseudo_inline_origin.is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("malformed JSON document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed DOT document at line {line}: {message}")]
    Dot { line: usize, message: String },
    #[error("DOT input must be a digraph")]
    NotDigraph,
    #[error("function id must be non-empty")]
    EmptyId,
    #[error("duplicate function id `{0}`")]
    DuplicateId(String),
    #[error("function `{function}`: {relation} `{reference}` is not a function in this graph")]
    UnknownReference {
        function: String,
        reference: String,
        relation: &'static str,
    },
    #[error("function `{0}`: predictive features are only allowed on source-side functions")]
    PredictiveOnBinary(String),
    #[error("function `{0}`: pseudo-inlined functions are only allowed on the source side")]
    PseudoOnBinary(String),
    #[error("function `{function}`: attribute `{attribute}` is missing")]
    MissingAttribute { function: String, attribute: String },
    #[error("function `{function}`: attribute `{attribute}`: {message}")]
    BadAttribute {
        function: String,
        attribute: String,
        message: String,
    },
}

/// A side-tagged function call graph with per-function features.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureGraph {
    side: Side,
    functions: BTreeMap<String, Function>,
}

impl FeatureGraph {
    pub fn empty(side: Side) -> Self {
        FeatureGraph {
            side,
            functions: BTreeMap::new(),
        }
    }

    /// Builds a normalized graph.
    ///
    /// Reserved integer constants are dropped and every declared call edge is
    /// mirrored into the other endpoint (union repair). A callee id that names
    /// no function but appears in the caller's library calls is treated as an
    /// external call and dropped from the callee set; any other dangling id is
    /// an error. Pseudo-inlined functions may point at real functions but are
    /// never linked back.
    pub fn from_functions<I>(side: Side, functions: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (String, Function)>,
    {
        let mut map = BTreeMap::new();
        for (id, function) in functions {
            if id.is_empty() {
                return Err(GraphError::EmptyId);
            }
            if side == Side::Binary {
                if function.predictive.is_some() {
                    return Err(GraphError::PredictiveOnBinary(id));
                }
                if function.pseudo_inline_origin.is_some() {
                    return Err(GraphError::PseudoOnBinary(id));
                }
            }
            if map.contains_key(&id) {
                return Err(GraphError::DuplicateId(id));
            }
            map.insert(id, function);
        }

        for function in map.values_mut() {
            function
                .features
                .ints
                .retain(|v| !RESERVED_CONSTANTS.contains(v));
        }

        let ids: BTreeSet<String> = map.keys().cloned().collect();
        for (id, function) in map.iter_mut() {
            let features = &mut function.features;
            let libcalls = &features.libcalls;
            let mut dangling = None;
            features.callees.retain(|callee| {
                if ids.contains(callee) {
                    true
                } else {
                    if !libcalls.contains(callee) && dangling.is_none() {
                        dangling = Some(callee.clone());
                    }
                    false
                }
            });
            if let Some(reference) = dangling {
                return Err(GraphError::UnknownReference {
                    function: id.clone(),
                    reference,
                    relation: "callee",
                });
            }
            if let Some(caller) = features.callers.iter().find(|c| !ids.contains(*c)) {
                return Err(GraphError::UnknownReference {
                    function: id.clone(),
                    reference: caller.clone(),
                    relation: "caller",
                });
            }
        }

        let pseudo: BTreeSet<String> = map
            .iter()
            .filter(|(_, f)| f.is_pseudo())
            .map(|(id, _)| id.clone())
            .collect();
        if !pseudo.is_empty() {
            // Real functions never reference pseudo-inlined ones.
            for (id, function) in map.iter_mut() {
                if let Some(reference) = function
                    .features
                    .callers
                    .iter()
                    .chain(function.features.callees.iter())
                    .find(|r| pseudo.contains(*r))
                {
                    if !pseudo.contains(id) {
                        return Err(GraphError::UnknownReference {
                            function: id.clone(),
                            reference: reference.clone(),
                            relation: "call-graph neighbour (pseudo-inlined)",
                        });
                    }
                }
            }
        }

        let mut mirrored: Vec<(String, String)> = Vec::new();
        for (id, function) in &map {
            if function.is_pseudo() {
                continue;
            }
            for callee in &function.features.callees {
                mirrored.push((id.clone(), callee.clone()));
            }
            for caller in &function.features.callers {
                mirrored.push((caller.clone(), id.clone()));
            }
        }
        for (caller, callee) in mirrored {
            if let Some(f) = map.get_mut(&caller) {
                f.features.callees.insert(callee.clone());
            }
            if let Some(f) = map.get_mut(&callee) {
                f.features.callers.insert(caller);
            }
        }

        Ok(FeatureGraph {
            side,
            functions: map,
        })
    }

    /// Wraps a function map without normalizing it. Used to build deliberately
    /// broken graphs for [`validate`].
    pub fn from_raw(side: Side, functions: BTreeMap<String, Function>) -> Self {
        FeatureGraph { side, functions }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Function> {
        self.functions.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.functions.contains_key(id)
    }

    /// Functions in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Function)> {
        self.functions.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.functions.keys()
    }

    pub fn functions(&self) -> &BTreeMap<String, Function> {
        &self.functions
    }

    pub fn into_functions(self) -> BTreeMap<String, Function> {
        self.functions
    }

    /// Resolves an id to the source function it stands for: pseudo-inlined
    /// functions resolve to their caller, everything else to itself.
    pub fn resolve_origin<'a>(&'a self, id: &'a str) -> &'a str {
        match self.functions.get(id).and_then(|f| f.pseudo_inline_origin.as_ref()) {
            Some(origin) => origin.caller.as_str(),
            None => id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn func(callers: &[&str], callees: &[&str]) -> Function {
        Function {
            features: MatchingFeatures {
                callers: callers.iter().map(|s| s.to_string()).collect(),
                callees: callees.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn symmetry_is_repaired_by_union() {
        let g = FeatureGraph::from_functions(
            Side::Source,
            vec![("f".into(), func(&[], &["g"])), ("g".into(), func(&[], &[]))],
        )
        .unwrap();
        assert!(g.get("g").unwrap().features.callers.contains("f"));
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn external_callee_listed_as_libcall_is_dropped() {
        let mut f = func(&[], &["printf"]);
        f.features.libcalls.insert("printf".into());
        let g = FeatureGraph::from_functions(Side::Source, vec![("f".into(), f)]).unwrap();
        assert!(g.get("f").unwrap().features.callees.is_empty());
    }

    #[test]
    fn unknown_callee_is_an_error() {
        let err = FeatureGraph::from_functions(Side::Source, vec![("f".into(), func(&[], &["nope"]))])
            .unwrap_err();
        assert!(matches!(err, GraphError::UnknownReference { ref function, .. } if function == "f"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = FeatureGraph::from_functions(
            Side::Binary,
            vec![("0x1".into(), func(&[], &[])), ("0x1".into(), func(&[], &[]))],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateId(id) if id == "0x1"));
    }

    #[test]
    fn predictive_features_rejected_on_binary_side() {
        let mut f = func(&[], &[]);
        f.predictive = Some(PredictiveFeatures::default());
        let err = FeatureGraph::from_functions(Side::Binary, vec![("0x1".into(), f)]).unwrap_err();
        assert!(matches!(err, GraphError::PredictiveOnBinary(_)));
    }

    #[test]
    fn variadic_counts_as_six() {
        assert_eq!(NumArgs::Variadic.effective(), 6);
        assert_eq!("variadic".parse::<NumArgs>().unwrap(), NumArgs::Variadic);
        assert_eq!("3".parse::<NumArgs>().unwrap(), NumArgs::Count(3));
        assert!("300".parse::<NumArgs>().is_err());
    }

    #[test]
    fn resolve_origin_follows_pseudo_functions() {
        let mut p = func(&[], &[]);
        p.pseudo_inline_origin = Some(InlineOrigin {
            caller: "f".into(),
            callee: "g".into(),
        });
        let g = FeatureGraph::from_functions(
            Side::Source,
            vec![
                ("f".into(), func(&[], &["g"])),
                ("g".into(), func(&[], &[])),
                ("f+inl+g".into(), p),
            ],
        )
        .unwrap();
        assert_eq!(g.resolve_origin("f+inl+g"), "f");
        assert_eq!(g.resolve_origin("g"), "g");
    }
}
