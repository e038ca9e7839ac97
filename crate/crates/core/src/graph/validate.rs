use std::fmt;

use super::{FeatureGraph, Side, RESERVED_CONSTANTS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyId,
    ReservedConstant(i64),
    DanglingCaller(String),
    DanglingCallee(String),
    /// `caller` lists `callee` as a callee (or vice versa) without the mirror entry.
    AsymmetricEdge { caller: String, callee: String },
    PredictiveOnBinary,
    PseudoOnBinary,
    ReferencesPseudo(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub function: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = &self.function;
        match &self.kind {
            ViolationKind::EmptyId => write!(f, "function id is empty"),
            ViolationKind::ReservedConstant(v) => {
                write!(f, "`{id}`: reserved integer constant {v} must not be a feature")
            }
            ViolationKind::DanglingCaller(c) => write!(f, "`{id}`: caller `{c}` does not exist"),
            ViolationKind::DanglingCallee(c) => write!(f, "`{id}`: callee `{c}` does not exist"),
            ViolationKind::AsymmetricEdge { caller, callee } => write!(
                f,
                "`{id}`: call edge `{caller}` -> `{callee}` is not recorded on both endpoints"
            ),
            ViolationKind::PredictiveOnBinary => {
                write!(f, "`{id}`: binary-side function carries predictive features")
            }
            ViolationKind::PseudoOnBinary => {
                write!(f, "`{id}`: binary-side function is marked pseudo-inlined")
            }
            ViolationKind::ReferencesPseudo(p) => {
                write!(f, "`{id}`: references pseudo-inlined function `{p}`")
            }
        }
    }
}

/// Checks every graph invariant. An empty result means the graph is valid.
///
/// Pseudo-inlined functions are match targets only: their own caller and
/// callee sets are checked for dangling ids but not for symmetry.
pub fn validate(graph: &FeatureGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |function: &str, kind| {
        out.push(Violation {
            function: function.to_string(),
            kind,
        })
    };

    for (id, f) in graph.iter() {
        if id.is_empty() {
            push(id, ViolationKind::EmptyId);
        }
        for v in f.features.ints.iter().filter(|v| RESERVED_CONSTANTS.contains(v)) {
            push(id, ViolationKind::ReservedConstant(*v));
        }
        if graph.side() == Side::Binary {
            if f.predictive.is_some() {
                push(id, ViolationKind::PredictiveOnBinary);
            }
            if f.is_pseudo() {
                push(id, ViolationKind::PseudoOnBinary);
            }
        }
        let pseudo = f.is_pseudo();
        for callee in &f.features.callees {
            match graph.get(callee) {
                None => push(id, ViolationKind::DanglingCallee(callee.clone())),
                Some(target) if target.is_pseudo() && !pseudo => {
                    push(id, ViolationKind::ReferencesPseudo(callee.clone()))
                }
                Some(target) if !pseudo && !target.features.callers.contains(id) => push(
                    id,
                    ViolationKind::AsymmetricEdge {
                        caller: id.clone(),
                        callee: callee.clone(),
                    },
                ),
                Some(_) => {}
            }
        }
        for caller in &f.features.callers {
            match graph.get(caller) {
                None => push(id, ViolationKind::DanglingCaller(caller.clone())),
                Some(source) if source.is_pseudo() && !pseudo => {
                    push(id, ViolationKind::ReferencesPseudo(caller.clone()))
                }
                Some(source) if !pseudo && !source.features.callees.contains(id) => push(
                    id,
                    ViolationKind::AsymmetricEdge {
                        caller: caller.clone(),
                        callee: id.clone(),
                    },
                ),
                Some(_) => {}
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::graph::{Function, MatchingFeatures};

    fn raw(entries: Vec<(&str, Function)>) -> FeatureGraph {
        let map: BTreeMap<String, Function> =
            entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        FeatureGraph::from_raw(Side::Source, map)
    }

    #[test]
    fn reserved_constant_is_flagged() {
        let mut f = Function::default();
        f.features.ints.insert(0);
        f.features.ints.insert(42);
        let v = validate(&raw(vec![("f", f)]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::ReservedConstant(0));
        assert_eq!(v[0].function, "f");
    }

    #[test]
    fn asymmetric_edge_names_both_endpoints() {
        let f = Function {
            features: MatchingFeatures {
                callees: ["g".to_string()].into(),
                ..Default::default()
            },
            ..Default::default()
        };
        let v = validate(&raw(vec![("f", f), ("g", Function::default())]));
        assert_eq!(v.len(), 1);
        assert_eq!(
            v[0].kind,
            ViolationKind::AsymmetricEdge {
                caller: "f".into(),
                callee: "g".into()
            }
        );
        let msg = v[0].to_string();
        assert!(msg.contains("`f`") && msg.contains("`g`"));
    }

    #[test]
    fn empty_graph_is_valid() {
        assert!(validate(&FeatureGraph::empty(Side::Binary)).is_empty());
    }
}
