//! Whitelists for compiler-introduced differences.
//!
//! Library-call substitutions (e.g. `printf` compiled to `puts`) are
//! neutralized by renaming every member of a substitution class to its
//! lexicographically least name. Functions the compiler inserts on its own,
//! such as `__stack_chk_fail`, are removed from binary graphs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FeatureGraph, Side};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitelistConfig {
    /// Unordered pairs of equivalent library calls; equivalence is transitive.
    #[serde(default)]
    pub libcall_substitutions: Vec<(String, String)>,
    #[serde(default)]
    pub compiler_inserted_functions: BTreeSet<String>,
}

impl WhitelistConfig {
    /// Maps every name that belongs to a substitution class to the class's least member.
    pub fn canonical_names(&self) -> BTreeMap<String, String> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (a, b) in &self.libcall_substitutions {
            for name in [a.as_str(), b.as_str()] {
                let next = index.len();
                index.entry(name).or_insert(next);
            }
        }
        let mut parent: Vec<usize> = (0..index.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (a, b) in &self.libcall_substitutions {
            let ra = find(&mut parent, index[a.as_str()]);
            let rb = find(&mut parent, index[b.as_str()]);
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let mut least: BTreeMap<usize, &str> = BTreeMap::new();
        // BTreeMap iterates names in order, so the first name seen per class is the least.
        for (&name, &i) in &index {
            let root = find(&mut parent, i);
            least.entry(root).or_insert(name);
        }
        index
            .iter()
            .map(|(&name, &i)| {
                let root = find(&mut parent, i);
                (name.to_string(), least[&root].to_string())
            })
            .collect()
    }
}

pub fn apply_whitelists(graph: &FeatureGraph, config: &WhitelistConfig) -> FeatureGraph {
    let canonical = config.canonical_names();
    let side = graph.side();
    let removed: BTreeSet<&String> = if side == Side::Binary {
        graph
            .ids()
            .filter(|id| config.compiler_inserted_functions.contains(*id))
            .collect()
    } else {
        BTreeSet::new()
    };

    let functions = graph
        .iter()
        .filter(|(id, _)| !removed.contains(id))
        .map(|(id, f)| {
            let mut f = f.clone();
            let libcalls = std::mem::take(&mut f.features.libcalls);
            f.features.libcalls = libcalls
                .into_iter()
                .filter_map(|name| {
                    let canon = canonical.get(&name).cloned().unwrap_or_else(|| name.clone());
                    let inserted = side == Side::Binary
                        && (config.compiler_inserted_functions.contains(&name)
                            || config.compiler_inserted_functions.contains(&canon));
                    (!inserted).then_some(canon)
                })
                .collect();
            f.features.callers.retain(|c| !removed.contains(c));
            f.features.callees.retain(|c| !removed.contains(c));
            (id.clone(), f)
        })
        .collect();
    FeatureGraph::from_raw(side, functions)
}
