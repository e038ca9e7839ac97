//! Per-feature costs and the weighted pair cost.
//!
//! Set features use a directional Jaccard variant: when the binary set is a
//! strict subset of the source set the cost counts what the compiler would have
//! had to remove, otherwise it counts binary elements missing from the source.
//! The argument count is a 0/1 cost. A pair whose active costs are all 1 has
//! nothing in common and gets `MAX_WEIGHT`, one more than the sum of the
//! active coefficients.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::NumArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Strings,
    Ints,
    Libcalls,
    Callers,
    Callees,
    NumArgs,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Strings,
        Feature::Ints,
        Feature::Libcalls,
        Feature::Callers,
        Feature::Callees,
        Feature::NumArgs,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Strings => "string_constants",
            Feature::Ints => "integer_constants",
            Feature::Libcalls => "library_calls",
            Feature::Callers => "fcg_callers",
            Feature::Callees => "fcg_callees",
            Feature::NumArgs => "num_function_args",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which features take part in a weight computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActiveSet(u8);

impl ActiveSet {
    pub const ALL: ActiveSet = ActiveSet(0b11_1111);
    /// Everything except callers and callees, used before any address/name mapping exists.
    pub const WITHOUT_CALL_GRAPH: ActiveSet = ActiveSet(
        0b11_1111 & !(1 << Feature::Callers as u8) & !(1 << Feature::Callees as u8),
    );

    pub fn contains(self, feature: Feature) -> bool {
        self.0 & (1 << feature.index()) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl FromIterator<Feature> for ActiveSet {
    fn from_iter<I: IntoIterator<Item = Feature>>(iter: I) -> Self {
        ActiveSet(iter.into_iter().fold(0, |acc, f| acc | 1 << f.index()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WeightError {
    #[error("weight `{feature}` must be finite and non-negative, got {value}")]
    Invalid { feature: &'static str, value: f64 },
    #[error("malformed weight file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-feature coefficients. `cfg_branches` is accepted for config
/// compatibility but never applied: graphs carry no control-flow feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightVector {
    #[serde(rename = "string_constants")]
    pub strings: f64,
    #[serde(rename = "integer_constants")]
    pub ints: f64,
    #[serde(rename = "library_calls")]
    pub libcalls: f64,
    #[serde(rename = "fcg_callers")]
    pub callers: f64,
    #[serde(rename = "fcg_callees")]
    pub callees: f64,
    #[serde(rename = "num_function_args")]
    pub num_args: f64,
    #[serde(rename = "cfg_branches", default)]
    pub cfg_branches: f64,
}

impl Default for WeightVector {
    /// Shipped default coefficients.
    fn default() -> Self {
        WeightVector {
            strings: 1.469,
            ints: 0.6315,
            libcalls: 0.2828,
            callers: 2.9293,
            callees: 2.9293,
            num_args: 0.9296,
            cfg_branches: 0.0002,
        }
    }
}

impl WeightVector {
    pub fn from_json(bytes: &[u8]) -> Result<Self, WeightError> {
        let w: WeightVector = serde_json::from_slice(bytes)?;
        w.check()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("weights always serialize");
        s.push('\n');
        s
    }

    pub fn check(&self) -> Result<(), WeightError> {
        let entries = Feature::ALL
            .iter()
            .map(|f| (f.name(), self.get(*f)))
            .chain(std::iter::once(("cfg_branches", self.cfg_branches)));
        for (feature, value) in entries {
            if !value.is_finite() || value < 0.0 {
                return Err(WeightError::Invalid { feature, value });
            }
        }
        Ok(())
    }

    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Strings => self.strings,
            Feature::Ints => self.ints,
            Feature::Libcalls => self.libcalls,
            Feature::Callers => self.callers,
            Feature::Callees => self.callees,
            Feature::NumArgs => self.num_args,
        }
    }

    pub fn set(&mut self, feature: Feature, value: f64) {
        match feature {
            Feature::Strings => self.strings = value,
            Feature::Ints => self.ints = value,
            Feature::Libcalls => self.libcalls = value,
            Feature::Callers => self.callers = value,
            Feature::Callees => self.callees = value,
            Feature::NumArgs => self.num_args = value,
        }
    }

    pub fn active_sum(&self, active: ActiveSet) -> f64 {
        active.iter().map(|f| self.get(f)).sum()
    }

    /// Weight of a pair with nothing in common; exceeds every attainable weighted sum.
    pub fn max_weight(&self, active: ActiveSet) -> f64 {
        self.active_sum(active) + 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostVector {
    pub costs: [f64; 6],
    pub active: ActiveSet,
}

impl CostVector {
    pub fn new(active: ActiveSet) -> Self {
        CostVector {
            costs: [0.0; 6],
            active,
        }
    }

    pub fn get(&self, feature: Feature) -> f64 {
        self.costs[feature.index()]
    }

    pub fn set(&mut self, feature: Feature, cost: f64) {
        self.costs[feature.index()] = cost;
    }
}

/// Which case of the directional cost produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostBranch {
    BothEmpty,
    BinarySubsetOfSource,
    Otherwise,
}

/// Intersection-over-union; two empty sets count as identical.
pub fn standard_jaccard<T: Ord>(binary: &BTreeSet<T>, source: &BTreeSet<T>) -> f64 {
    let common = binary.intersection(source).count();
    let union = binary.len() + source.len() - common;
    if union == 0 {
        1.0
    } else {
        common as f64 / union as f64
    }
}

/// Directional cost from set sizes and the size of their intersection.
pub fn cost_from_overlap(binary_len: usize, source_len: usize, common: usize) -> (f64, CostBranch) {
    debug_assert!(common <= binary_len && common <= source_len);
    if binary_len == 0 && source_len == 0 {
        (1.0, CostBranch::BothEmpty)
    } else if common == binary_len && binary_len < source_len {
        (
            (source_len - common) as f64 / source_len as f64,
            CostBranch::BinarySubsetOfSource,
        )
    } else {
        (
            (binary_len - common) as f64 / binary_len as f64,
            CostBranch::Otherwise,
        )
    }
}

pub fn set_feature_cost_with_branch<T: Ord>(
    binary: &BTreeSet<T>,
    source: &BTreeSet<T>,
) -> (f64, CostBranch) {
    let common = binary.intersection(source).count();
    cost_from_overlap(binary.len(), source.len(), common)
}

pub fn set_feature_cost<T: Ord>(binary: &BTreeSet<T>, source: &BTreeSet<T>) -> f64 {
    set_feature_cost_with_branch(binary, source).0
}

pub fn arg_cost(binary: NumArgs, source: NumArgs) -> f64 {
    if binary.effective() == source.effective() {
        0.0
    } else {
        1.0
    }
}

/// Weighted sum of the active costs, or `MAX_WEIGHT` when every active cost is 1.
pub fn pair_weight(cv: &CostVector, wv: &WeightVector) -> f64 {
    if cv.active.iter().all(|f| cv.get(f) >= 1.0) {
        return wv.max_weight(cv.active);
    }
    cv.active.iter().map(|f| wv.get(f) * cv.get(f)).sum()
}
