//! The end-to-end matching pipeline: whitelist, inline prediction, matching.

use crate::cost::WeightVector;
use crate::graph::{apply_whitelists, FeatureGraph, WhitelistConfig};
use crate::inline::{predict_all, synthesize_pseudo_inlined, InlineModel};
use crate::matcher::{match_graphs, MatchError, MatchOptions, MatchReport};

#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub weights: WeightVector,
    pub whitelist: WhitelistConfig,
    /// `None` skips pseudo-inlined function synthesis.
    pub inline_model: Option<InlineModel>,
    pub options: MatchOptions,
}

impl Pipeline {
    /// Source graph as the matcher sees it: whitelisted, plus pseudo-inlined functions.
    pub fn prepare_source(&self, src: &FeatureGraph) -> FeatureGraph {
        let src = apply_whitelists(src, &self.whitelist);
        match &self.inline_model {
            Some(model) => synthesize_pseudo_inlined(&src, &predict_all(&src, model)),
            None => src,
        }
    }

    pub fn prepare_binary(&self, bin: &FeatureGraph) -> FeatureGraph {
        apply_whitelists(bin, &self.whitelist)
    }

    pub fn run(&self, bin: &FeatureGraph, src: &FeatureGraph) -> Result<MatchReport, MatchError> {
        match_graphs(&self.prepare_binary(bin), &self.prepare_source(src), &self.weights, &self.options)
    }
}
