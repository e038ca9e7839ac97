//! Source-to-binary provenance matching.
//!
//! Functions extracted from a stripped binary are matched against functions
//! extracted from candidate source code by iterated minimum-cost bipartite
//! assignment over compiler-aware feature costs. The share of uniquely matched
//! binary functions is the similarity score.

pub mod assignment;
pub mod config;
pub mod cost;
pub mod graph;
pub mod inline;
pub mod learning;
pub mod matcher;
pub mod pipeline;
pub mod sim;
