//! Confidence-rated boosting of single-feature stumps into an additive inline model.

use serde::{Deserialize, Serialize};

use super::{InlineExample, InlineLabel, LearnError};
use crate::graph::PredictiveFeature;
use crate::inline::{score_function, InlineModel, Rule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    pub rounds: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig { rounds: 8 }
    }
}

fn y(e: &InlineExample) -> f64 {
    if e.label == InlineLabel::Inlined {
        1.0
    } else {
        -1.0
    }
}

/// Each round picks the stump minimizing the normalizer
/// `Z = 2 Σ_block sqrt(W+ W-)`, scores both of its branches with
/// `½ ln((W+ + ε) / (W- + ε))`, and reweights. The false branch's score is
/// folded into the base so each stump becomes one `feature = true` rule.
pub fn train_inliner(corpus: &[InlineExample], cfg: &BoostConfig) -> Result<InlineModel, LearnError> {
    let positives = corpus.iter().filter(|e| e.label == InlineLabel::Inlined).count();
    if positives == 0 || positives == corpus.len() {
        return Err(LearnError::Degenerate("inlining corpus needs both labels"));
    }
    let n = corpus.len() as f64;
    let eps = 1.0 / (2.0 * n);
    let half_log = |wp: f64, wn: f64| 0.5 * ((wp + eps) / (wn + eps)).ln();

    let mut weights = vec![1.0 / n; corpus.len()];
    let (wp, wn) = class_weights(corpus, &weights, |_| true);
    let mut base = half_log(wp, wn);
    reweight(corpus, &mut weights, |_| base);

    let mut rules: Vec<Rule> = Vec::new();
    for _ in 0..cfg.rounds.max(1) {
        let mut best: Option<(f64, PredictiveFeature)> = None;
        for feature in PredictiveFeature::ALL {
            let (tp, tn) = class_weights(corpus, &weights, |e| e.predictive.get(feature));
            let (fp, fn_) = class_weights(corpus, &weights, |e| !e.predictive.get(feature));
            let z = 2.0 * ((tp * tn).sqrt() + (fp * fn_).sqrt());
            if best.is_none_or(|(bz, _)| z < bz - 1e-15) {
                best = Some((z, feature));
            }
        }
        let (_, feature) = best.expect("six candidate stumps");
        let (tp, tn) = class_weights(corpus, &weights, |e| e.predictive.get(feature));
        let (fp, fn_) = class_weights(corpus, &weights, |e| !e.predictive.get(feature));
        let on_true = half_log(tp, tn);
        let on_false = half_log(fp, fn_);
        reweight(corpus, &mut weights, |e| if e.predictive.get(feature) { on_true } else { on_false });
        base += on_false;
        match rules.iter_mut().find(|r| r.feature == feature) {
            Some(r) => r.score += on_true - on_false,
            None => rules.push(Rule {
                feature,
                polarity: true,
                score: on_true - on_false,
            }),
        }
    }
    Ok(InlineModel {
        base_score: base,
        threshold: 0.0,
        rules,
    })
}

fn class_weights(corpus: &[InlineExample], weights: &[f64], member: impl Fn(&InlineExample) -> bool) -> (f64, f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (e, w) in corpus.iter().zip(weights) {
        if member(e) {
            if e.label == InlineLabel::Inlined {
                pos += w;
            } else {
                neg += w;
            }
        }
    }
    (pos, neg)
}

fn reweight(corpus: &[InlineExample], weights: &mut [f64], h: impl Fn(&InlineExample) -> f64) {
    for (e, w) in corpus.iter().zip(weights.iter_mut()) {
        *w *= (-y(e) * h(e)).exp();
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
}

/// True-positive rate over inlined examples and false-positive rate over the rest.
pub fn evaluate_inliner(m: &InlineModel, corpus: &[InlineExample]) -> (f64, f64) {
    let mut counts = [[0usize; 2]; 2];
    for e in corpus {
        let predicted = score_function(&e.predictive, m) > m.threshold;
        counts[(e.label == InlineLabel::Inlined) as usize][predicted as usize] += 1;
    }
    let rate = |row: [usize; 2]| {
        let total = row[0] + row[1];
        if total == 0 {
            0.0
        } else {
            row[1] as f64 / total as f64
        }
    };
    (rate(counts[1]), rate(counts[0]))
}
