//! Linear soft-margin SVM trained by dual coordinate descent.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, PairExample, PairLabel};
use crate::cost::{Feature, WeightVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    /// Soft-margin penalty.
    pub c: f64,
    pub max_epochs: usize,
    /// Stop once the projected-gradient spread of an epoch falls below this.
    pub tolerance: f64,
    /// Seeds the coordinate visiting order.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            max_epochs: 2000,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedWeights {
    /// Absolute coefficients, the usable pair weights.
    pub weights: WeightVector,
    /// Signed coefficients in cost units; positive means "higher cost, more likely different".
    pub coefficients: [f64; 6],
    pub bias: f64,
    pub epochs: usize,
}

impl TrainedWeights {
    /// Positive values predict DIFFERENT.
    pub fn decision(&self, costs: &[f64; 6]) -> f64 {
        self.coefficients.iter().zip(costs).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn predict(&self, costs: &[f64; 6]) -> PairLabel {
        if self.decision(costs) > 0.0 {
            PairLabel::Different
        } else {
            PairLabel::Same
        }
    }

    pub fn accuracy(&self, corpus: &[PairExample]) -> f64 {
        if corpus.is_empty() {
            return 0.0;
        }
        let hits = corpus.iter().filter(|e| self.predict(&e.costs) == e.label).count();
        hits as f64 / corpus.len() as f64
    }
}

/// Fits `sign(w·x + b)` with DIFFERENT as the positive class and returns the
/// coefficient magnitudes as pair weights.
///
/// Each feature is scaled by its largest absolute value before fitting, and
/// the corpus is put in a canonical order first, so the result depends only
/// on the multiset of examples and the seed.
pub fn train_weights(corpus: &[PairExample], cfg: &SvmConfig) -> Result<TrainedWeights, LearnError> {
    if corpus.is_empty() {
        return Err(LearnError::Degenerate("no examples"));
    }
    let same = corpus.iter().filter(|e| e.label == PairLabel::Same).count();
    if same == 0 || same == corpus.len() {
        return Err(LearnError::Degenerate("only one label present"));
    }
    if corpus.iter().any(|e| e.costs.iter().any(|c| !c.is_finite())) {
        return Err(LearnError::Degenerate("non-finite cost"));
    }

    let mut data: Vec<PairExample> = corpus.to_vec();
    data.sort_by(|a, b| {
        a.label.cmp(&b.label).then_with(|| {
            a.costs
                .iter()
                .zip(&b.costs)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let mut scale = [1.0f64; 6];
    for (j, s) in scale.iter_mut().enumerate() {
        let m = data.iter().map(|e| e.costs[j].abs()).fold(0.0, f64::max);
        if m > 0.0 {
            *s = m;
        }
    }
    // Augmented with a constant 1 so the bias is fitted like any coefficient.
    let xs: Vec<[f64; 7]> = data
        .iter()
        .map(|e| {
            let mut x = [1.0; 7];
            for j in 0..6 {
                x[j] = e.costs[j] / scale[j];
            }
            x
        })
        .collect();
    let ys: Vec<f64> = data
        .iter()
        .map(|e| if e.label == PairLabel::Different { 1.0 } else { -1.0 })
        .collect();
    let q: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();

    let n = xs.len();
    let mut alpha = vec![0.0f64; n];
    let mut w = [0.0f64; 7];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = ys[i] * dot(&w, &xs[i]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= cfg.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, cfg.c);
                let step = (alpha[i] - old) * ys[i];
                for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += step * xj;
                }
            }
        }
        if pg_max - pg_min < cfg.tolerance {
            break;
        }
    }

    let mut coefficients = [0.0; 6];
    let mut weights = WeightVector {
        cfg_branches: 0.0,
        ..WeightVector::default()
    };
    for f in Feature::ALL {
        let j = f.index();
        coefficients[j] = w[j] / scale[j];
        weights.set(f, coefficients[j].abs());
    }
    Ok(TrainedWeights {
        weights,
        coefficients,
        bias: w[6],
        epochs,
    })
}

fn dot(a: &[f64; 7], b: &[f64; 7]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
