//! Multinomial logistic regression fit by full-batch gradient descent with
//! a backtracking line search. Weights start at zero, so fitting is
//! deterministic; the `seed` parameter only exists so callers can thread a
//! single seed through every protocol stage.

use crate::error::{Error, Result};

/// A fitted classifier: per-class weight rows with a trailing bias term.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    n_classes: usize,
    n_features: usize,
    weights: Vec<f64>,
}

const MAX_ITERS: usize = 1000;
const REL_TOL: f64 = 1e-6;

/// Fits a classifier minimizing mean cross-entropy plus an L2 penalty of
/// `1/(2C) * ||w||^2` over the summed loss (biases unpenalized). Converges
/// when the relative loss change drops below 1e-6 or after 1000 iterations.
pub fn train_logreg(
    features: &[Vec<f64>],
    labels: &[usize],
    l2_c: f64,
    _seed: u64,
) -> Result<LogisticRegression> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !(l2_c.is_finite() && l2_c > 0.0) {
        return Err(Error::Invalid(format!("C must be positive, got {l2_c}")));
    }
    let n_features = features[0].len();
    if features.iter().any(|row| row.len() != n_features) {
        return Err(Error::Invalid("ragged feature matrix".into()));
    }
    if features.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("features".into()));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    {
        let mut seen = vec![false; n_classes];
        for &y in labels {
            seen[y] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::Dataset(
                "training labels contain a single class".into(),
            ));
        }
    }

    let n = features.len();
    let width = n_features + 1;
    // penalty coefficient against the *mean* loss
    let lambda = 1.0 / (2.0 * l2_c * n as f64);

    let loss_of = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        let mut logits = vec![0.0; n_classes];
        for (x, &y) in features.iter().zip(labels) {
            fill_logits(w, x, n_classes, &mut logits);
            total += log_sum_exp(&logits) - logits[y];
        }
        let mut penalty = 0.0;
        for k in 0..n_classes {
            for j in 0..n_features {
                let wj = w[k * width + j];
                penalty += wj * wj;
            }
        }
        total / n as f64 + lambda * penalty
    };

    let grad_of = |w: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n_classes * width];
        let mut logits = vec![0.0; n_classes];
        for (x, &y) in features.iter().zip(labels) {
            fill_logits(w, x, n_classes, &mut logits);
            softmax_in_place(&mut logits);
            for k in 0..n_classes {
                let residual = logits[k] - if k == y { 1.0 } else { 0.0 };
                let row = &mut g[k * width..(k + 1) * width];
                for (j, &xj) in x.iter().enumerate() {
                    row[j] += residual * xj;
                }
                row[n_features] += residual;
            }
        }
        for v in g.iter_mut() {
            *v /= n as f64;
        }
        for k in 0..n_classes {
            for j in 0..n_features {
                g[k * width + j] += 2.0 * lambda * w[k * width + j];
            }
        }
        g
    };

    // Per-coordinate curvature bounds (softmax variance <= 1/4) keep the
    // step well-scaled even when the penalty dwarfs the data term.
    let curvature: Vec<f64> = {
        let mut col_sq = vec![0.0; width];
        for x in features {
            for (j, &xj) in x.iter().enumerate() {
                col_sq[j] += xj * xj;
            }
        }
        col_sq[n_features] = n as f64; // the implicit all-ones bias column
        (0..n_classes * width)
            .map(|i| {
                let j = i % width;
                let mut h = 0.25 * col_sq[j] / n as f64;
                if j < n_features {
                    h += 2.0 * lambda;
                }
                h.max(1e-12)
            })
            .collect()
    };

    let mut w = vec![0.0; n_classes * width];
    let mut loss = loss_of(&w);
    let mut step: f64 = 1.0;
    for _ in 0..MAX_ITERS {
        let g = grad_of(&w);
        let direction: Vec<f64> = g.iter().zip(&curvature).map(|(gi, hi)| gi / hi).collect();
        let slope: f64 = g.iter().zip(&direction).map(|(gi, di)| gi * di).sum();
        if slope <= 1e-20 {
            break;
        }
        // Armijo backtracking, warm-started from the last accepted step
        let mut t = (step * 2.0).min(4.0);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = w
                .iter()
                .zip(&direction)
                .map(|(wi, di)| wi - t * di)
                .collect();
            let cand_loss = loss_of(&cand);
            if cand_loss <= loss - 1e-4 * t * slope {
                let prev = loss;
                w = cand;
                loss = cand_loss;
                step = t;
                accepted = true;
                if (prev - loss).abs() <= REL_TOL * prev.abs().max(1e-12) {
                    return Ok(LogisticRegression {
                        n_classes,
                        n_features,
                        weights: w,
                    });
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break; // no descent possible at floating-point resolution
        }
    }
    Ok(LogisticRegression {
        n_classes,
        n_features,
        weights: w,
    })
}

impl LogisticRegression {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Flat per-class weight rows, bias last in each row.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Argmax class for one feature row; ties resolve to the lowest class.
    pub fn predict(&self, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.n_features);
        let width = self.n_features + 1;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.n_classes {
            let row = &self.weights[k * width..(k + 1) * width];
            let score: f64 =
                row[..self.n_features].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                    + row[self.n_features];
            if score > best_score {
                best_score = score;
                best = k;
            }
        }
        best
    }

    pub fn predict_batch(&self, features: &[Vec<f64>]) -> Vec<usize> {
        features.iter().map(|x| self.predict(x)).collect()
    }
}

fn fill_logits(w: &[f64], x: &[f64], n_classes: usize, out: &mut [f64]) {
    let width = x.len() + 1;
    for (k, slot) in out.iter_mut().enumerate().take(n_classes) {
        let row = &w[k * width..(k + 1) * width];
        *slot = row[..x.len()].iter().zip(x).map(|(wj, xj)| wj * xj).sum::<f64>() + row[x.len()];
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(logits: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - m).exp();
        total += *z;
    }
    for z in logits.iter_mut() {
        *z /= total;
    }
}
