//! Multinomial logistic regression over the five ordinal classes, minimized
//! by full-batch gradient descent with backtracking line search.
//!
//! Objective: sum of per-sample cross-entropy plus (1/(2C)) * ||W||^2 with
//! the bias unpenalized. Training stops when the gradient max-norm drops
//! below `tol` or after `max_iters` accepted steps. Fully deterministic
//! given the data order.

use serde::{Deserialize, Serialize};

use super::encoder::FeatureVector;
use super::BaselineError;

pub const N_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// Inverse L2 strength.
    pub c: f64,
    pub max_iters: usize,
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { c: 1.0, max_iters: 5000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// [class][feature]
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub c: f64,
    /// Loss after each accepted line-search step; non-increasing.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Set when training data carried a single class; the model then always
    /// predicts it.
    pub degenerate_class: Option<u8>,
}

fn softmax_row(z: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for k in 0..N_CLASSES {
        out[k] = (z[k] - max).exp();
        sum += out[k];
    }
    for v in &mut out {
        *v /= sum;
    }
    out
}

struct Objective<'a> {
    xs: &'a [FeatureVector],
    ys: &'a [u8],
    c: f64,
    p: usize,
}

impl Objective<'_> {
    fn logits(&self, weights: &[Vec<f64>], bias: &[f64], x: &[f64]) -> [f64; N_CLASSES] {
        let mut z = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            let wk = &weights[k];
            let mut acc = bias[k];
            for (wj, xj) in wk.iter().zip(x) {
                acc += wj * xj;
            }
            z[k] = acc;
        }
        z
    }

    fn loss(&self, weights: &[Vec<f64>], bias: &[f64]) -> f64 {
        let mut total = 0.0;
        for (x, &y) in self.xs.iter().zip(self.ys) {
            let z = self.logits(weights, bias, &x.values);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - z[y as usize - 1];
        }
        let penalty: f64 = weights.iter().flatten().map(|w| w * w).sum();
        total + penalty / (2.0 * self.c)
    }

    /// Analytic gradient of [`Self::loss`]; finite differences check this in
    /// the test suite.
    fn grad(&self, weights: &[Vec<f64>], bias: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut gw = vec![vec![0.0; self.p]; N_CLASSES];
        let mut gb = vec![0.0; N_CLASSES];
        for (x, &y) in self.xs.iter().zip(self.ys) {
            let probs = softmax_row(&self.logits(weights, bias, &x.values));
            for k in 0..N_CLASSES {
                let delta = probs[k] - f64::from(k == y as usize - 1);
                gb[k] += delta;
                let gk = &mut gw[k];
                for (g, xj) in gk.iter_mut().zip(&x.values) {
                    *g += delta * xj;
                }
            }
        }
        for k in 0..N_CLASSES {
            for j in 0..self.p {
                gw[k][j] += weights[k][j] / self.c;
            }
        }
        (gw, gb)
    }
}

/// Objective value at externally supplied parameters; paired with
/// [`objective_grad`] for gradient diagnostics.
pub fn objective_loss(
    xs: &[FeatureVector],
    ys: &[u8],
    c: f64,
    weights: &[Vec<f64>],
    bias: &[f64],
) -> f64 {
    Objective { xs, ys, c, p: xs[0].values.len() }.loss(weights, bias)
}

/// Analytic gradient of [`objective_loss`].
pub fn objective_grad(
    xs: &[FeatureVector],
    ys: &[u8],
    c: f64,
    weights: &[Vec<f64>],
    bias: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    Objective { xs, ys, c, p: xs[0].values.len() }.grad(weights, bias)
}

pub fn fit_logreg(
    xs: &[FeatureVector],
    ys: &[u8],
    params: LogRegParams,
) -> Result<LogRegModel, BaselineError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(BaselineError::EmptyTrainingData);
    }
    let p = xs[0].values.len();

    let first = ys[0];
    if ys.iter().all(|&y| y == first) {
        return Ok(LogRegModel {
            weights: vec![vec![0.0; p]; N_CLASSES],
            bias: vec![0.0; N_CLASSES],
            c: params.c,
            trace: Vec::new(),
            converged: true,
            degenerate_class: Some(first),
        });
    }

    let obj = Objective { xs, ys, c: params.c, p };
    let mut weights = vec![vec![0.0; p]; N_CLASSES];
    let mut bias = vec![0.0; N_CLASSES];
    let mut loss = obj.loss(&weights, &bias);
    let mut trace = vec![loss];
    let mut step = 1.0 / xs.len() as f64;
    let mut converged = false;

    const ARMIJO: f64 = 1e-4;
    for _ in 0..params.max_iters {
        let (gw, gb) = obj.grad(&weights, &bias);
        let max_norm = gw
            .iter()
            .flatten()
            .chain(gb.iter())
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if max_norm < params.tol {
            converged = true;
            break;
        }
        let grad_sq: f64 = gw.iter().flatten().chain(gb.iter()).map(|g| g * g).sum();

        // Backtracking from twice the last accepted step.
        let mut t = (step * 2.0).min(1.0);
        let mut accepted = false;
        for _ in 0..60 {
            let cand_w: Vec<Vec<f64>> = weights
                .iter()
                .zip(&gw)
                .map(|(row, grow)| row.iter().zip(grow).map(|(w, g)| w - t * g).collect())
                .collect();
            let cand_b: Vec<f64> = bias.iter().zip(&gb).map(|(b, g)| b - t * g).collect();
            let cand_loss = obj.loss(&cand_w, &cand_b);
            if cand_loss <= loss - ARMIJO * t * grad_sq {
                weights = cand_w;
                bias = cand_b;
                loss = cand_loss;
                step = t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent step representable; gradient is numerically flat.
            converged = true;
            break;
        }
        trace.push(loss);
    }

    Ok(LogRegModel {
        weights,
        bias,
        c: params.c,
        trace,
        converged,
        degenerate_class: None,
    })
}

impl LogRegModel {
    pub fn predict_proba(&self, x: &FeatureVector) -> [f64; N_CLASSES] {
        if let Some(class) = self.degenerate_class {
            let mut probs = [0.0; N_CLASSES];
            probs[class as usize - 1] = 1.0;
            return probs;
        }
        let mut z = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            let mut acc = self.bias[k];
            for (w, xj) in self.weights[k].iter().zip(&x.values) {
                acc += w * xj;
            }
            z[k] = acc;
        }
        softmax_row(&z)
    }

    pub fn predict(&self, x: &FeatureVector) -> u8 {
        super::argmax_ordinal(&self.predict_proba(x))
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector { values: values.to_vec() }
    }

    fn toy_separable() -> (Vec<FeatureVector>, Vec<u8>) {
        // Two clusters in 2D, classes 1 and 5.
        let xs = vec![
            fv(&[-1.0, -0.8]),
            fv(&[-1.2, -1.0]),
            fv(&[-0.9, -1.1]),
            fv(&[1.0, 0.9]),
            fv(&[1.1, 1.2]),
            fv(&[0.8, 1.0]),
        ];
        let ys = vec![1, 1, 1, 5, 5, 5];
        (xs, ys)
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (xs, ys) = toy_separable();
        let model = fit_logreg(&xs, &ys, LogRegParams::default()).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            assert_eq!(model.predict(x), y);
        }
        // L2 keeps the weights bounded despite separability.
        assert!(model.weight_norm() < 50.0, "norm {}", model.weight_norm());
    }

    #[test]
    fn loss_trace_is_non_increasing() {
        let (xs, ys) = toy_separable();
        let model = fit_logreg(&xs, &ys, LogRegParams::default()).unwrap();
        for w in model.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
        assert!(model.trace.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn single_class_training_degenerates() {
        let xs = vec![fv(&[0.0]), fv(&[1.0])];
        let ys = vec![4, 4];
        let model = fit_logreg(&xs, &ys, LogRegParams::default()).unwrap();
        assert_eq!(model.degenerate_class, Some(4));
        let probs = model.predict_proba(&fv(&[5.0]));
        assert_eq!(probs[3], 1.0);
        assert_eq!(model.predict(&fv(&[-3.0])), 4);
    }

    #[test]
    fn identical_features_predict_majority() {
        let xs = vec![fv(&[1.0]); 5];
        let ys = vec![2, 2, 2, 4, 4];
        let model = fit_logreg(&xs, &ys, LogRegParams::default()).unwrap();
        assert_eq!(model.predict(&fv(&[1.0])), 2);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        // Deterministic little dataset with all five classes.
        let xs: Vec<FeatureVector> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                fv(&[t.sin(), (2.3 * t).cos(), 0.25 * t - 1.0])
            })
            .collect();
        let ys: Vec<u8> = (0..20).map(|i| (i % 5 + 1) as u8).collect();
        let obj = Objective { xs: &xs, ys: &ys, c: 1.0, p: 3 };

        // A non-trivial evaluation point.
        let weights: Vec<Vec<f64>> = (0..N_CLASSES)
            .map(|k| (0..3).map(|j| 0.1 * (k as f64 + 1.0) - 0.07 * j as f64).collect())
            .collect();
        let bias: Vec<f64> = (0..N_CLASSES).map(|k| 0.05 * k as f64 - 0.1).collect();

        let (gw, gb) = obj.grad(&weights, &bias);
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        let mut record = |analytic: f64, numeric: f64| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            if rel > max_rel {
                max_rel = rel;
            }
        };
        for k in 0..N_CLASSES {
            for j in 0..3 {
                let bump = |eps: f64| {
                    let mut w = weights.clone();
                    w[k][j] += eps;
                    obj.loss(&w, &bias)
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                record(gw[k][j], numeric);
            }
            let bump = |eps: f64| {
                let mut b = bias.clone();
                b[k] += eps;
                obj.loss(&weights, &b)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            record(gb[k], numeric);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn stronger_regularization_never_grows_weights() {
        let (xs, ys) = toy_separable();
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0]
            .iter()
            .map(|&c| {
                fit_logreg(&xs, &ys, LogRegParams { c, ..Default::default() })
                    .unwrap()
                    .weight_norm()
            })
            .collect();
        for w in norms.windows(2) {
            assert!(w[0] <= w[1] + 1e-6, "norms not monotone in C: {norms:?}");
        }
    }

    #[test]
    fn deterministic_given_data_order() {
        let (xs, ys) = toy_separable();
        let a = fit_logreg(&xs, &ys, LogRegParams::default()).unwrap();
        let b = fit_logreg(&xs, &ys, LogRegParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_binary_matches_bisection_oracle() {
        // One feature, x = -1 labeled 1 and x = +1 labeled 5. The three
        // middle classes never occur, so their (unpenalized) relative bias
        // drifts toward -inf and the problem reduces to 2-class logistic
        // regression with symmetric weights w_1 = -w, w_5 = +w. In that
        // limit the optimum solves 2*sigma(-2w) = w/C, which a bisection
        // gives independently of the optimizer.
        let xs = vec![fv(&[-1.0]), fv(&[1.0])];
        let ys = vec![1u8, 5u8];
        let c = 1.0;
        let sigma = |z: f64| 1.0 / (1.0 + (-z).exp());
        let g = |w: f64| 2.0 * sigma(-2.0 * w) - w / c;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        assert!(g(lo) > 0.0 && g(hi) < 0.0);
        for _ in 0..200 {
            let mid = (lo + hi) / 2.0;
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle_w = (lo + hi) / 2.0;

        let model = fit_logreg(&xs, &ys, LogRegParams::default()).unwrap();
        assert!(
            (model.weights[4][0] - oracle_w).abs() < 1e-3,
            "fitted {} vs oracle {oracle_w}",
            model.weights[4][0]
        );
        assert!((model.weights[0][0] + oracle_w).abs() < 1e-3);
        for k in 1..4 {
            assert!(model.weights[k][0].abs() < 1e-3);
        }
        // unobserved middle classes end up with strongly negative relative
        // bias as the softmax saturates
        assert!(model.bias[4] - model.bias[1] > 3.0);
        assert_eq!(model.predict(&fv(&[-1.0])), 1);
        assert_eq!(model.predict(&fv(&[1.0])), 5);
    }
}
