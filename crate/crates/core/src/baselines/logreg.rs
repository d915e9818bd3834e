use log::warn;
use serde::{Deserialize, Serialize};

use super::{bit_lists, check_training, check_width, BaselineError};
use crate::chem::Fingerprint;

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    /// Inverse of the regularization constant `C`.
    pub l2: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1.0,
            tolerance: 1e-6,
            max_iterations: 20_000,
        }
    }
}

/// L2-regularized logistic regression. The intercept is not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn margin(weights: &[f64], bias: f64, bits: &[u32]) -> f64 {
    bias + bits.iter().map(|&b| weights[b as usize]).sum::<f64>()
}

/// `(Σ_i ℓ_i + l2/2·‖w‖²) / n` with `ℓ_i` the log loss of example `i`.
fn objective(weights: &[f64], bias: f64, l2: f64, rows: &[Vec<u32>], labels: &[u8]) -> f64 {
    let data: f64 = rows
        .iter()
        .zip(labels)
        .map(|(r, &y)| {
            let z = margin(weights, bias, r);
            softplus(z) - y as f64 * z
        })
        .sum();
    let penalty = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (data + penalty) / rows.len() as f64
}

/// Gradient of [`objective`]; the last entry is the bias.
fn gradient(weights: &[f64], bias: f64, l2: f64, rows: &[Vec<u32>], labels: &[u8]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut g: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    g.push(0.0);
    let last = weights.len();
    for (r, &y) in rows.iter().zip(labels) {
        let d = sigmoid(margin(weights, bias, r)) - y as f64;
        for &b in r {
            g[b as usize] += d;
        }
        g[last] += d;
    }
    for v in &mut g {
        *v /= n;
    }
    g
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-batch gradient descent with Armijo backtracking. The trial step is
/// the Barzilai–Borwein estimate from the previous iteration, halved until
/// sufficient decrease holds. Stops once `‖∇‖ < tolerance`; on hitting the
/// iteration cap it logs a warning and returns the best iterate.
pub fn train_logreg(
    features: &[Fingerprint],
    labels: &[u8],
    config: &LogRegConfig,
) -> Result<LogRegModel, BaselineError> {
    let width = check_training(features, labels)?;
    if !(config.l2 >= 0.0 && config.l2.is_finite()) || config.tolerance <= 0.0 || config.max_iterations == 0 {
        return Err(BaselineError::InvalidConfig(format!("{config:?}")));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(BaselineError::SingleClass);
    }
    let rows = bit_lists(features);
    let l2 = config.l2;
    let mut theta = vec![0.0; width + 1];
    let split = |t: &[f64]| (t[..width].to_vec(), t[width]);
    let eval = |t: &[f64]| objective(&t[..width], t[width], l2, &rows, labels);
    let grad = |t: &[f64]| gradient(&t[..width], t[width], l2, &rows, labels);

    let mut f = eval(&theta);
    let mut g = grad(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = norm(&g) < config.tolerance;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let gg = g.iter().map(|x| x * x).sum::<f64>();
        let mut t = step;
        let mut next = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(p, d)| p - t * d).collect();
            let fc = eval(&cand);
            if fc <= f - ARMIJO * t * gg {
                next = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = next else {
            // No decrease is representable any more: the iterate is optimal
            // to machine precision.
            break;
        };
        let gc = grad(&cand);
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { ss / sy } else { 2.0 * t };
        theta = cand;
        f = fc;
        g = gc;
        converged = norm(&g) < config.tolerance;
    }
    if !converged {
        warn!(
            "logistic regression stopped after {iterations} iterations with gradient norm {:.3e}",
            norm(&g)
        );
    }
    let (weights, bias) = split(&theta);
    Ok(LogRegModel {
        weights,
        bias,
        l2,
        iterations,
        converged,
    })
}

impl LogRegModel {
    /// A zero model of the given input width.
    pub fn zeros(width: usize, l2: f64) -> LogRegModel {
        LogRegModel {
            weights: vec![0.0; width],
            bias: 0.0,
            l2,
            iterations: 0,
            converged: false,
        }
    }

    pub fn decision(&self, fp: &Fingerprint) -> f64 {
        self.bias + fp.ones().map(|b| self.weights[b]).sum::<f64>()
    }

    pub fn predict_proba(&self, features: &[Fingerprint]) -> Result<Vec<f64>, BaselineError> {
        check_width(features, self.weights.len())?;
        Ok(features.iter().map(|f| sigmoid(self.decision(f))).collect())
    }

    /// Regularized mean negative log-likelihood on the given data.
    pub fn objective(&self, features: &[Fingerprint], labels: &[u8]) -> Result<f64, BaselineError> {
        check_width(features, self.weights.len())?;
        Ok(objective(&self.weights, self.bias, self.l2, &bit_lists(features), labels))
    }

    /// Gradient of [`LogRegModel::objective`]: weights first, bias last.
    pub fn gradient(&self, features: &[Fingerprint], labels: &[u8]) -> Result<Vec<f64>, BaselineError> {
        check_width(features, self.weights.len())?;
        Ok(gradient(&self.weights, self.bias, self.l2, &bit_lists(features), labels))
    }
}
