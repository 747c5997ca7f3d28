//! Logistic regression trained by full-batch gradient descent.
//!
//! The loss is mean log loss plus an L2 penalty 0.5·λ·‖w‖² on the weights;
//! the bias is never regularized. Weights start at zero, so training is
//! deterministic without any randomness.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Training stops early once the gradient norm falls below this.
    pub grad_tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { l2: 1e-3, learning_rate: 0.1, max_epochs: 500, grad_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        assert_eq!(row.len(), self.weights.len(), "feature width mismatch");
        sigmoid(dot(&self.weights, row) + self.bias)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// log(1 + e^z) without overflow for large |z|.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean log loss plus the L2 penalty, evaluated at the given parameters.
pub fn loss(weights: &[f64], bias: f64, rows: &[Vec<f64>], labels: &[u8], l2: f64) -> f64 {
    let n = rows.len() as f64;
    let data: f64 = rows
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = dot(weights, x) + bias;
            softplus(z) - f64::from(y) * z
        })
        .sum();
    data / n + 0.5 * l2 * dot(weights, weights)
}

/// Analytic gradient of [`loss`] with respect to (weights, bias).
pub fn loss_gradient(
    weights: &[f64],
    bias: f64,
    rows: &[Vec<f64>],
    labels: &[u8],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let r = sigmoid(dot(weights, x) + bias) - f64::from(y);
        for (g, &xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
        gb += r;
    }
    for (g, &w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Fits from zero-initialized parameters by full-batch gradient descent.
pub fn fit(rows: &[Vec<f64>], labels: &[u8], config: LogisticConfig) -> LogisticModel {
    assert_eq!(rows.len(), labels.len(), "rows and labels must align");
    assert!(!rows.is_empty(), "cannot fit on an empty set");
    let dim = rows[0].len();
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    for _ in 0..config.max_epochs {
        let (gw, gb) = loss_gradient(&weights, bias, rows, labels, config.l2);
        let norm = (dot(&gw, &gw) + gb * gb).sqrt();
        if norm < config.grad_tolerance {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * gb;
    }
    LogisticModel { weights, bias }
}
