//! One-hidden-layer perceptron: ReLU hidden units, sigmoid output, trained
//! with full-batch gradient descent on mean log loss. Initialization is the
//! only randomness; it draws each layer uniformly from ±1/sqrt(fan_in) with a
//! seeded generator, so fits are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: 32, epochs: 500, learning_rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// hidden x input weight matrix.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    fn hidden_activations(&self, row: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(w, &b)| {
                let a: f64 = w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
                a.max(0.0)
            })
            .collect()
    }

    fn logit(&self, row: &[f64]) -> f64 {
        let h = self.hidden_activations(row);
        self.w2.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>() + self.b2
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        assert_eq!(row.len(), self.w1[0].len(), "feature width mismatch");
        sigmoid(self.logit(row))
    }
}

/// All parameter gradients, in model layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean log loss of the model on the rows.
pub fn loss(model: &MlpModel, rows: &[Vec<f64>], labels: &[u8]) -> f64 {
    let n = rows.len() as f64;
    rows.iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = model.logit(x);
            softplus(z) - f64::from(y) * z
        })
        .sum::<f64>()
        / n
}

/// Backpropagated gradient of [`loss`]. The ReLU subgradient at zero is
/// taken as zero.
pub fn gradient(model: &MlpModel, rows: &[Vec<f64>], labels: &[u8]) -> MlpGradient {
    let hidden = model.w1.len();
    let dim = model.w1[0].len();
    let n = rows.len() as f64;
    let mut g = MlpGradient {
        w1: vec![vec![0.0; dim]; hidden],
        b1: vec![0.0; hidden],
        w2: vec![0.0; hidden],
        b2: 0.0,
    };
    for (x, &y) in rows.iter().zip(labels) {
        let pre: Vec<f64> = model
            .w1
            .iter()
            .zip(&model.b1)
            .map(|(w, &b)| w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
            .collect();
        let h: Vec<f64> = pre.iter().map(|&a| a.max(0.0)).collect();
        let z = model.w2.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + model.b2;
        let dz = (sigmoid(z) - f64::from(y)) / n;
        g.b2 += dz;
        for j in 0..hidden {
            g.w2[j] += dz * h[j];
            if pre[j] > 0.0 {
                let da = dz * model.w2[j];
                g.b1[j] += da;
                for (gw, &xi) in g.w1[j].iter_mut().zip(x) {
                    *gw += da * xi;
                }
            }
        }
    }
    g
}

fn init(dim: usize, hidden: usize, seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s1 = 1.0 / (dim as f64).sqrt();
    let w1 = (0..hidden)
        .map(|_| (0..dim).map(|_| rng.gen_range(-s1..s1)).collect())
        .collect();
    let s2 = 1.0 / (hidden as f64).sqrt();
    let w2 = (0..hidden).map(|_| rng.gen_range(-s2..s2)).collect();
    MlpModel { w1, b1: vec![0.0; hidden], w2, b2: 0.0 }
}

pub fn fit(
    rows: &[Vec<f64>],
    labels: &[u8],
    seed: u64,
    config: MlpConfig,
) -> Result<MlpModel, LearnError> {
    if rows.len() != labels.len() {
        return Err(LearnError::LengthMismatch { what: "rows vs labels".into() });
    }
    if rows.len() < 2 {
        return Err(LearnError::TooFewRows { got: rows.len(), need: 2 });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(LearnError::SingleClass);
    }
    let mut model = init(rows[0].len(), config.hidden.max(1), seed);
    for _ in 0..config.epochs {
        let g = gradient(&model, rows, labels);
        let lr = config.learning_rate;
        for (w, gw) in model.w1.iter_mut().zip(&g.w1) {
            for (wi, gi) in w.iter_mut().zip(gw) {
                *wi -= lr * gi;
            }
        }
        for (b, gb) in model.b1.iter_mut().zip(&g.b1) {
            *b -= lr * gb;
        }
        for (w, gw) in model.w2.iter_mut().zip(&g.w2) {
            *w -= lr * gw;
        }
        model.b2 -= lr * g.b2;
    }
    Ok(model)
}
