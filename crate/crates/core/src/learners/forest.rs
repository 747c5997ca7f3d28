//! Random forest of CART trees on binary labels.
//!
//! Trees are grown from bootstrap samples with Gini-impurity splits over a
//! random feature subset per split. Zero-gain splits are allowed so trees can
//! pass through XOR-like structure; recursion still terminates because every
//! split is proper and depth is capped. Leaves store the positive fraction of
//! their training rows, and the forest predicts the mean leaf fraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    /// Nodes smaller than this become leaves, so leaves may hold one row.
    pub min_split: usize,
    pub bootstrap: bool,
    /// Candidate features per split; None means floor(sqrt(F)), at least 1.
    pub features_per_split: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: 12,
            min_split: 2,
            bootstrap: true,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        p: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf { p } => *p,
            Node::Split { feature, threshold, left, right } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Node>,
    pub n_features: usize,
}

impl RandomForest {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        assert_eq!(row.len(), self.n_features, "feature width mismatch");
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }
}

pub fn fit(
    rows: &[Vec<f64>],
    labels: &[u8],
    seed: u64,
    config: ForestConfig,
) -> Result<RandomForest, LearnError> {
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
    let n_features = rows[0].len();
    let trees: Vec<Node> = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let idx: Vec<usize> = if config.bootstrap {
                (0..rows.len()).map(|_| rng.gen_range(0..rows.len())).collect()
            } else {
                (0..rows.len()).collect()
            };
            grow(rows, labels, idx, 0, &config, &mut rng)
        })
        .collect();
    Ok(RandomForest { trees, n_features })
}

fn positive_fraction(labels: &[u8], idx: &[usize]) -> f64 {
    let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
    pos as f64 / idx.len() as f64
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Best Gini split of `idx` on one feature, or None when the feature is
/// constant within the node. Thresholds are midpoints between consecutive
/// distinct values, falling back to the lower value when rounding would push
/// the midpoint onto the upper one.
fn best_split_on(
    rows: &[Vec<f64>],
    labels: &[u8],
    idx: &[usize],
    feature: usize,
) -> Option<Candidate> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
    let total = order.len();
    let total_pos = order.iter().filter(|&&i| labels[i] == 1).count();
    let mut best: Option<Candidate> = None;
    let mut left_pos = 0usize;
    for split_at in 1..total {
        let prev = order[split_at - 1];
        if labels[prev] == 1 {
            left_pos += 1;
        }
        let a = rows[prev][feature];
        let b = rows[order[split_at]][feature];
        if a == b {
            continue;
        }
        let mut threshold = 0.5 * (a + b);
        if threshold >= b {
            threshold = a;
        }
        let left_n = split_at;
        let right_n = total - split_at;
        let impurity = (left_n as f64 * gini(left_pos, left_n)
            + right_n as f64 * gini(total_pos - left_pos, right_n))
            / total as f64;
        if best.as_ref().is_none_or(|c| impurity < c.impurity) {
            best = Some(Candidate { feature, threshold, impurity });
        }
    }
    best
}

fn grow(
    rows: &[Vec<f64>],
    labels: &[u8],
    idx: Vec<usize>,
    depth: usize,
    config: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Node {
    let p = positive_fraction(labels, &idx);
    if depth >= config.max_depth || idx.len() < config.min_split || p == 0.0 || p == 1.0 {
        return Node::Leaf { p };
    }
    let n_features = rows[0].len();
    let m = config
        .features_per_split
        .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
        .clamp(1, n_features);
    // Walk features until `m` of them offered a valid split; skipping
    // constant features keeps splittable structure reachable. With the full
    // feature set the walk is in index order and consumes no randomness.
    let feature_order: Vec<usize> = if m >= n_features {
        (0..n_features).collect()
    } else {
        rand::seq::index::sample(rng, n_features, n_features).into_vec()
    };
    let mut best: Option<Candidate> = None;
    let mut examined = 0usize;
    for &feature in &feature_order {
        if let Some(c) = best_split_on(rows, labels, &idx, feature) {
            examined += 1;
            if best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                best = Some(c);
            }
            if examined == m {
                break;
            }
        }
    }
    let Some(chosen) = best else {
        return Node::Leaf { p };
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| rows[i][chosen.feature] <= chosen.threshold);
    debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());
    Node::Split {
        feature: chosen.feature,
        threshold: chosen.threshold,
        left: Box::new(grow(rows, labels, left_idx, depth + 1, config, rng)),
        right: Box::new(grow(rows, labels, right_idx, depth + 1, config, rng)),
    }
}
