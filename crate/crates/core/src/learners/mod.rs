//! Shared supervised-learning machinery: mutual information over
//! equal-frequency bins, top-N feature selection, minority oversampling, and
//! the base classifiers (logistic regression, random forest, MLP).

pub mod forest;
pub mod logistic;
pub mod mlp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Rows plus labels plus a per-row ordering key. Rows are feature vectors;
/// every row has one value per feature name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub timestamps: Vec<i64>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        timestamps: Vec<i64>,
    ) -> Result<Self, LearnError> {
        if rows.len() != labels.len() || rows.len() != timestamps.len() {
            return Err(LearnError::LengthMismatch {
                what: "rows, labels, timestamps".into(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(LearnError::RowWidth {
                expected: feature_names.len(),
                got: bad.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(LearnError::BadLabel);
        }
        Ok(Dataset { feature_names, rows, labels, timestamps })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }
}

pub const DEFAULT_MI_BINS: usize = 10;

/// Equal-frequency bin edges: the values at the ideal bin boundaries of the
/// sorted column, deduplicated. A constant column yields one bin.
fn bin_edges(column: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = column.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let mut edges = Vec::new();
    for k in 1..bins {
        let idx = (k * n) / bins;
        if idx < n {
            let e = sorted[idx];
            if edges.last().is_none_or(|&last| e > last) {
                edges.push(e);
            }
        }
    }
    edges
}

fn bin_of(x: f64, edges: &[f64]) -> usize {
    edges.iter().filter(|&&e| e < x).count()
}

/// Mutual information in bits between a real-valued column (discretized by
/// equal-frequency binning) and binary labels.
pub fn mutual_information(
    column: &[f64],
    labels: &[u8],
    bins: usize,
) -> Result<f64, LearnError> {
    if column.len() != labels.len() {
        return Err(LearnError::LengthMismatch { what: "column vs labels".into() });
    }
    if column.len() < 2 {
        return Err(LearnError::TooFewRows { got: column.len(), need: 2 });
    }
    let edges = bin_edges(column, bins);
    let n_bins = edges.len() + 1;
    let n = column.len() as f64;
    let mut joint = vec![[0usize; 2]; n_bins];
    for (&x, &y) in column.iter().zip(labels) {
        joint[bin_of(x, &edges)][y as usize] += 1;
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64 / n;
    let p_label = [1.0 - pos, pos];
    let mut mi = 0.0;
    for row in &joint {
        let px = (row[0] + row[1]) as f64 / n;
        if px == 0.0 {
            continue;
        }
        for y in 0..2 {
            let pxy = row[y] as f64 / n;
            if pxy > 0.0 && p_label[y] > 0.0 {
                mi += pxy * (pxy / (px * p_label[y])).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub mi_bits: f64,
}

/// All features ordered by descending mutual information with the label,
/// ties broken by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn top_names(&self, n: usize) -> Vec<&str> {
        self.entries.iter().take(n).map(|e| e.name.as_str()).collect()
    }
}

/// Ranks every feature by MI and projects the dataset down to the top `n`
/// columns, in ranking order.
pub fn select_top_features(
    ds: &Dataset,
    n: usize,
    bins: usize,
) -> Result<(FeatureRanking, Dataset), LearnError> {
    let total = ds.feature_names.len();
    if n == 0 || n > total {
        return Err(LearnError::SelectionOutOfRange { n, total });
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(total);
    for j in 0..total {
        let mi = mutual_information(&ds.column(j), &ds.labels, bins)?;
        scored.push((j, mi));
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| ds.feature_names[a.0].cmp(&ds.feature_names[b.0]))
    });
    let entries = scored
        .iter()
        .map(|&(j, mi)| RankedFeature { name: ds.feature_names[j].clone(), mi_bits: mi })
        .collect();
    let keep: Vec<usize> = scored.iter().take(n).map(|&(j, _)| j).collect();
    let projected = Dataset {
        feature_names: keep.iter().map(|&j| ds.feature_names[j].clone()).collect(),
        rows: ds.rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect(),
        labels: ds.labels.clone(),
        timestamps: ds.timestamps.clone(),
    };
    Ok((FeatureRanking { entries }, projected))
}

/// Balances classes 1:1 by duplicating minority rows uniformly at random
/// with replacement. Original rows are all retained; duplicates are appended.
pub fn oversample(ds: &Dataset, seed: u64) -> Result<Dataset, LearnError> {
    let (neg, pos) = ds.class_counts();
    if neg == 0 || pos == 0 {
        return Err(LearnError::SingleClass);
    }
    let minority: u8 = if pos < neg { 1 } else { 0 };
    let deficit = neg.abs_diff(pos);
    let pool: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == minority).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for _ in 0..deficit {
        let i = pool[rng.gen_range(0..pool.len())];
        out.rows.push(ds.rows[i].clone());
        out.labels.push(ds.labels[i]);
        out.timestamps.push(ds.timestamps[i]);
    }
    Ok(out)
}

/// A fitted base classifier of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedClassifier {
    Logistic(logistic::LogisticModel),
    Forest(forest::RandomForest),
    Mlp(mlp::MlpModel),
}

impl FittedClassifier {
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        match self {
            FittedClassifier::Logistic(m) => m.predict_proba(row),
            FittedClassifier::Forest(m) => m.predict_proba(row),
            FittedClassifier::Mlp(m) => m.predict_proba(row),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FittedClassifier::Logistic(_) => "logistic",
            FittedClassifier::Forest(_) => "forest",
            FittedClassifier::Mlp(_) => "mlp",
        }
    }

    /// Width of the rows this classifier was fitted on.
    pub fn input_width(&self) -> usize {
        match self {
            FittedClassifier::Logistic(m) => m.weights.len(),
            FittedClassifier::Forest(m) => m.n_features,
            FittedClassifier::Mlp(m) => m.w1.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("length mismatch between {what}")]
    LengthMismatch { what: String },
    #[error("row has {got} values, expected {expected}")]
    RowWidth { expected: usize, got: usize },
    #[error("labels must be 0 or 1")]
    BadLabel,
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { got: usize, need: usize },
    #[error("cannot select {n} of {total} features")]
    SelectionOutOfRange { n: usize, total: usize },
    #[error("both classes must be present")]
    SingleClass,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
        let names = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        let n = rows.len();
        Dataset::new(names, rows, labels, (0..n as i64).collect()).unwrap()
    }

    #[test]
    fn mi_of_feature_equal_to_balanced_label_is_one_bit() {
        let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let column: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let mi = mutual_information(&column, &labels, DEFAULT_MI_BINS).unwrap();
        assert!((mi - 1.0).abs() < 1e-9, "mi = {mi}");
    }

    #[test]
    fn mi_of_constant_feature_is_zero() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let column = vec![3.5; 100];
        let mi = mutual_information(&column, &labels, DEFAULT_MI_BINS).unwrap();
        assert_eq!(mi, 0.0);
    }

    // Independent oracle: build the contingency table directly from value
    // bins computed by a separate quantile routine, then sum the MI terms.
    fn mi_oracle(column: &[f64], labels: &[u8], bins: usize) -> f64 {
        let mut sorted = column.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len();
        let mut cuts: Vec<f64> = (1..bins)
            .map(|k| sorted[(k * n) / bins])
            .collect();
        cuts.dedup();
        let assign = |x: f64| cuts.iter().take_while(|&&c| c < x).count();
        let nb = cuts.len() + 1;
        let mut table = vec![vec![0f64; 2]; nb];
        for (&x, &y) in column.iter().zip(labels) {
            table[assign(x)][y as usize] += 1.0;
        }
        let total: f64 = n as f64;
        let mut mi = 0.0;
        for row in &table {
            let px: f64 = (row[0] + row[1]) / total;
            for (y, &count) in row.iter().enumerate() {
                let py: f64 =
                    labels.iter().filter(|&&l| l as usize == y).count() as f64 / total;
                let pxy = count / total;
                if pxy > 0.0 {
                    mi += pxy * (pxy / (px * py)).log2();
                }
            }
        }
        mi
    }

    #[test]
    fn mi_matches_contingency_oracle_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let column: Vec<f64> = (0..200).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels: Vec<u8> = column
            .iter()
            .map(|&x| if x + rng.gen_range(-1.0..1.0) > 0.0 { 1 } else { 0 })
            .collect();
        let got = mutual_information(&column, &labels, DEFAULT_MI_BINS).unwrap();
        let want = mi_oracle(&column, &labels, DEFAULT_MI_BINS);
        assert!((got - want).abs() < 1e-9, "got {got}, oracle {want}");
    }

    #[test]
    fn mi_is_symmetric_for_binary_pairs() {
        // With both variables binary, binning is the identity and the
        // definition is symmetric in its arguments.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<u8> = (0..300).map(|_| rng.gen_range(0..2) as u8).collect();
        let b: Vec<u8> = a
            .iter()
            .map(|&x| if rng.gen_bool(0.8) { x } else { 1 - x })
            .collect();
        let af: Vec<f64> = a.iter().map(|&v| v as f64).collect();
        let bf: Vec<f64> = b.iter().map(|&v| v as f64).collect();
        let ab = mutual_information(&af, &b, 2).unwrap();
        let ba = mutual_information(&bf, &a, 2).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn mi_bounded_by_label_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let column: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
            let labels: Vec<u8> = (0..100).map(|_| rng.gen_range(0..2) as u8).collect();
            let p = labels.iter().filter(|&&l| l == 1).count() as f64 / 100.0;
            let h = if p == 0.0 || p == 1.0 {
                0.0
            } else {
                -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
            };
            let mi = mutual_information(&column, &labels, DEFAULT_MI_BINS).unwrap();
            assert!(mi >= 0.0);
            assert!(mi <= h + 1e-9, "mi {mi} exceeds H(y) {h}");
        }
    }

    #[test]
    fn mi_length_mismatch_errors() {
        assert!(matches!(
            mutual_information(&[1.0, 2.0], &[0], DEFAULT_MI_BINS),
            Err(LearnError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn selection_puts_label_copy_first_and_projects() {
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| vec![(i as f64).sin(), l as f64, 0.0])
            .collect();
        let d = ds(rows, labels);
        let (ranking, projected) = select_top_features(&d, 1, DEFAULT_MI_BINS).unwrap();
        assert_eq!(ranking.entries[0].name, "f1");
        assert_eq!(projected.feature_names, vec!["f1"]);
        assert_eq!(projected.rows[3], vec![1.0]);
    }

    #[test]
    fn selection_breaks_zero_mi_ties_by_name() {
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![1.0, 1.0]).collect();
        let names = vec!["zeta".to_string(), "alpha".to_string()];
        let d = Dataset::new(names, rows, labels, (0..40).collect()).unwrap();
        let (ranking, _) = select_top_features(&d, 2, DEFAULT_MI_BINS).unwrap();
        assert_eq!(ranking.entries[0].name, "alpha");
        assert_eq!(ranking.entries[1].name, "zeta");
    }

    #[test]
    fn selection_full_width_keeps_all_columns_in_rank_order() {
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| vec![0.0, l as f64])
            .collect();
        let d = ds(rows, labels);
        let (_, projected) = select_top_features(&d, 2, DEFAULT_MI_BINS).unwrap();
        assert_eq!(projected.feature_names, vec!["f1", "f0"]);
    }

    #[test]
    fn selection_rejects_out_of_range() {
        let d = ds(vec![vec![1.0], vec![2.0]], vec![0, 1]);
        assert!(select_top_features(&d, 0, 10).is_err());
        assert!(select_top_features(&d, 2, 10).is_err());
    }

    #[test]
    fn oversample_balances_to_equal_counts() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        let d = ds(rows, labels);
        let out = oversample(&d, 5).unwrap();
        let pos = out.labels.iter().filter(|&&l| l == 1).count();
        let neg = out.labels.len() - pos;
        assert_eq!(pos, 9);
        assert_eq!(neg, 9);
        // Originals retained as a prefix.
        assert_eq!(&out.rows[..12], &d.rows[..]);
        // Every appended row is a copy of a minority row.
        for (row, &label) in out.rows[12..].iter().zip(&out.labels[12..]) {
            assert_eq!(label, 1);
            assert!(d.rows[9..].contains(row));
        }
    }

    #[test]
    fn oversample_is_seed_deterministic_and_noop_when_balanced() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let d = ds(rows.clone(), labels.clone());
        assert_eq!(oversample(&d, 1).unwrap(), d);

        let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let d = ds(rows, vec![0, 0, 0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(oversample(&d, 42).unwrap(), oversample(&d, 42).unwrap());
    }

    #[test]
    fn oversample_rejects_single_class() {
        let d = ds(vec![vec![1.0], vec![2.0]], vec![1, 1]);
        assert!(matches!(oversample(&d, 0), Err(LearnError::SingleClass)));
    }
}
