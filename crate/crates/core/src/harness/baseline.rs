//! Reference voting baseline evaluated on the same fold plans as the
//! detector. Logs are scrubbed of volatile tokens and turned into tf-idf
//! vectors for a first forest; a second forest sees the structured features
//! plus the first forest's score; a weighted vote over the two scores is
//! tuned on the validation slice.
//!
//! The method this adapts trains gradient-boosted trees. That learner is
//! substituted with this crate's random forest; everything else (cleaning,
//! tf-idf, the score handoff from the log model to the second model, the
//! vote) follows the original recipe.

use rayon::prelude::*;

use crate::learners::forest::{self, ForestConfig};
use crate::learners::{FittedClassifier, LearnError};

use super::{
    check_plan, group_tag, metrics, mix_seed, single_class, slice_rows, ChosenParams, EvalRow,
    FoldGroup, FoldPlan, GroupOutcome, HarnessError, ModelEvaluation,
};

pub const BASELINE_MODEL_NAME: &str = "baseline-adapted";

/// Vocabulary size cap for the tf-idf representation.
const VOCABULARY_CAP: usize = 500;

/// Removes tokens that vary between otherwise identical failures: URLs,
/// filesystem paths, long hex identifiers, and long digit runs.
pub fn clean_log(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for line in raw.lines() {
        let mut kept = Vec::new();
        for token in line.split_whitespace() {
            if token.starts_with("http://") || token.starts_with("https://") {
                continue;
            }
            if token.contains('/') || token.contains('\\') {
                continue;
            }
            let body: &str = token.trim_matches(|c: char| !c.is_ascii_alphanumeric());
            if body.len() >= 7 && body.chars().all(|c| c.is_ascii_hexdigit()) {
                continue;
            }
            if body.len() >= 4 && body.chars().all(|c| c.is_ascii_digit()) {
                continue;
            }
            kept.push(token);
        }
        out.push_str(&kept.join(" "));
        out.push('\n');
    }
    out
}

/// Lowercased alphanumeric tokens, dropping single characters and pure
/// numbers.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| t.len() >= 2)
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

/// Term list and inverse document frequencies learned from training logs
/// only. Terms are the most document-frequent, capped at
/// [`VOCABULARY_CAP`]; ties break alphabetically.
pub struct TfidfVocabulary {
    terms: Vec<String>,
    idf: Vec<f64>,
}

impl TfidfVocabulary {
    pub fn fit(train_docs: &[Vec<String>]) -> TfidfVocabulary {
        let mut df = std::collections::BTreeMap::<&str, usize>::new();
        for doc in train_docs {
            let mut seen = std::collections::BTreeSet::new();
            for term in doc {
                if seen.insert(term.as_str()) {
                    *df.entry(term).or_insert(0) += 1;
                }
            }
        }
        let mut by_frequency: Vec<(&str, usize)> = df.into_iter().collect();
        by_frequency.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        by_frequency.truncate(VOCABULARY_CAP);
        let n = train_docs.len().max(1) as f64;
        let idf = by_frequency.iter().map(|&(_, df)| (n / (1.0 + df as f64)).ln() + 1.0).collect();
        let terms = by_frequency.into_iter().map(|(t, _)| t.to_string()).collect();
        TfidfVocabulary { terms, idf }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// L2-normalized tf-idf vector; terms outside the vocabulary are
    /// ignored.
    pub fn vectorize(&self, doc: &[String]) -> Vec<f64> {
        let index: std::collections::BTreeMap<&str, usize> =
            self.terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut v = vec![0.0; self.terms.len()];
        for term in doc {
            if let Some(&i) = index.get(term.as_str()) {
                v[i] += 1.0;
            }
        }
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

struct VoteScores {
    log: Vec<f64>,
    combined: Vec<f64>,
}

fn fit_group(
    rows: &[EvalRow],
    group: &FoldGroup,
    seed: u64,
) -> Result<(VoteScores, VoteScores), HarnessError> {
    let train = slice_rows(rows, group.train);
    let val = slice_rows(rows, group.val);
    let test = slice_rows(rows, group.test);
    let tag = group_tag(group);

    let tokens = |rs: &[EvalRow]| -> Vec<Vec<String>> {
        rs.iter().map(|r| tokenize(&clean_log(&r.doc.raw))).collect()
    };
    let train_tokens = tokens(train);
    let vocabulary = TfidfVocabulary::fit(&train_tokens);
    let tfidf =
        |ts: &[Vec<String>]| -> Vec<Vec<f64>> { ts.iter().map(|t| vocabulary.vectorize(t)).collect() };

    let train_labels: Vec<u8> = train.iter().map(|r| r.label).collect();
    let train_tfidf = tfidf(&train_tokens);
    let model_a = FittedClassifier::Forest(forest::fit(
        &train_tfidf,
        &train_labels,
        mix_seed(seed, tag, 1),
        ForestConfig::default(),
    )?);

    let log_scores = |rs: &[EvalRow]| -> Vec<f64> {
        tfidf(&tokens(rs)).iter().map(|v| model_a.predict_proba(v)).collect()
    };
    let with_log_score = |rs: &[EvalRow], scores: &[f64]| -> Vec<Vec<f64>> {
        rs.iter()
            .zip(scores)
            .map(|(r, &s)| {
                let mut v = r.features.clone();
                v.push(s);
                v
            })
            .collect()
    };

    // Model B must see honest log scores for training rows. In-sample
    // predictions from model A are near-perfect by construction and would
    // teach model B to lean on a feature that is noise at prediction time,
    // so train-row scores come from two cross-fitted halves; the full-train
    // model A still scores validation and test rows.
    let train_log = cross_fit_scores(&train_tfidf, &train_labels, seed, tag)
        .unwrap_or_else(|| train_tfidf.iter().map(|v| model_a.predict_proba(v)).collect());
    let model_b = FittedClassifier::Forest(forest::fit(
        &with_log_score(train, &train_log),
        &train_labels,
        mix_seed(seed, tag, 2),
        ForestConfig::default(),
    )?);

    let score_slice = |rs: &[EvalRow]| -> VoteScores {
        let log = log_scores(rs);
        let combined =
            with_log_score(rs, &log).iter().map(|v| model_b.predict_proba(v)).collect();
        VoteScores { log, combined }
    };
    Ok((score_slice(val), score_slice(test)))
}

/// Scores each training row with a forest fitted on the other half of the
/// training window. `None` when either half cannot support a fit (too few
/// rows or one class); the caller then falls back to in-sample scores.
fn cross_fit_scores(
    tfidf: &[Vec<f64>],
    labels: &[u8],
    seed: u64,
    tag: u64,
) -> Option<Vec<f64>> {
    let mid = tfidf.len() / 2;
    let mut scores = vec![0.0; tfidf.len()];
    for (salt, (fit, score)) in [((0..mid), (mid..tfidf.len())), ((mid..tfidf.len()), (0..mid))]
        .into_iter()
        .enumerate()
        .map(|(i, halves)| (3 + i as u64, halves))
    {
        let rows: Vec<Vec<f64>> = fit.clone().map(|i| tfidf[i].clone()).collect();
        let half_labels: Vec<u8> = fit.map(|i| labels[i]).collect();
        let fitted = forest::fit(&rows, &half_labels, mix_seed(seed, tag, salt), ForestConfig::default());
        match fitted {
            Ok(model) => {
                let model = FittedClassifier::Forest(model);
                for i in score {
                    scores[i] = model.predict_proba(&tfidf[i]);
                }
            }
            Err(LearnError::SingleClass | LearnError::TooFewRows { .. }) => return None,
            Err(_) => return None,
        }
    }
    Some(scores)
}

fn vote(scores: &VoteScores, w: f64) -> Vec<f64> {
    scores
        .log
        .iter()
        .zip(&scores.combined)
        .map(|(&a, &b)| w * a + (1.0 - w) * b)
        .collect()
}

/// Evaluates the voting baseline on the detector's exact fold plan. The
/// vote weight and threshold are swept on the validation slice (highest F1,
/// ties to the smallest pair); groups whose training slice holds a single
/// class are skipped.
pub fn run_baseline(
    rows: &[EvalRow],
    plan: &FoldPlan,
    seed: u64,
) -> Result<ModelEvaluation, HarnessError> {
    check_plan(rows, plan)?;
    let weights: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let betas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();

    let results: Vec<Result<Result<GroupOutcome, String>, HarnessError>> = plan
        .groups
        .par_iter()
        .enumerate()
        .map(|(idx, group)| {
            let train = slice_rows(rows, group.train);
            if single_class(train) {
                return Ok(Err("training slice holds a single class".to_string()));
            }
            let (val_scores, test_scores) = fit_group(rows, group, seed)?;
            let val_labels: Vec<u8> =
                slice_rows(rows, group.val).iter().map(|r| r.label).collect();

            let mut best: Option<(f64, f64, f64, bool)> = None;
            for &w in &weights {
                let fused = vote(&val_scores, w);
                for &beta in &betas {
                    let scored: Vec<(f64, u8)> =
                        fused.iter().copied().zip(val_labels.iter().copied()).collect();
                    let m = metrics(&scored, beta)?;
                    if best.is_none_or(|(_, _, f1, _)| m.f1 > f1) {
                        best = Some((w, beta, m.f1, m.degenerate));
                    }
                }
            }
            let (w, beta, val_f1, val_degenerate) = best.expect("nonempty vote grid");

            let test_labels: Vec<u8> =
                slice_rows(rows, group.test).iter().map(|r| r.label).collect();
            let scored: Vec<(f64, u8)> =
                vote(&test_scores, w).into_iter().zip(test_labels).collect();
            let test = metrics(&scored, beta)?;
            Ok(Ok(GroupOutcome {
                group_index: idx,
                chosen: ChosenParams::Vote { log_weight: w, beta },
                val_f1,
                val_degenerate,
                test,
            }))
        })
        .collect();

    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for (idx, result) in results.into_iter().enumerate() {
        match result? {
            Ok(outcome) => groups.push(outcome),
            Err(reason) => skipped.push((idx, reason)),
        }
    }
    let mean = super::mean_of(&groups);
    Ok(ModelEvaluation {
        model: BASELINE_MODEL_NAME.to_string(),
        plan_fingerprint: plan.fingerprint(),
        groups,
        skipped,
        mean,
        notes: vec![
            "gradient-boosted trees substituted with this crate's random forest".to_string(),
            "fold plan identical to the detector's".to_string(),
        ],
    })
}
