//! Forward-chaining evaluation: fold planning, grid search over detector
//! hyperparameters, threshold and ranking metrics, a log-text voting
//! baseline, and a synthetic corpus generator for end-to-end checks.
//!
//! Rows are failed first-attempt jobs ordered by start time. Every fold plan
//! trains strictly on the past: train indices precede validation and test
//! indices, and hyperparameters are chosen on validation slices only, so test
//! labels can never influence model selection.

pub mod baseline;
pub mod synth;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{self, DetectorError};
use crate::diag::Diagnostic;
use crate::features::{
    CommitSummary, HistoricalBuild, JobSpan, RepoHistory, StructuredFeatureVector,
};
use crate::ingest::BuildBundle;
use crate::labeler;
use crate::learners::{
    forest, logistic, mlp, oversample, select_top_features, Dataset, FittedClassifier,
    LearnError, DEFAULT_MI_BINS,
};
use crate::logsem::{p_log, train_log_model, LabeledDoc, LogDocument, VectorIndex};
use crate::taxonomy::PatternLibrary;

/// Half-open index range into the time-ordered row list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub start: usize,
    pub end: usize,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// One train/validation/test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldGroup {
    pub train: Slice,
    pub val: Slice,
    pub test: Slice,
}

/// Ten expanding-window groups over one project's rows: five rounds whose
/// training window grows from 50% to 90% in 10% steps, each followed by a 5%
/// validation and a 5% test slice, plus the same five rounds with validation
/// and test swapped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_rows: usize,
    pub groups: Vec<FoldGroup>,
}

/// Smallest row count for which every 5% slice is nonempty.
pub const MIN_PLAN_ROWS: usize = 20;

/// Builds the ten-group expanding-window plan for `n_rows` time-ordered rows.
pub fn forward_chaining_plan(n_rows: usize) -> Result<FoldPlan, HarnessError> {
    let slice = n_rows * 5 / 100;
    if slice == 0 {
        return Err(HarnessError::PlanInfeasible { n_rows, minimum: MIN_PLAN_ROWS });
    }
    let mut groups = Vec::with_capacity(10);
    for round in 0..5 {
        let train_end = n_rows * (50 + 10 * round) / 100;
        groups.push(FoldGroup {
            train: Slice { start: 0, end: train_end },
            val: Slice { start: train_end, end: train_end + slice },
            test: Slice { start: train_end + slice, end: train_end + 2 * slice },
        });
    }
    for round in 0..5 {
        let g = groups[round];
        groups.push(FoldGroup { train: g.train, val: g.test, test: g.val });
    }
    let plan = FoldPlan { n_rows, groups };
    debug_assert!(plan.leakage_free());
    Ok(plan)
}

impl FoldPlan {
    /// True when every group trains strictly on rows earlier than all of its
    /// validation and test rows.
    pub fn leakage_free(&self) -> bool {
        self.groups.iter().all(|g| {
            g.train.start == 0
                && g.train.end <= g.val.start.min(g.test.start)
                && g.val.end <= self.n_rows
                && g.test.end <= self.n_rows
                && g.val.len() == g.test.len()
                && (g.val.end <= g.test.start || g.test.end <= g.val.start)
        })
    }

    /// Stable textual identity of the split bounds, recorded per evaluated
    /// model so reports can prove every model saw the same plan.
    pub fn fingerprint(&self) -> String {
        let mut out = format!("n={}", self.n_rows);
        for g in &self.groups {
            out.push_str(&format!(
                ";{}-{}|{}-{}|{}-{}",
                g.train.start, g.train.end, g.val.start, g.val.end, g.test.start, g.test.end
            ));
        }
        out
    }
}

/// Hyperparameter grid: neighbor count K, selected-feature count F, fusion
/// weight alpha, and decision threshold beta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k_values: Vec<usize>,
    pub f_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
}

impl GridSpec {
    /// The full search space: K in 5..=30 step 5, F from
    /// {5,10,20,30,40,50,60}, alpha 0.0..=1.0 step 0.1, beta 0.1..=0.9 step
    /// 0.1; 4158 combinations.
    pub fn full() -> GridSpec {
        GridSpec {
            k_values: vec![5, 10, 15, 20, 25, 30],
            f_values: vec![5, 10, 20, 30, 40, 50, 60],
            alpha_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            beta_values: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.k_values.len()
            * self.f_values.len()
            * self.alpha_values.len()
            * self.beta_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.is_empty() {
            return Err(HarnessError::BadGrid("every axis needs at least one value".into()));
        }
        if self.alpha_values.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(HarnessError::BadGrid("alpha values must lie in [0,1]".into()));
        }
        if self.beta_values.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(HarnessError::BadGrid("beta values must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// Axes sorted ascending and deduplicated, so ascending iteration breaks
    /// ties toward the lexicographically smallest configuration.
    fn normalized(&self) -> GridSpec {
        let mut g = self.clone();
        g.k_values.sort_unstable();
        g.k_values.dedup();
        g.f_values.sort_unstable();
        g.f_values.dedup();
        g.alpha_values.sort_by(f64::total_cmp);
        g.alpha_values.dedup();
        g.beta_values.sort_by(f64::total_cmp);
        g.beta_values.dedup();
        g
    }
}

/// Threshold metrics plus the threshold-free ranking statistic. `degenerate`
/// marks zero-division conventions (no predicted positives, no actual
/// positives) or a single-class input where the ranking statistic defaults
/// to 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub degenerate: bool,
}

/// Precision, recall, and F1 at threshold `beta` (strictly-greater rule)
/// plus rank-based AUC with midrank tie handling.
pub fn metrics(scored: &[(f64, u8)], beta: f64) -> Result<Metrics, HarnessError> {
    if scored.is_empty() {
        return Err(HarnessError::EmptyMetrics);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fne = 0usize;
    for &(p, y) in scored {
        let predicted = p > beta;
        match (predicted, y) {
            (true, 1) => tp += 1,
            (true, _) => fp += 1,
            (false, 1) => fne += 1,
            (false, _) => {}
        }
    }
    let mut degenerate = false;
    let precision = if tp + fp == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fne == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fne) as f64
    };
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let auc = match rank_auc(scored) {
        Some(a) => a,
        None => {
            degenerate = true;
            0.5
        }
    };
    Ok(Metrics { precision, recall, f1, auc, degenerate })
}

/// Mann-Whitney AUC: positive ranks (midranks over ties) normalized by the
/// number of positive-negative pairs. `None` when one class is absent.
fn rank_auc(scored: &[(f64, u8)]) -> Option<f64> {
    let n_pos = scored.iter().filter(|&&(_, y)| y == 1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scored[order[j]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Ranks are 1-based; tied scores share the mean of their rank block.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if scored[idx].1 == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One evaluation example: a failed first-attempt job with its log document,
/// encoded structured features, label, and time-order key.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub job_ref: String,
    pub repo: String,
    pub build_id: u64,
    pub job_name: String,
    pub started_at: DateTime<Utc>,
    pub timestamp: i64,
    pub doc: LogDocument,
    pub features: Vec<f64>,
    pub label: u8,
}

/// Reconstructs per-repository history handles from the corpus itself:
/// builds with their initial conclusions and committers, commit summaries,
/// and job execution spans. Feature extraction windows these by time, so
/// later entries never affect earlier rows.
pub fn assemble_history(bundles: &[BuildBundle]) -> BTreeMap<String, RepoHistory> {
    let mut out: BTreeMap<String, RepoHistory> = BTreeMap::new();
    for bundle in bundles {
        let seq = &bundle.sequence;
        let history = out.entry(seq.repo().to_string()).or_default();
        let first = seq.first_attempt();
        let mut files: Vec<String> = bundle
            .changes
            .commits
            .iter()
            .flat_map(|c| c.files.iter().map(|f| f.path.clone()))
            .collect();
        files.sort();
        files.dedup();
        history.builds.push(HistoricalBuild {
            build_id: first.build_id,
            started_at: first.started_at,
            conclusion: first.outcome.conclusion(),
            committer: bundle.changes.head_committer().to_string(),
            files,
            runner: None,
        });
        for commit in &bundle.changes.commits {
            history.commits.push(CommitSummary {
                author: commit.author.clone(),
                timestamp: commit.timestamp,
                files: commit.files.iter().map(|f| f.path.clone()).collect(),
            });
        }
        for build in seq.attempts() {
            for job in &build.jobs {
                if let (Some(start), Some(end)) = (job.started_at, job.completed_at) {
                    history.job_spans.push(JobSpan { start, end });
                }
            }
        }
    }
    out
}

/// Builds the evaluation rows for every labeled failed first-attempt job,
/// ordered by (start time, repo, build id, job name). Jobs without a label
/// are skipped with a diagnostic.
pub fn assemble_rows(
    bundles: &[BuildBundle],
    labels: &BTreeMap<String, u8>,
    library: &PatternLibrary,
) -> (Vec<EvalRow>, Vec<Diagnostic>) {
    let histories = assemble_history(bundles);
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for bundle in bundles {
        let seq = &bundle.sequence;
        let history = &histories[seq.repo()];
        let logs = bundle.first_attempt_logs();
        let extracted =
            crate::features::extract_failed_jobs(seq, &logs, &bundle.changes, history, library);
        for (job, feat) in seq.initially_failed_jobs().iter().zip(&extracted) {
            debug_assert_eq!(job.job_id, feat.job_id);
            let job_ref = labeler::job_ref(seq, job);
            let Some(&label) = labels.get(&job_ref) else {
                diagnostics.push(Diagnostic::new(&job_ref, "no label for job; row skipped"));
                continue;
            };
            diagnostics.extend(feat.diagnostics.iter().cloned());
            let started_at = job.started_at.unwrap_or(seq.first_attempt().started_at);
            let log = logs.get(&job.job_id).map(String::as_str).unwrap_or("");
            rows.push(EvalRow {
                job_ref: job_ref.clone(),
                repo: seq.repo().to_string(),
                build_id: seq.build_id(),
                job_name: job.name.clone(),
                started_at,
                timestamp: started_at.timestamp(),
                doc: LogDocument::build(job_ref, log),
                features: feat.vector.encode(),
                label,
            });
        }
    }
    rows.sort_by(|a, b| {
        (a.started_at, &a.repo, a.build_id, &a.job_name)
            .cmp(&(b.started_at, &b.repo, b.build_id, &b.job_name))
    });
    (rows, diagnostics)
}

/// Classifier family evaluated on the structured channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Forest,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Forest => "forest",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lr" | "logistic" => Ok(ModelKind::Logistic),
            "rf" | "forest" => Ok(ModelKind::Forest),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(format!("unknown model kind {other:?}; expected lr, rf, or mlp")),
        }
    }
}

fn fit_classifier(
    kind: ModelKind,
    rows: &[Vec<f64>],
    labels: &[u8],
    seed: u64,
) -> Result<FittedClassifier, LearnError> {
    match kind {
        ModelKind::Logistic => Ok(FittedClassifier::Logistic(logistic::fit(
            rows,
            labels,
            logistic::LogisticConfig::default(),
        ))),
        ModelKind::Forest => forest::fit(rows, labels, seed, forest::ForestConfig::default())
            .map(FittedClassifier::Forest),
        ModelKind::Mlp => {
            mlp::fit(rows, labels, seed, mlp::MlpConfig::default()).map(FittedClassifier::Mlp)
        }
    }
}

/// Trains a standalone detector on every given row; the caller decides the
/// training population. The log channel indexes all rows at the configured
/// K, and the structured classifier is fit on class-balanced, MI-selected
/// columns at the configured F.
pub fn train_detector(
    rows: &[EvalRow],
    config: crate::detector::DetectorConfig,
    kind: ModelKind,
    seed: u64,
) -> Result<crate::detector::DetectorModel, HarnessError> {
    config.validate()?;
    if rows.len() < 2 {
        return Err(LearnError::TooFewRows { got: rows.len(), need: 2 }.into());
    }
    let docs: Vec<LabeledDoc> = rows
        .iter()
        .map(|r| LabeledDoc { doc: r.doc.clone(), label: r.label, timestamp: r.timestamp })
        .collect();
    let index = VectorIndex::build(format!("train-{}", rows.len()), &docs);
    let log_model = train_log_model(&index, &docs, config.k, Default::default());

    let ds = Dataset::new(
        StructuredFeatureVector::feature_names().to_vec(),
        rows.iter().map(|r| r.features.clone()).collect(),
        rows.iter().map(|r| r.label).collect(),
        rows.iter().map(|r| r.timestamp).collect(),
    )?;
    let (ranking, projected) = select_top_features(&ds, config.f, DEFAULT_MI_BINS)?;
    let balanced = oversample(&projected, mix_seed(seed, 0, config.f as u64))?;
    let classifier =
        fit_classifier(kind, &balanced.rows, &balanced.labels, mix_seed(seed, 1, config.f as u64))?;
    crate::detector::DetectorModel::new(config, index, log_model, ranking, classifier)
        .map_err(Into::into)
}

/// Deterministic seed mixer so every (group, axis) fit gets its own stream
/// regardless of evaluation order or parallelism.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    x
}

/// Identifies a group by its slice bounds rather than its position in the
/// plan, so reordering the groups cannot change any fitted model.
pub(crate) fn group_tag(group: &FoldGroup) -> u64 {
    ((group.train.end as u64) << 42)
        ^ ((group.val.start as u64) << 21)
        ^ (group.test.start as u64)
}

/// Channel scores for one group's validation and test slices.
struct SliceScores {
    val: Vec<f64>,
    test: Vec<f64>,
}

/// Per-group channel cache: the log channel is refit once per K and the
/// structured channel once per F; the alpha/beta sweep reuses these scores.
struct GroupChannels {
    log: Vec<(usize, SliceScores)>,
    strux: Vec<(usize, SliceScores)>,
}

fn slice_rows(rows: &[EvalRow], s: Slice) -> &[EvalRow] {
    &rows[s.start..s.end]
}

fn score_channels(
    rows: &[EvalRow],
    group: &FoldGroup,
    grid: &GridSpec,
    kind: ModelKind,
    seed: u64,
    group_idx: usize,
) -> Result<GroupChannels, HarnessError> {
    let train = slice_rows(rows, group.train);
    let val = slice_rows(rows, group.val);
    let test = slice_rows(rows, group.test);

    let train_docs: Vec<LabeledDoc> = train
        .iter()
        .map(|r| LabeledDoc { doc: r.doc.clone(), label: r.label, timestamp: r.timestamp })
        .collect();
    let index = VectorIndex::build(format!("group-{group_idx}-train"), &train_docs);
    let log = grid
        .k_values
        .iter()
        .map(|&k| {
            let model = train_log_model(&index, &train_docs, k, Default::default());
            let score = |rs: &[EvalRow]| rs.iter().map(|r| p_log(&model, &index, &r.doc)).collect();
            (k, SliceScores { val: score(val), test: score(test) })
        })
        .collect();

    let names = StructuredFeatureVector::feature_names().to_vec();
    let train_ds = Dataset::new(
        names.clone(),
        train.iter().map(|r| r.features.clone()).collect(),
        train.iter().map(|r| r.label).collect(),
        train.iter().map(|r| r.timestamp).collect(),
    )?;
    let name_index: BTreeMap<&str, usize> =
        names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let tag = group_tag(group);
    let mut strux = Vec::with_capacity(grid.f_values.len());
    for &f in &grid.f_values {
        let (ranking, projected) = select_top_features(&train_ds, f, DEFAULT_MI_BINS)?;
        let balanced = oversample(&projected, mix_seed(seed, tag, f as u64))?;
        let fitted = fit_classifier(
            kind,
            &balanced.rows,
            &balanced.labels,
            mix_seed(seed, tag, f as u64 + 1000),
        )?;
        let keep: Vec<usize> = ranking.top_names(f).iter().map(|n| name_index[n]).collect();
        let score = |rs: &[EvalRow]| {
            rs.iter()
                .map(|r| {
                    let projected: Vec<f64> = keep.iter().map(|&j| r.features[j]).collect();
                    fitted.predict_proba(&projected)
                })
                .collect()
        };
        strux.push((f, SliceScores { val: score(val), test: score(test) }));
    }
    Ok(GroupChannels { log, strux })
}

/// Hyperparameters chosen for one group, either by the detector's grid
/// search or by the baseline's vote sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChosenParams {
    Detector { k: usize, f: usize, alpha: f64, beta: f64 },
    Vote { log_weight: f64, beta: f64 },
}

impl std::fmt::Display for ChosenParams {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChosenParams::Detector { k, f, alpha, beta } => {
                write!(out, "K={k} F={f} alpha={alpha:.1} beta={beta:.1}")
            }
            ChosenParams::Vote { log_weight, beta } => {
                write!(out, "w_log={log_weight:.1} beta={beta:.1}")
            }
        }
    }
}

/// Grid-search outcome for one group before test scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSelection {
    pub group_index: usize,
    pub chosen: ChosenParams,
    pub val_f1: f64,
    /// True when the winning validation metrics hit a zero-division
    /// convention or a single-class slice.
    pub val_degenerate: bool,
}

/// Chooses the configuration with the highest validation F1; ties resolve to
/// the lexicographically smallest (K, F, alpha, beta). Only validation
/// labels are consulted.
fn select_config(
    channels: &GroupChannels,
    val_labels: &[u8],
    grid: &GridSpec,
    group_index: usize,
) -> Result<GroupSelection, HarnessError> {
    let mut best: Option<GroupSelection> = None;
    for (k, log) in &channels.log {
        for (f, strux) in &channels.strux {
            for &alpha in &grid.alpha_values {
                let fused: Vec<f64> = log
                    .val
                    .iter()
                    .zip(&strux.val)
                    .map(|(&pl, &ps)| detector::fuse(pl, ps, alpha))
                    .collect::<Result<_, _>>()?;
                for &beta in &grid.beta_values {
                    let scored: Vec<(f64, u8)> =
                        fused.iter().copied().zip(val_labels.iter().copied()).collect();
                    let m = metrics(&scored, beta)?;
                    if best.is_none_or(|b| m.f1 > b.val_f1) {
                        best = Some(GroupSelection {
                            group_index,
                            chosen: ChosenParams::Detector { k: *k, f: *f, alpha, beta },
                            val_f1: m.f1,
                            val_degenerate: m.degenerate,
                        });
                    }
                }
            }
        }
    }
    best.ok_or_else(|| HarnessError::BadGrid("empty grid".into()))
}

/// Runs the validation-slice grid search for every group of the plan.
/// Returns the selected configuration per group; test rows contribute only
/// their channel scores, never their labels.
pub fn grid_search(
    rows: &[EvalRow],
    plan: &FoldPlan,
    grid: &GridSpec,
    kind: ModelKind,
    seed: u64,
) -> Result<Vec<GroupSelection>, HarnessError> {
    grid.validate()?;
    let grid = grid.normalized();
    check_plan(rows, plan)?;
    plan.groups
        .par_iter()
        .enumerate()
        .map(|(idx, group)| {
            let channels = score_channels(rows, group, &grid, kind, seed, idx)?;
            let val_labels: Vec<u8> =
                slice_rows(rows, group.val).iter().map(|r| r.label).collect();
            select_config(&channels, &val_labels, &grid, idx)
        })
        .collect()
}

fn check_plan(rows: &[EvalRow], plan: &FoldPlan) -> Result<(), HarnessError> {
    if plan.n_rows != rows.len() || !plan.leakage_free() {
        return Err(HarnessError::PlanMismatch { plan_rows: plan.n_rows, rows: rows.len() });
    }
    Ok(())
}

/// One group's full outcome: the chosen configuration and the test-slice
/// metrics it achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub group_index: usize,
    pub chosen: ChosenParams,
    pub val_f1: f64,
    pub val_degenerate: bool,
    pub test: Metrics,
}

/// Mean metrics over the evaluated groups of one model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

fn mean_of(groups: &[GroupOutcome]) -> MeanMetrics {
    if groups.is_empty() {
        return MeanMetrics::default();
    }
    let n = groups.len() as f64;
    MeanMetrics {
        precision: groups.iter().map(|g| g.test.precision).sum::<f64>() / n,
        recall: groups.iter().map(|g| g.test.recall).sum::<f64>() / n,
        f1: groups.iter().map(|g| g.test.f1).sum::<f64>() / n,
        auc: groups.iter().map(|g| g.test.auc).sum::<f64>() / n,
    }
}

/// Evaluation of one model over all groups of one project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub plan_fingerprint: String,
    pub groups: Vec<GroupOutcome>,
    /// (group index, reason) for groups that could not be evaluated.
    pub skipped: Vec<(usize, String)>,
    pub mean: MeanMetrics,
    pub notes: Vec<String>,
}

/// Evaluates one classifier kind across the plan: grid search on validation,
/// then the chosen configuration scores the test slice. Groups whose
/// training slice holds a single class are skipped with a note.
pub fn evaluate_detector(
    rows: &[EvalRow],
    plan: &FoldPlan,
    grid: &GridSpec,
    kind: ModelKind,
    seed: u64,
) -> Result<ModelEvaluation, HarnessError> {
    grid.validate()?;
    let grid = grid.normalized();
    check_plan(rows, plan)?;
    let results: Vec<Result<Result<GroupOutcome, String>, HarnessError>> = plan
        .groups
        .par_iter()
        .enumerate()
        .map(|(idx, group)| {
            let train = slice_rows(rows, group.train);
            if single_class(train) {
                return Ok(Err("training slice holds a single class".to_string()));
            }
            let channels = score_channels(rows, group, &grid, kind, seed, idx)?;
            let val_labels: Vec<u8> =
                slice_rows(rows, group.val).iter().map(|r| r.label).collect();
            let selection = select_config(&channels, &val_labels, &grid, idx)?;
            let ChosenParams::Detector { k, f, alpha, beta } = selection.chosen else {
                unreachable!("detector selection");
            };
            let log = &channels.log.iter().find(|(kk, _)| *kk == k).unwrap().1;
            let strux = &channels.strux.iter().find(|(ff, _)| *ff == f).unwrap().1;
            let test_labels: Vec<u8> =
                slice_rows(rows, group.test).iter().map(|r| r.label).collect();
            let scored: Vec<(f64, u8)> = log
                .test
                .iter()
                .zip(&strux.test)
                .zip(&test_labels)
                .map(|((&pl, &ps), &y)| Ok((detector::fuse(pl, ps, alpha)?, y)))
                .collect::<Result<_, DetectorError>>()?;
            let test = metrics(&scored, beta)?;
            Ok(Ok(GroupOutcome {
                group_index: idx,
                chosen: selection.chosen,
                val_f1: selection.val_f1,
                val_degenerate: selection.val_degenerate,
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
    let mean = mean_of(&groups);
    Ok(ModelEvaluation {
        model: kind.name().to_string(),
        plan_fingerprint: plan.fingerprint(),
        groups,
        skipped,
        mean,
        notes: Vec::new(),
    })
}

pub(crate) fn single_class(rows: &[EvalRow]) -> bool {
    let pos = rows.iter().filter(|r| r.label == 1).count();
    pos == 0 || pos == rows.len()
}

/// Per-project results: the plan plus every evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub project: String,
    pub n_rows: usize,
    pub plan: FoldPlan,
    pub models: Vec<ModelEvaluation>,
}

/// Cross-project summary line for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

/// The full evaluation document: per-project model results plus averages
/// and medians across projects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub projects: Vec<ProjectReport>,
    pub averages: Vec<SummaryRow>,
    pub medians: Vec<SummaryRow>,
    pub notes: Vec<String>,
}

/// What to evaluate: the grid, the structured-channel model kinds, and
/// whether the voting baseline runs alongside on the identical plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub grid: GridSpec,
    pub kinds: Vec<ModelKind>,
    pub include_baseline: bool,
    pub seed: u64,
}

/// Evaluates every model per project: rows are grouped by repository, folds
/// are planned per project, and each model (plus the baseline when enabled)
/// runs on that identical plan. Projects with too few rows are skipped with
/// a note.
pub fn evaluate_rows(
    rows: &[EvalRow],
    opts: &EvaluateOptions,
) -> Result<EvaluationReport, HarnessError> {
    opts.grid.validate()?;
    let mut notes = Vec::new();
    let mut projects = Vec::new();

    let mut by_project: BTreeMap<&str, Vec<EvalRow>> = BTreeMap::new();
    for row in rows {
        by_project.entry(row.repo.as_str()).or_default().push(row.clone());
    }

    for (project, project_rows) in by_project {
        let plan = match forward_chaining_plan(project_rows.len()) {
            Ok(p) => p,
            Err(HarnessError::PlanInfeasible { n_rows, minimum }) => {
                notes.push(format!(
                    "project {project} skipped: {n_rows} rows, need at least {minimum}"
                ));
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut models = Vec::new();
        for &kind in &opts.kinds {
            models.push(evaluate_detector(&project_rows, &plan, &opts.grid, kind, opts.seed)?);
        }
        if opts.include_baseline {
            models.push(baseline::run_baseline(&project_rows, &plan, opts.seed)?);
        }
        let fingerprint = plan.fingerprint();
        for model in &models {
            assert_eq!(
                model.plan_fingerprint, fingerprint,
                "every model must be evaluated on the identical fold plan"
            );
        }
        projects.push(ProjectReport { project: project.to_string(), n_rows: plan.n_rows, plan, models });
    }

    let (averages, medians) = summarize(&projects);
    Ok(EvaluationReport {
        schema_version: crate::SCHEMA_VERSION,
        seed: opts.seed,
        projects,
        averages,
        medians,
        notes,
    })
}

/// Full pipeline entry: assembles rows from corpus bundles and labels, then
/// evaluates. Row-assembly diagnostics are folded into the report notes.
pub fn evaluate_corpus(
    bundles: &[BuildBundle],
    labels: &BTreeMap<String, u8>,
    library: &PatternLibrary,
    opts: &EvaluateOptions,
) -> Result<EvaluationReport, HarnessError> {
    let (rows, diagnostics) = assemble_rows(bundles, labels, library);
    let mut report = evaluate_rows(&rows, opts)?;
    for d in diagnostics {
        if d.message.contains("row skipped") {
            report.notes.push(format!("{}: {}", d.context, d.message));
        }
    }
    Ok(report)
}

fn summarize(projects: &[ProjectReport]) -> (Vec<SummaryRow>, Vec<SummaryRow>) {
    let mut per_model: BTreeMap<&str, Vec<MeanMetrics>> = BTreeMap::new();
    let mut model_order: Vec<&str> = Vec::new();
    for project in projects {
        for model in &project.models {
            if !model_order.contains(&model.model.as_str()) {
                model_order.push(&model.model);
            }
            per_model.entry(&model.model).or_default().push(model.mean);
        }
    }
    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(f64::total_cmp);
        match xs.len() {
            0 => 0.0,
            n if n % 2 == 1 => xs[n / 2],
            n => (xs[n / 2 - 1] + xs[n / 2]) / 2.0,
        }
    };
    let mut averages = Vec::new();
    let mut medians = Vec::new();
    for model in model_order {
        let means = &per_model[model];
        let n = means.len() as f64;
        averages.push(SummaryRow {
            model: model.to_string(),
            precision: means.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: means.iter().map(|m| m.recall).sum::<f64>() / n,
            f1: means.iter().map(|m| m.f1).sum::<f64>() / n,
            auc: means.iter().map(|m| m.auc).sum::<f64>() / n,
        });
        medians.push(SummaryRow {
            model: model.to_string(),
            precision: median(means.iter().map(|m| m.precision).collect()),
            recall: median(means.iter().map(|m| m.recall).collect()),
            f1: median(means.iter().map(|m| m.f1).collect()),
            auc: median(means.iter().map(|m| m.auc).collect()),
        });
    }
    (averages, medians)
}

/// Renders the report as a fixed-width table: one row per project, four
/// metric columns per model, then average and median rows across projects.
pub fn render_text(report: &EvaluationReport) -> String {
    let model_names: Vec<&str> = report
        .averages
        .iter()
        .map(|s| s.model.as_str())
        .collect();
    let project_width = report
        .projects
        .iter()
        .map(|p| p.project.len())
        .chain(["Project".len(), "Avg.".len(), "Mid.".len()])
        .max()
        .unwrap_or(7)
        .max(7);
    let mut out = String::new();

    out.push_str(&format!("{:<project_width$}", "Project"));
    for name in &model_names {
        out.push_str(&format!(" | {:^31}", name));
    }
    out.push('\n');
    out.push_str(&format!("{:<project_width$}", ""));
    for _ in &model_names {
        out.push_str(&format!(
            " | {:>7}{:>8}{:>8}{:>8}",
            "Prec.", "Recall", "F1", "AUC"
        ));
    }
    out.push('\n');
    let total_width = project_width + model_names.len() * 34;
    out.push_str(&"-".repeat(total_width));
    out.push('\n');

    let metric_cells = |m: &MeanMetrics| {
        format!(" | {:>7.4}{:>8.4}{:>8.4}{:>8.4}", m.precision, m.recall, m.f1, m.auc)
    };
    for project in &report.projects {
        out.push_str(&format!("{:<project_width$}", project.project));
        for name in &model_names {
            match project.models.iter().find(|m| m.model == *name) {
                Some(model) => out.push_str(&metric_cells(&model.mean)),
                None => out.push_str(&format!(" | {:^31}", "-")),
            }
        }
        out.push('\n');
    }
    out.push_str(&"-".repeat(total_width));
    out.push('\n');
    for (label, rows) in [("Avg.", &report.averages), ("Mid.", &report.medians)] {
        out.push_str(&format!("{:<project_width$}", label));
        for name in &model_names {
            let row = rows.iter().find(|r| r.model == *name).unwrap();
            out.push_str(&format!(
                " | {:>7.4}{:>8.4}{:>8.4}{:>8.4}",
                row.precision, row.recall, row.f1, row.auc
            ));
        }
        out.push('\n');
    }
    for note in &report.notes {
        out.push_str(&format!("note: {note}\n"));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("fold plan infeasible for {n_rows} rows; need at least {minimum}")]
    PlanInfeasible { n_rows: usize, minimum: usize },
    #[error("fold plan covers {plan_rows} rows but {rows} were given")]
    PlanMismatch { plan_rows: usize, rows: usize },
    #[error("metrics need at least one scored row")]
    EmptyMetrics,
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("invalid synthetic spec: {0}")]
    BadSynthSpec(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
}

// Re-exported so callers need one import for the whole evaluation surface.
pub use baseline::{run_baseline, BASELINE_MODEL_NAME};
pub use synth::{generate_synthetic_corpus, write_synth_corpus, SynthCorpus, SynthSpec};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thousand_row_plan_matches_the_expanding_window_arithmetic() {
        let plan = forward_chaining_plan(1000).unwrap();
        assert_eq!(plan.groups.len(), 10);
        let g = plan.groups[0];
        assert_eq!((g.train.start, g.train.end), (0, 500));
        assert_eq!((g.val.start, g.val.end), (500, 550));
        assert_eq!((g.test.start, g.test.end), (550, 600));
        let g = plan.groups[4];
        assert_eq!((g.train.start, g.train.end), (0, 900));
        assert_eq!((g.val.start, g.val.end), (900, 950));
        assert_eq!((g.test.start, g.test.end), (950, 1000));
        let g = plan.groups[5];
        assert_eq!((g.val.start, g.val.end), (550, 600));
        assert_eq!((g.test.start, g.test.end), (500, 550));
    }

    #[test]
    fn swapped_groups_mirror_their_round() {
        let plan = forward_chaining_plan(640).unwrap();
        for round in 0..5 {
            let a = plan.groups[round];
            let b = plan.groups[round + 5];
            assert_eq!(a.train, b.train);
            assert_eq!(a.val, b.test);
            assert_eq!(a.test, b.val);
        }
    }

    #[test]
    fn plans_never_leak_for_any_feasible_size() {
        for n in [20, 21, 37, 100, 200, 999, 1000, 4158] {
            let plan = forward_chaining_plan(n).unwrap();
            assert!(plan.leakage_free(), "n = {n}");
            for g in &plan.groups {
                assert!(g.train.end > 0);
                assert!(!g.val.is_empty());
                assert!(!g.test.is_empty());
            }
        }
    }

    #[test]
    fn too_small_plans_name_the_minimum() {
        let err = forward_chaining_plan(19).unwrap_err();
        match err {
            HarnessError::PlanInfeasible { n_rows, minimum } => {
                assert_eq!(n_rows, 19);
                assert_eq!(minimum, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(forward_chaining_plan(20).is_ok());
    }

    #[test]
    fn full_grid_has_every_combination() {
        let grid = GridSpec::full();
        assert_eq!(grid.len(), 4158);
        grid.validate().unwrap();
    }

    #[test]
    fn metrics_on_a_perfect_split_are_all_one() {
        let scored = vec![(0.9, 1), (0.8, 1), (0.2, 0), (0.1, 0)];
        let m = metrics(&scored, 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.auc), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.degenerate);
    }

    #[test]
    fn all_safe_predictions_with_positives_flag_the_convention() {
        let scored = vec![(0.1, 1), (0.2, 0), (0.3, 1)];
        let m = metrics(&scored, 0.9).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn frozen_ranking_example_gives_three_quarters() {
        let scored = vec![(0.9, 1), (0.8, 0), (0.7, 1), (0.1, 0)];
        let m = metrics(&scored, 0.5).unwrap();
        assert!((m.auc - 0.75).abs() < 1e-12);
    }

    fn brute_force_auc(scored: &[(f64, u8)]) -> Option<f64> {
        let pos: Vec<f64> = scored.iter().filter(|s| s.1 == 1).map(|s| s.0).collect();
        let neg: Vec<f64> = scored.iter().filter(|s| s.1 == 0).map(|s| s.0).collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut concordant = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    concordant += 1.0;
                } else if p == n {
                    concordant += 0.5;
                }
            }
        }
        Some(concordant / (pos.len() * neg.len()) as f64)
    }

    #[test]
    fn rank_auc_matches_all_pairs_concordance_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..60 {
            let n = rng.gen_range(2..120);
            let scored: Vec<(f64, u8)> = (0..n)
                .map(|_| {
                    // Coarse scores force plenty of exact ties.
                    let p = rng.gen_range(0..=10) as f64 / 10.0;
                    (p, rng.gen_range(0..=1u8))
                })
                .collect();
            let expected = brute_force_auc(&scored);
            let got = rank_auc(&scored);
            match (expected, got) {
                (None, None) => {}
                (Some(e), Some(g)) => assert!((e - g).abs() < 1e-9, "case {case}: {e} vs {g}"),
                other => panic!("case {case}: mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn single_class_input_defaults_auc_and_flags() {
        let m = metrics(&[(0.9, 1), (0.4, 1)], 0.5).unwrap();
        assert_eq!(m.auc, 0.5);
        assert!(m.degenerate);
        assert!(metrics(&[], 0.5).is_err());
    }

    fn synthetic_rows(n: usize, seed: u64, signal: bool) -> Vec<EvalRow> {
        let spec = SynthSpec {
            n_jobs: n,
            log_signal: if signal { 0.6 } else { 0.0 },
            struct_signal: if signal { 0.6 } else { 0.0 },
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, seed).unwrap();
        let (rows, _) =
            assemble_rows(&corpus.bundles, &corpus.labels, &PatternLibrary::builtin());
        assert_eq!(rows.len(), n);
        rows
    }

    fn small_grid() -> GridSpec {
        GridSpec {
            k_values: vec![3, 5],
            f_values: vec![4, 8],
            alpha_values: vec![0.0, 0.5, 1.0],
            beta_values: vec![0.3, 0.5, 0.7],
        }
    }

    #[test]
    fn grid_of_one_point_selects_that_point() {
        let rows = synthetic_rows(40, 5, true);
        let plan = forward_chaining_plan(rows.len()).unwrap();
        let grid = GridSpec {
            k_values: vec![5],
            f_values: vec![10],
            alpha_values: vec![0.5],
            beta_values: vec![0.5],
        };
        let selections =
            grid_search(&rows, &plan, &grid, ModelKind::Logistic, 7).unwrap();
        assert_eq!(selections.len(), 10);
        for s in selections {
            assert_eq!(
                s.chosen,
                ChosenParams::Detector { k: 5, f: 10, alpha: 0.5, beta: 0.5 }
            );
        }
    }

    #[test]
    fn equal_validation_scores_pick_the_lexicographically_smaller_config() {
        // A two-beta grid where both thresholds land in the same gap of the
        // score distribution produces identical confusion matrices, so the
        // tie must resolve to the smaller beta.
        let rows = synthetic_rows(40, 9, true);
        let plan = forward_chaining_plan(rows.len()).unwrap();
        let grid = GridSpec {
            k_values: vec![5],
            f_values: vec![10],
            alpha_values: vec![1.0],
            beta_values: vec![0.498, 0.499],
        };
        let selections = grid_search(&rows, &plan, &grid, ModelKind::Logistic, 7).unwrap();
        for s in &selections {
            let ChosenParams::Detector { beta, .. } = s.chosen else { panic!() };
            // Either the two betas genuinely differ on some group (fine), or
            // they tie and the smaller one must win. Assert the tie rule on
            // groups where both were evaluated equal by rerunning the larger.
            let grid_hi = GridSpec { beta_values: vec![0.499], ..grid.clone() };
            let hi = grid_search(&rows, &plan, &grid_hi, ModelKind::Logistic, 7).unwrap();
            let hi_f1 = hi[s.group_index].val_f1;
            if (hi_f1 - s.val_f1).abs() < 1e-15 {
                assert_eq!(beta, 0.498, "group {}", s.group_index);
            }
        }
    }

    #[test]
    fn perturbing_a_groups_test_labels_never_changes_its_selection() {
        // Flipping one group's test labels may legitimately alter LATER
        // groups (their training windows absorb those rows), but the group
        // whose test slice was perturbed must select identically.
        let rows = synthetic_rows(60, 13, true);
        let plan = forward_chaining_plan(rows.len()).unwrap();
        let grid = small_grid();
        let reference = grid_search(&rows, &plan, &grid, ModelKind::Logistic, 21).unwrap();

        for (idx, group) in plan.groups.iter().enumerate() {
            let mut perturbed = rows.clone();
            for row in &mut perturbed[group.test.start..group.test.end] {
                row.label ^= 1;
            }
            let got = grid_search(&perturbed, &plan, &grid, ModelKind::Logistic, 21).unwrap();
            assert_eq!(reference[idx], got[idx], "group {idx}");
        }
    }

    #[test]
    fn detector_evaluation_reports_every_group_and_stays_in_range() {
        let rows = synthetic_rows(60, 17, true);
        let plan = forward_chaining_plan(rows.len()).unwrap();
        let eval =
            evaluate_detector(&rows, &plan, &small_grid(), ModelKind::Logistic, 3).unwrap();
        assert_eq!(eval.groups.len() + eval.skipped.len(), 10);
        assert!(!eval.groups.is_empty());
        for g in &eval.groups {
            for m in [g.test.precision, g.test.recall, g.test.f1, g.test.auc] {
                assert!((0.0..=1.0).contains(&m));
            }
        }
        assert_eq!(eval.plan_fingerprint, plan.fingerprint());
    }

    #[test]
    fn report_carries_summary_rows_and_identical_plans() {
        let rows = synthetic_rows(60, 19, true);
        let opts = EvaluateOptions {
            grid: small_grid(),
            kinds: vec![ModelKind::Logistic],
            include_baseline: true,
            seed: 5,
        };
        let report = evaluate_rows(&rows, &opts).unwrap();
        assert_eq!(report.projects.len(), 1);
        let project = &report.projects[0];
        assert_eq!(project.models.len(), 2);
        let fingerprints: Vec<&str> =
            project.models.iter().map(|m| m.plan_fingerprint.as_str()).collect();
        assert!(fingerprints.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(report.averages.len(), 2);
        assert_eq!(report.medians.len(), 2);
        assert!(report.averages.iter().any(|s| s.model == "logistic"));
        assert!(report.averages.iter().any(|s| s.model == BASELINE_MODEL_NAME));
        for s in report.averages.iter().chain(&report.medians) {
            for m in [s.precision, s.recall, s.f1, s.auc] {
                assert!((0.0..=1.0).contains(&m));
            }
        }

        let text = render_text(&report);
        assert!(text.contains("Project"));
        assert!(text.contains("Avg."));
        assert!(text.contains("Mid."));
        assert!(text.contains("Prec."));
        assert!(text.contains(BASELINE_MODEL_NAME));
    }

    #[test]
    fn group_evaluation_order_does_not_change_the_means() {
        let rows = synthetic_rows(48, 23, true);
        let plan = forward_chaining_plan(rows.len()).unwrap();
        let grid = GridSpec {
            k_values: vec![5],
            f_values: vec![8],
            alpha_values: vec![0.5],
            beta_values: vec![0.5],
        };
        let forward =
            evaluate_detector(&rows, &plan, &grid, ModelKind::Logistic, 3).unwrap();
        let mut reversed_plan = plan.clone();
        reversed_plan.groups.reverse();
        let reversed =
            evaluate_detector(&rows, &reversed_plan, &grid, ModelKind::Logistic, 3).unwrap();
        let key = |e: &ModelEvaluation| {
            let mut ms: Vec<(String, u64)> = e
                .groups
                .iter()
                .map(|g| (format!("{}", g.chosen), g.test.f1.to_bits()))
                .collect();
            ms.sort();
            ms
        };
        assert_eq!(key(&forward), key(&reversed));
        assert!((forward.mean.f1 - reversed.mean.f1).abs() < 1e-12);
    }

    #[test]
    fn trained_detector_round_trips_and_separates_held_out_rows() {
        let rows = synthetic_rows(60, 29, true);
        let (train, held) = rows.split_at(50);
        let config = crate::detector::DetectorConfig { k: 10, f: 20, alpha: 0.5, beta: 0.5 };
        let model = train_detector(train, config, ModelKind::Logistic, 9).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let model: crate::detector::DetectorModel = serde_json::from_str(&json).unwrap();
        model.validate().unwrap();

        let names = StructuredFeatureVector::feature_names();
        let keep: Vec<usize> = model
            .selected_features
            .iter()
            .map(|n| names.iter().position(|m| m == n).unwrap())
            .collect();
        let scored: Vec<(f64, u8)> = held
            .iter()
            .map(|r| {
                let pl = p_log(&model.log_model, &model.index, &r.doc);
                let projected: Vec<f64> = keep.iter().map(|&j| r.features[j]).collect();
                let ps = model.classifier.predict_proba(&projected);
                let p = detector::fuse(pl, ps, model.config.alpha).unwrap();
                (p, r.label)
            })
            .collect();
        let m = metrics(&scored, model.config.beta).unwrap();
        assert!(m.auc > 0.8, "held-out ranking too weak: {}", m.auc);
    }

    #[test]
    fn history_assembly_collects_builds_commits_and_spans() {
        let spec = SynthSpec { n_jobs: 12, ..SynthSpec::default() };
        let corpus = generate_synthetic_corpus(&spec, 3).unwrap();
        let histories = assemble_history(&corpus.bundles);
        let history = &histories[spec.repo.as_str()];
        assert_eq!(history.builds.len(), 12);
        assert_eq!(history.commits.len(), 12);
        assert!(history.job_spans.len() >= 12);
        assert!(history.builds.iter().all(|b| !b.committer.is_empty()));
    }
}
