//! Ground-truth labeling of failed jobs by systematic rerunning.
//!
//! A failed job whose build history already shows a later success is flaky by
//! observation. Everything else is handed to a rerun oracle and executed
//! under the original code version, up to a budget, stopping at the first
//! success. Jobs that never succeed are labeled non-flaky, which makes the
//! label a lower bound on true flakiness.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::model::{Conclusion, JobKey, JobRecord, Outcome, RerunSequence, Status};

/// Rerun budget used when none is configured.
pub const DEFAULT_MAX_RERUNS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Flaky,
    NonFlaky,
}

/// Why a job received its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// The build's own attempt history contains a success for this job.
    DeveloperRerunHistory,
    /// A scripted or live rerun succeeded on the `success_at`-th counted try.
    AutomatedRerun { success_at: u32 },
    /// Every counted rerun within the budget failed.
    Exhausted { max_reruns: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlakyLabel {
    pub job_ref: String,
    pub label: LabelKind,
    pub evidence: Evidence,
    /// Oracle executions that produced a counted (success or failure)
    /// outcome. Inconclusive executions are excluded.
    pub reruns_consumed: u32,
}

impl FlakyLabel {
    /// Label/evidence agreement: flaky iff the evidence shows a success.
    pub fn is_consistent(&self) -> bool {
        match self.evidence {
            Evidence::DeveloperRerunHistory => {
                self.label == LabelKind::Flaky && self.reruns_consumed == 0
            }
            Evidence::AutomatedRerun { success_at } => {
                self.label == LabelKind::Flaky
                    && success_at >= 1
                    && success_at == self.reruns_consumed
            }
            Evidence::Exhausted { max_reruns } => {
                self.label == LabelKind::NonFlaky && self.reruns_consumed == max_reruns
            }
        }
    }
}

/// Transport-level failure of a rerun request; says nothing about the job.
#[derive(Debug, Clone, thiserror::Error)]
#[error("rerun transport failed: {0}")]
pub struct TransportError(pub String);

/// Executes one fresh run of a failed job under its original code version.
pub trait RerunOracle {
    fn execute(&mut self, job_ref: &str) -> Result<Outcome, TransportError>;
}

#[derive(Debug, Clone, PartialEq)]
enum ScriptStep {
    Outcome(Outcome),
    Transport,
}

fn parse_step(s: &str) -> Result<ScriptStep, LabelError> {
    let outcome = match s {
        "success" => Outcome::completed(Conclusion::Success),
        "failure" => Outcome::completed(Conclusion::Failure),
        "cancelled" => Outcome::completed(Conclusion::Cancelled),
        "skipped" => Outcome::completed(Conclusion::Skipped),
        "action_required" => Outcome::completed(Conclusion::ActionRequired),
        "startup_failure" => Outcome::completed(Conclusion::StartupFailure),
        "in_progress" => Outcome::unfinished(Status::InProgress).expect("no conclusion"),
        "queued" => Outcome::unfinished(Status::Queued).expect("no conclusion"),
        "transport_error" => return Ok(ScriptStep::Transport),
        other => return Err(LabelError::BadScriptStep { step: other.to_string() }),
    };
    Ok(ScriptStep::Outcome(outcome))
}

/// Deterministic oracle driven by per-job outcome scripts. Once a script is
/// exhausted every further execution fails, so budgets beyond the scripted
/// horizon behave like a job that keeps failing.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    scripts: BTreeMap<String, VecDeque<ScriptStep>>,
}

impl ScriptedOracle {
    /// Builds from `job_ref -> step list`, steps being outcome words
    /// (`success`, `failure`, `cancelled`, ...) or `transport_error`.
    pub fn from_script(script: &BTreeMap<String, Vec<String>>) -> Result<Self, LabelError> {
        let mut scripts = BTreeMap::new();
        for (job_ref, steps) in script {
            let parsed: Result<VecDeque<ScriptStep>, LabelError> =
                steps.iter().map(|s| parse_step(s)).collect();
            scripts.insert(job_ref.clone(), parsed?);
        }
        Ok(ScriptedOracle { scripts })
    }

    /// Loads the JSON form of the script map.
    pub fn from_json_str(json: &str) -> Result<Self, LabelError> {
        let script: BTreeMap<String, Vec<String>> =
            serde_json::from_str(json).map_err(|e| LabelError::BadScriptFile(e.to_string()))?;
        Self::from_script(&script)
    }
}

impl RerunOracle for ScriptedOracle {
    fn execute(&mut self, job_ref: &str) -> Result<Outcome, TransportError> {
        match self.scripts.get_mut(job_ref).and_then(VecDeque::pop_front) {
            Some(ScriptStep::Outcome(o)) => Ok(o),
            Some(ScriptStep::Transport) => {
                Err(TransportError(format!("scripted failure for {job_ref}")))
            }
            None => Ok(Outcome::completed(Conclusion::Failure)),
        }
    }
}

/// Stable identifier used to key oracle scripts and label output.
pub fn job_ref(seq: &RerunSequence, job: &JobRecord) -> String {
    format!("{}/{}/{}", seq.repo(), seq.build_id(), job.job_id)
}

fn first_attempt_key(seq: &RerunSequence, job: &JobRecord) -> Option<JobKey> {
    let mut ordinal = 0;
    for j in &seq.first_attempt().jobs {
        if j.job_id == job.job_id {
            return Some(JobKey { name: j.name.clone(), ordinal });
        }
        if j.name == job.name {
            ordinal += 1;
        }
    }
    None
}

/// Labels one initially-failed job.
///
/// A success anywhere in the job's attempt history short-circuits to a flaky
/// label with zero oracle calls. Otherwise the oracle runs until the first
/// success or until `max_reruns` counted outcomes, whichever comes first.
/// A transport failure is retried once; if the retry also fails, that
/// execution is inconclusive. Inconclusive executions (also cancelled or
/// otherwise excluded outcomes) never consume budget, but total invocations
/// are capped at `2 * max_reruns + 2` so a dead oracle cannot stall forever.
pub fn label_job(
    job: &JobRecord,
    history: &RerunSequence,
    oracle: &mut dyn RerunOracle,
    max_reruns: u32,
) -> Result<FlakyLabel, LabelError> {
    let job_ref = job_ref(history, job);
    if max_reruns == 0 {
        return Err(LabelError::ZeroBudget);
    }
    if !job.outcome.is_completed_failure() {
        return Err(LabelError::InitialOutcomeNotFailure { job_ref });
    }
    let key = first_attempt_key(history, job)
        .ok_or_else(|| LabelError::JobNotInFirstAttempt { job_ref: job_ref.clone() })?;

    let outcomes = history.job_outcomes();
    let seen = outcomes.get(&key).map_or(&[][..], Vec::as_slice);
    if seen.iter().any(|o| o.is_completed_success()) {
        return Ok(FlakyLabel {
            job_ref,
            label: LabelKind::Flaky,
            evidence: Evidence::DeveloperRerunHistory,
            reruns_consumed: 0,
        });
    }

    let cap = 2 * max_reruns + 2;
    let mut consumed = 0u32;
    let mut invocations = 0u32;
    while consumed < max_reruns {
        if invocations >= cap {
            return Err(LabelError::OracleStalled { job_ref, invocations });
        }
        invocations += 1;
        let outcome = match oracle.execute(&job_ref) {
            Ok(o) => Some(o),
            Err(_) if invocations < cap => {
                invocations += 1;
                oracle.execute(&job_ref).ok()
            }
            Err(_) => None,
        };
        match outcome.and_then(Outcome::effective_conclusion) {
            Some(Conclusion::Success) => {
                consumed += 1;
                return Ok(FlakyLabel {
                    job_ref,
                    label: LabelKind::Flaky,
                    evidence: Evidence::AutomatedRerun { success_at: consumed },
                    reruns_consumed: consumed,
                });
            }
            Some(_) => consumed += 1,
            None => {}
        }
    }
    Ok(FlakyLabel {
        job_ref,
        label: LabelKind::NonFlaky,
        evidence: Evidence::Exhausted { max_reruns },
        reruns_consumed: max_reruns,
    })
}

/// Label counts partitioned by evidence type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelSummary {
    pub developer_history: usize,
    pub automated: usize,
    pub exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingReport {
    pub labels: Vec<FlakyLabel>,
    pub summary: LabelSummary,
    pub diagnostics: Vec<Diagnostic>,
}

/// Labels every initially-failed job in the corpus. Per-job failures become
/// diagnostics; the batch always completes.
pub fn label_corpus(
    corpus: &[RerunSequence],
    oracle: &mut dyn RerunOracle,
    max_reruns: u32,
) -> LabelingReport {
    let mut labels = Vec::new();
    let mut summary = LabelSummary::default();
    let mut diagnostics = Vec::new();
    for seq in corpus {
        for job in seq.initially_failed_jobs() {
            match label_job(job, seq, oracle, max_reruns) {
                Ok(label) => {
                    match label.evidence {
                        Evidence::DeveloperRerunHistory => summary.developer_history += 1,
                        Evidence::AutomatedRerun { .. } => summary.automated += 1,
                        Evidence::Exhausted { .. } => summary.exhausted += 1,
                    }
                    labels.push(label);
                }
                Err(e) => diagnostics.push(Diagnostic::new(job_ref(seq, job), e.to_string())),
            }
        }
    }
    LabelingReport { labels, summary, diagnostics }
}

/// Seeded sample of exhausted-job refs for manual review. Returns every
/// exhausted ref when there are no more than `sample_size`.
pub fn exhausted_audit_sample(
    labels: &[FlakyLabel],
    sample_size: usize,
    seed: u64,
) -> Vec<String> {
    let exhausted: Vec<&str> = labels
        .iter()
        .filter(|l| matches!(l.evidence, Evidence::Exhausted { .. }))
        .map(|l| l.job_ref.as_str())
        .collect();
    if exhausted.len() <= sample_size {
        return exhausted.into_iter().map(str::to_string).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, exhausted.len(), sample_size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| exhausted[i].to_string()).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("max_reruns must be at least 1")]
    ZeroBudget,
    #[error("job {job_ref} did not initially fail")]
    InitialOutcomeNotFailure { job_ref: String },
    #[error("job {job_ref} is not part of the build's first attempt")]
    JobNotInFirstAttempt { job_ref: String },
    #[error("oracle produced no countable outcome for {job_ref} in {invocations} invocations")]
    OracleStalled { job_ref: String, invocations: u32 },
    #[error("unknown script step {step:?}")]
    BadScriptStep { step: String },
    #[error("script file is not a job_ref -> steps map: {0}")]
    BadScriptFile(String),
}
