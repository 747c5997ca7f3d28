//! Domain model for GitHub Actions build histories.
//!
//! A *build* is one workflow run attempt; rerunning a workflow produces a new
//! attempt of the same run id. A [`RerunSequence`] collects every attempt of
//! one run, ordered and gap-free. Flakiness judgments operate on the outcome
//! a job produced in each attempt: a job that both failed and succeeded across
//! attempts of the same run is flaky, and a rerun build containing at least
//! one such job is a flaky build.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Execution state reported by the Actions API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Queued,
    Pending,
    Waiting,
    InProgress,
    Completed,
}

/// Terminal result of a completed build or job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    Success,
    Failure,
    StartupFailure,
    ActionRequired,
    Neutral,
    Cancelled,
    Skipped,
}

impl Conclusion {
    pub const ALL: [Conclusion; 7] = [
        Conclusion::Success,
        Conclusion::Failure,
        Conclusion::StartupFailure,
        Conclusion::ActionRequired,
        Conclusion::Neutral,
        Conclusion::Cancelled,
        Conclusion::Skipped,
    ];

    /// Conclusions that represent incomplete or administratively stopped
    /// executions. These never count as evidence for or against flakiness.
    pub fn is_excluded(self) -> bool {
        matches!(
            self,
            Conclusion::StartupFailure
                | Conclusion::ActionRequired
                | Conclusion::Cancelled
                | Conclusion::Skipped
        )
    }
}

/// Status plus conclusion, with the pairing rule enforced: a conclusion is
/// present exactly when the status is `completed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawOutcome", into = "RawOutcome")]
pub struct Outcome {
    status: Status,
    conclusion: Option<Conclusion>,
}

#[derive(Serialize, Deserialize)]
struct RawOutcome {
    status: Status,
    conclusion: Option<Conclusion>,
}

impl TryFrom<RawOutcome> for Outcome {
    type Error = ModelError;
    fn try_from(raw: RawOutcome) -> Result<Self, ModelError> {
        Outcome::new(raw.status, raw.conclusion)
    }
}

impl From<Outcome> for RawOutcome {
    fn from(o: Outcome) -> RawOutcome {
        RawOutcome { status: o.status, conclusion: o.conclusion }
    }
}

impl Outcome {
    pub fn new(status: Status, conclusion: Option<Conclusion>) -> Result<Self, ModelError> {
        match (status, conclusion) {
            (Status::Completed, None) => Err(ModelError::MissingConclusion),
            (s, Some(c)) if s != Status::Completed => {
                Err(ModelError::PrematureConclusion { status: s, conclusion: c })
            }
            _ => Ok(Outcome { status, conclusion }),
        }
    }

    /// A finished execution with the given conclusion.
    pub fn completed(conclusion: Conclusion) -> Self {
        Outcome { status: Status::Completed, conclusion: Some(conclusion) }
    }

    /// An execution that has not finished; carries no conclusion.
    pub fn unfinished(status: Status) -> Result<Self, ModelError> {
        Outcome::new(status, None)
    }

    pub fn status(self) -> Status {
        self.status
    }

    pub fn conclusion(self) -> Option<Conclusion> {
        self.conclusion
    }

    /// The conclusion, if this outcome should participate in flakiness
    /// judgments: completed and not administratively excluded.
    pub fn effective_conclusion(self) -> Option<Conclusion> {
        match self.conclusion {
            Some(c) if self.status == Status::Completed && !c.is_excluded() => Some(c),
            _ => None,
        }
    }

    pub fn is_completed_failure(self) -> bool {
        self.effective_conclusion() == Some(Conclusion::Failure)
    }

    pub fn is_completed_success(self) -> bool {
        self.effective_conclusion() == Some(Conclusion::Success)
    }
}

pub type BuildId = u64;
pub type JobId = u64;

/// One job execution inside one build attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: JobId,
    pub build_id: BuildId,
    /// Attempt number this execution belongs to, starting at 1.
    pub attempt: u32,
    pub name: String,
    pub started_at: Option<DateTime<Utc>>,
    pub completed_at: Option<DateTime<Utc>>,
    pub outcome: Outcome,
    /// Opaque handle to the job's log artifact, when one was captured.
    pub log_ref: Option<String>,
}

/// One attempt of a workflow run, with the jobs it executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub build_id: BuildId,
    /// Repository slug in `owner/name` form.
    pub repo: String,
    /// Attempt number, starting at 1. Values above 1 mean the run was rerun.
    pub run_attempt: u32,
    /// Event that triggered the run (`push`, `pull_request`, ...).
    pub trigger_event: String,
    pub started_at: DateTime<Utc>,
    /// Last-modification timestamp; for a finished attempt this is its end.
    pub updated_at: DateTime<Utc>,
    pub outcome: Outcome,
    pub jobs: Vec<JobRecord>,
}

/// Every attempt of one workflow run, ordered by attempt number without gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BuildRecord>", into = "Vec<BuildRecord>")]
pub struct RerunSequence {
    attempts: Vec<BuildRecord>,
}

impl TryFrom<Vec<BuildRecord>> for RerunSequence {
    type Error = ModelError;
    fn try_from(attempts: Vec<BuildRecord>) -> Result<Self, ModelError> {
        RerunSequence::new(attempts)
    }
}

impl From<RerunSequence> for Vec<BuildRecord> {
    fn from(seq: RerunSequence) -> Vec<BuildRecord> {
        seq.attempts
    }
}

impl RerunSequence {
    /// Validates and wraps a list of attempts.
    ///
    /// The attempts must be non-empty, belong to a single run of a single
    /// repository, and carry consecutive attempt numbers starting at 1. Each
    /// attempt's jobs must agree with their build on id and attempt number.
    pub fn new(mut attempts: Vec<BuildRecord>) -> Result<Self, ModelError> {
        if attempts.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        attempts.sort_by_key(|b| b.run_attempt);
        let build_id = attempts[0].build_id;
        let repo = attempts[0].repo.clone();
        for (i, b) in attempts.iter().enumerate() {
            if b.build_id != build_id || b.repo != repo {
                return Err(ModelError::MixedSequence { build_id });
            }
            let want = (i + 1) as u32;
            if b.run_attempt != want {
                return Err(ModelError::BrokenAttemptChain {
                    build_id,
                    expected: want,
                    found: b.run_attempt,
                });
            }
            for j in &b.jobs {
                if j.build_id != build_id || j.attempt != b.run_attempt {
                    return Err(ModelError::JobAttemptMismatch {
                        build_id,
                        job: j.name.clone(),
                    });
                }
            }
        }
        Ok(RerunSequence { attempts })
    }

    pub fn build_id(&self) -> BuildId {
        self.attempts[0].build_id
    }

    pub fn repo(&self) -> &str {
        &self.attempts[0].repo
    }

    pub fn attempts(&self) -> &[BuildRecord] {
        &self.attempts
    }

    pub fn first_attempt(&self) -> &BuildRecord {
        &self.attempts[0]
    }

    pub fn last_attempt(&self) -> &BuildRecord {
        &self.attempts[self.attempts.len() - 1]
    }

    /// Jobs of the first attempt that finished with a failure conclusion.
    /// These are the jobs a developer would have seen fail before rerunning.
    pub fn initially_failed_jobs(&self) -> Vec<&JobRecord> {
        self.first_attempt()
            .jobs
            .iter()
            .filter(|j| j.outcome.is_completed_failure())
            .collect()
    }

    /// Outcome history per job key, attempts in order. Jobs are paired across
    /// attempts by name; duplicate names within one attempt are disambiguated
    /// by their position among same-named jobs.
    pub fn job_outcomes(&self) -> BTreeMap<JobKey, Vec<Outcome>> {
        let mut out: BTreeMap<JobKey, Vec<Outcome>> = BTreeMap::new();
        for build in &self.attempts {
            let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
            for job in &build.jobs {
                let ordinal = seen.entry(job.name.as_str()).or_insert(0);
                let key = JobKey { name: job.name.clone(), ordinal: *ordinal };
                *ordinal += 1;
                out.entry(key).or_default().push(job.outcome);
            }
        }
        out
    }
}

/// Identifies a job within a build across attempts: its name, plus a
/// zero-based ordinal separating same-named jobs inside one attempt.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobKey {
    pub name: String,
    pub ordinal: u32,
}

impl std::fmt::Display for JobKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.ordinal == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}#{}", self.name, self.ordinal + 1)
        }
    }
}

/// Whether a run was rerun, and how often.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RerunClass {
    NotRerun,
    /// The run has `additional` attempts beyond the first.
    Rerun { additional: u32 },
}

/// Flakiness judgment for one rerun sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlakyVerdict {
    pub build_id: BuildId,
    pub build_is_rerun: bool,
    /// True when the build was rerun and at least one job flipped between
    /// failure and success across attempts.
    pub build_is_flaky: bool,
    /// Rendered [`JobKey`]s of the jobs that flipped.
    pub flaky_job_ids: BTreeSet<String>,
    /// True for the rerun-to-approve pattern: exactly one rerun whose first
    /// attempt concluded `action_required`.
    pub approval_rerun: bool,
}

/// Classifies a sequence as original-only or rerun.
pub fn classify_rerun(seq: &RerunSequence) -> RerunClass {
    let n = seq.attempts().len() as u32;
    if n <= 1 {
        RerunClass::NotRerun
    } else {
        RerunClass::Rerun { additional: n - 1 }
    }
}

/// Whether a job's outcome history shows flakiness: after dropping outcomes
/// that never finished (or finished as startup_failure, action_required,
/// cancelled, or skipped), both a success and a failure remain.
pub fn is_flaky_job(outcomes: &[Outcome]) -> bool {
    let mut saw_success = false;
    let mut saw_failure = false;
    for o in outcomes {
        match o.effective_conclusion() {
            Some(Conclusion::Success) => saw_success = true,
            Some(Conclusion::Failure) => saw_failure = true,
            _ => {}
        }
    }
    saw_success && saw_failure
}

/// Judges a whole sequence: pairs jobs across attempts and applies
/// [`is_flaky_job`] to each history.
pub fn judge_build(seq: &RerunSequence) -> FlakyVerdict {
    let attempts = seq.attempts();
    let build_is_rerun = attempts.len() > 1;
    let flaky_job_ids: BTreeSet<String> = seq
        .job_outcomes()
        .iter()
        .filter(|(_, outcomes)| is_flaky_job(outcomes))
        .map(|(key, _)| key.to_string())
        .collect();
    let approval_rerun = attempts.len() == 2
        && attempts[0].outcome.conclusion() == Some(Conclusion::ActionRequired);
    FlakyVerdict {
        build_id: seq.build_id(),
        build_is_rerun,
        build_is_flaky: build_is_rerun && !flaky_job_ids.is_empty(),
        flaky_job_ids,
        approval_rerun,
    }
}

/// Drops sequences that exist only because a maintainer approved a workflow:
/// a single rerun whose first attempt concluded `action_required`. Sequences
/// with further reruns are kept even when the first attempt was an approval
/// gate, since the later reruns were deliberate.
pub fn filter_approval_reruns(seqs: Vec<RerunSequence>) -> Vec<RerunSequence> {
    seqs.into_iter()
        .filter(|s| !judge_build(s).approval_rerun)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("completed outcome is missing a conclusion")]
    MissingConclusion,
    #[error("status {status:?} cannot carry conclusion {conclusion:?}")]
    PrematureConclusion { status: Status, conclusion: Conclusion },
    #[error("rerun sequence has no attempts")]
    EmptySequence,
    #[error("rerun sequence for build {build_id} mixes runs or repositories")]
    MixedSequence { build_id: BuildId },
    #[error("build {build_id}: expected attempt {expected}, found {found}")]
    BrokenAttemptChain { build_id: BuildId, expected: u32, found: u32 },
    #[error("build {build_id}: job {job} disagrees with its attempt header")]
    JobAttemptMismatch { build_id: BuildId, job: String },
}
