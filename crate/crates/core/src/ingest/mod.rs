//! Corpus ingestion: the on-disk build-history layout and Actions API fetching.
//!
//! A corpus directory holds one subdirectory per repository (the slug with
//! `/` replaced by `__`), one subdirectory per build underneath, and inside
//! each build three kinds of files: `build.json` with one raw run document
//! per attempt, `jobs.json` with the raw job documents of every attempt, and
//! `logs/<attempt>/<job_id>.log` with one plain-text log per job, possibly
//! empty. An optional `changes.json` carries the code-change context consumed
//! by feature extraction. Raw documents keep the field names of the REST API
//! verbatim, so fixtures can be captured directly from live responses.
//!
//! [`load_corpus`] reads such a directory back; [`fetch_repo_history`] builds
//! the same structures from any [`ActionsApi`] implementation and can mirror
//! them to disk as it goes. The two produce identical sequences for the same
//! underlying data.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::features::ChangeContext;
use crate::model::{BuildRecord, Conclusion, JobId, JobRecord, Outcome, RerunSequence, Status};

/// Build-level metadata document: a JSON array of [`RawRun`], one per attempt.
pub const BUILD_DOC: &str = "build.json";
/// Job-level metadata document: a JSON array of [`RawJob`] across attempts.
pub const JOBS_DOC: &str = "jobs.json";
/// Optional code-change context document, a serialized [`ChangeContext`].
pub const CHANGES_DOC: &str = "changes.json";
/// Directory holding per-attempt log files.
pub const LOGS_DIR: &str = "logs";

/// Directory name for a repository slug: `owner/name` becomes `owner__name`.
pub fn repo_dir_name(repo: &str) -> String {
    repo.replace('/', "__")
}

/// Layout-relative path of a job's log file.
pub fn log_rel_path(attempt: u32, job_id: JobId) -> String {
    format!("{LOGS_DIR}/{attempt}/{job_id}.log")
}

/// Workflow-run document as the REST API serves it, reduced to the fields the
/// pipeline consumes. Unknown fields in captured payloads are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRun {
    pub id: u64,
    pub event: String,
    pub status: String,
    pub conclusion: Option<String>,
    pub run_attempt: u32,
    pub run_started_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub repository: RawRepo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRepo {
    pub full_name: String,
}

/// Job document as the REST API serves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawJob {
    pub id: u64,
    pub run_id: u64,
    pub run_attempt: u32,
    pub name: String,
    pub status: String,
    pub conclusion: Option<String>,
    pub started_at: Option<DateTime<Utc>>,
    pub completed_at: Option<DateTime<Utc>>,
}

fn parse_status(s: &str) -> Option<Status> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
}

fn parse_conclusion(s: &str) -> Option<Conclusion> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
}

fn status_token(s: Status) -> String {
    match serde_json::to_value(s) {
        Ok(serde_json::Value::String(t)) => t,
        _ => unreachable!("status serializes to a string"),
    }
}

fn conclusion_token(c: Conclusion) -> String {
    match serde_json::to_value(c) {
        Ok(serde_json::Value::String(t)) => t,
        _ => unreachable!("conclusion serializes to a string"),
    }
}

fn parse_outcome(status: &str, conclusion: Option<&str>) -> Result<Outcome, String> {
    let status = parse_status(status).ok_or_else(|| format!("unknown status {status:?}"))?;
    let conclusion = match conclusion {
        Some(c) => Some(parse_conclusion(c).ok_or_else(|| format!("unknown conclusion {c:?}"))?),
        None => None,
    };
    Outcome::new(status, conclusion).map_err(|e| e.to_string())
}

impl RawRun {
    /// Converts into a [`BuildRecord`] carrying the given jobs. Fails on
    /// unknown status or conclusion tokens and on status/conclusion pairings
    /// the model rejects.
    pub fn to_build(&self, jobs: Vec<JobRecord>) -> Result<BuildRecord, String> {
        let outcome = parse_outcome(&self.status, self.conclusion.as_deref())?;
        Ok(BuildRecord {
            build_id: self.id,
            repo: self.repository.full_name.clone(),
            run_attempt: self.run_attempt,
            trigger_event: self.event.clone(),
            started_at: self.run_started_at,
            updated_at: self.updated_at,
            outcome,
            jobs,
        })
    }

    pub fn from_build(b: &BuildRecord) -> RawRun {
        RawRun {
            id: b.build_id,
            event: b.trigger_event.clone(),
            status: status_token(b.outcome.status()),
            conclusion: b.outcome.conclusion().map(conclusion_token),
            run_attempt: b.run_attempt,
            run_started_at: b.started_at,
            updated_at: b.updated_at,
            repository: RawRepo { full_name: b.repo.clone() },
        }
    }
}

impl RawJob {
    /// Converts into a [`JobRecord`]. The log reference is normalized to the
    /// layout-relative path the corpus uses for this job.
    pub fn to_job(&self) -> Result<JobRecord, String> {
        let outcome = parse_outcome(&self.status, self.conclusion.as_deref())?;
        Ok(JobRecord {
            job_id: self.id,
            build_id: self.run_id,
            attempt: self.run_attempt,
            name: self.name.clone(),
            started_at: self.started_at,
            completed_at: self.completed_at,
            outcome,
            log_ref: Some(log_rel_path(self.run_attempt, self.id)),
        })
    }

    pub fn from_job(j: &JobRecord) -> RawJob {
        RawJob {
            id: j.job_id,
            run_id: j.build_id,
            run_attempt: j.attempt,
            name: j.name.clone(),
            status: status_token(j.outcome.status()),
            conclusion: j.outcome.conclusion().map(conclusion_token),
            started_at: j.started_at,
            completed_at: j.completed_at,
        }
    }
}

/// One build's worth of corpus data: the rerun sequence, its logs keyed by
/// (attempt, job id), and the optional code-change context.
#[derive(Debug, Clone)]
pub struct BuildBundle {
    pub sequence: RerunSequence,
    pub changes: ChangeContext,
    pub logs: BTreeMap<(u32, JobId), String>,
}

impl BuildBundle {
    pub fn log_for(&self, job: &JobRecord) -> Option<&str> {
        self.logs.get(&(job.attempt, job.job_id)).map(String::as_str)
    }

    /// Logs of the first attempt keyed by job id, the shape feature
    /// extraction consumes.
    pub fn first_attempt_logs(&self) -> BTreeMap<JobId, String> {
        self.sequence
            .first_attempt()
            .jobs
            .iter()
            .map(|j| (j.job_id, self.log_for(j).unwrap_or("").to_string()))
            .collect()
    }
}

/// Result of loading or fetching a corpus: the bundles that survived plus a
/// diagnostic per skipped or repaired record.
#[derive(Debug, Clone, Default)]
pub struct CorpusLoad {
    pub bundles: Vec<BuildBundle>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("repository {repo} is unavailable (deleted, renamed, or history cleared)")]
    RepoUnavailable { repo: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid fetch policy: {0}")]
    Policy(String),
    #[error("{what}: {source}")]
    Api {
        what: String,
        #[source]
        source: ApiError,
    },
}

fn io_err(path: &Path, source: io::Error) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), source }
}

/// Loads every build directory under `root`, in deterministic
/// (repo, build id) order.
///
/// A build whose metadata is missing or malformed is skipped with a
/// diagnostic; a job log file that should exist but does not is substituted
/// with an empty log, also with a diagnostic. Loading never fails on bad
/// corpus content, only on I/O errors such as a nonexistent root.
pub fn load_corpus(root: &Path) -> Result<CorpusLoad, IngestError> {
    let mut out = CorpusLoad::default();
    for repo_dir in sorted_subdirs(root)? {
        for build_dir in sorted_subdirs(&repo_dir)? {
            if let Some(bundle) = load_build_dir(&build_dir, &mut out.diagnostics) {
                out.bundles.push(bundle);
            }
        }
    }
    out.bundles.sort_by(|a, b| {
        (a.sequence.repo(), a.sequence.build_id()).cmp(&(b.sequence.repo(), b.sequence.build_id()))
    });
    Ok(out)
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn read_json_doc<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            format!("missing {}", path.file_name().unwrap_or_default().to_string_lossy())
        } else {
            format!("unreadable {}: {e}", path.display())
        }
    })?;
    serde_json::from_str(&text)
        .map_err(|e| format!("malformed {}: {e}", path.file_name().unwrap_or_default().to_string_lossy()))
}

fn load_build_dir(dir: &Path, diagnostics: &mut Vec<Diagnostic>) -> Option<BuildBundle> {
    let ctx = dir.display().to_string();
    let raw_runs: Vec<RawRun> = match read_json_doc(&dir.join(BUILD_DOC)) {
        Ok(v) => v,
        Err(msg) => {
            diagnostics.push(Diagnostic::new(&ctx, format!("build skipped: {msg}")));
            return None;
        }
    };
    let raw_jobs: Vec<RawJob> = match read_json_doc(&dir.join(JOBS_DOC)) {
        Ok(v) => v,
        Err(msg) => {
            diagnostics.push(Diagnostic::new(&ctx, format!("build skipped: {msg}")));
            return None;
        }
    };

    let mut jobs_by_attempt: BTreeMap<u32, Vec<JobRecord>> = BTreeMap::new();
    for raw in &raw_jobs {
        match raw.to_job() {
            Ok(job) => jobs_by_attempt.entry(raw.run_attempt).or_default().push(job),
            Err(msg) => {
                diagnostics.push(Diagnostic::new(&ctx, format!("job {} skipped: {msg}", raw.id)));
            }
        }
    }

    let mut builds = Vec::new();
    for raw in &raw_runs {
        let jobs = jobs_by_attempt.remove(&raw.run_attempt).unwrap_or_default();
        match raw.to_build(jobs) {
            Ok(b) => builds.push(b),
            Err(msg) => {
                diagnostics.push(Diagnostic::new(&ctx, format!("build skipped: {msg}")));
                return None;
            }
        }
    }
    for attempt in jobs_by_attempt.keys() {
        diagnostics.push(Diagnostic::new(
            &ctx,
            format!("jobs for attempt {attempt} ignored: no matching run document"),
        ));
    }

    let sequence = match RerunSequence::new(builds) {
        Ok(s) => s,
        Err(e) => {
            diagnostics.push(Diagnostic::new(&ctx, format!("build skipped: {e}")));
            return None;
        }
    };

    let mut logs = BTreeMap::new();
    for build in sequence.attempts() {
        for job in &build.jobs {
            let rel = log_rel_path(job.attempt, job.job_id);
            let path = dir.join(&rel);
            let text = match fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    diagnostics.push(Diagnostic::new(
                        format!("{ctx}/{rel}"),
                        "log file missing; substituted empty log",
                    ));
                    String::new()
                }
                Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                    diagnostics.push(Diagnostic::new(
                        format!("{ctx}/{rel}"),
                        "log is not valid UTF-8; decoded lossily",
                    ));
                    String::from_utf8_lossy(&fs::read(&path).unwrap_or_default()).into_owned()
                }
                Err(e) => {
                    diagnostics.push(Diagnostic::new(
                        format!("{ctx}/{rel}"),
                        format!("log unreadable ({e}); substituted empty log"),
                    ));
                    String::new()
                }
            };
            logs.insert((job.attempt, job.job_id), text);
        }
    }

    let changes_path = dir.join(CHANGES_DOC);
    let changes = if changes_path.exists() {
        match read_json_doc::<ChangeContext>(&changes_path) {
            Ok(c) => c,
            Err(msg) => {
                diagnostics.push(Diagnostic::new(&ctx, format!("change context ignored: {msg}")));
                ChangeContext::default()
            }
        }
    } else {
        ChangeContext::default()
    };

    Some(BuildBundle { sequence, changes, logs })
}

fn write_json_doc<T: Serialize>(path: &Path, value: &T) -> Result<(), IngestError> {
    let mut text = serde_json::to_string_pretty(value)
        .unwrap_or_else(|e| unreachable!("document types serialize: {e}"));
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes one bundle into the corpus layout under `root`, creating the
/// repository and build directories as needed. Every job gets a log file,
/// empty when no log text is held for it.
pub fn write_bundle(root: &Path, bundle: &BuildBundle) -> Result<(), IngestError> {
    let seq = &bundle.sequence;
    let dir = root.join(repo_dir_name(seq.repo())).join(seq.build_id().to_string());
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let runs: Vec<RawRun> = seq.attempts().iter().map(RawRun::from_build).collect();
    let jobs: Vec<RawJob> =
        seq.attempts().iter().flat_map(|b| b.jobs.iter().map(RawJob::from_job)).collect();
    write_json_doc(&dir.join(BUILD_DOC), &runs)?;
    write_json_doc(&dir.join(JOBS_DOC), &jobs)?;

    for build in seq.attempts() {
        if build.jobs.is_empty() {
            continue;
        }
        let log_dir = dir.join(LOGS_DIR).join(build.run_attempt.to_string());
        fs::create_dir_all(&log_dir).map_err(|e| io_err(&log_dir, e))?;
        for job in &build.jobs {
            let text = bundle
                .logs
                .get(&(build.run_attempt, job.job_id))
                .map(String::as_str)
                .unwrap_or("");
            let path = log_dir.join(format!("{}.log", job.job_id));
            fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        }
    }

    let default_ctx = serde_json::to_value(ChangeContext::default()).unwrap_or_default();
    let this_ctx = serde_json::to_value(&bundle.changes).unwrap_or_default();
    if this_ctx != default_ctx {
        write_json_doc(&dir.join(CHANGES_DOC), &bundle.changes)?;
    }
    Ok(())
}

/// How the fetcher talks to the API: page size, retry budget for transport
/// failures, backoff base for waits, and the remaining-quota floor below
/// which it pauses before issuing another request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchPolicy {
    pub page_size: u32,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub rate_limit_floor: u32,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        FetchPolicy {
            page_size: 100,
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            rate_limit_floor: 50,
        }
    }
}

impl FetchPolicy {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(1..=100).contains(&self.page_size) {
            return Err(IngestError::Policy(format!(
                "page_size must be within [1,100], got {}",
                self.page_size
            )));
        }
        Ok(())
    }
}

/// Why the fetcher is waiting: the quota floor was reached, or a transport
/// failure is being retried with backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauseReason {
    QuotaFloor,
    Backoff,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("not found: {what}")]
    NotFound { what: String },
    #[error("rate limited")]
    RateLimited,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed payload: {what}")]
    Malformed { what: String },
}

/// The slice of the Actions REST API the fetcher uses. Implementations carry
/// their own authentication. Pages are 1-based; a page shorter than
/// `per_page` (or empty) ends the listing.
pub trait ActionsApi {
    /// Lists workflow runs, newest first, optionally only those updated
    /// strictly after `since`. Each document describes the latest attempt.
    fn list_runs(
        &mut self,
        repo: &str,
        since: Option<DateTime<Utc>>,
        page: u32,
        per_page: u32,
    ) -> Result<Vec<RawRun>, ApiError>;

    fn get_run_attempt(&mut self, repo: &str, run_id: u64, attempt: u32)
        -> Result<RawRun, ApiError>;

    fn list_jobs(
        &mut self,
        repo: &str,
        run_id: u64,
        attempt: u32,
        page: u32,
        per_page: u32,
    ) -> Result<Vec<RawJob>, ApiError>;

    fn job_logs(&mut self, repo: &str, job_id: u64) -> Result<String, ApiError>;

    /// Remaining request quota as of the last response.
    fn remaining_quota(&self) -> u32;

    /// Blocks until it is reasonable to issue the next request.
    fn pause(&mut self, reason: PauseReason, hint: Duration);
}

const RATE_WAIT_CAP: u32 = 32;

/// Runs one request with the policy's guards: waits whenever remaining quota
/// sits below the floor, waits and resumes on rate limiting, and retries
/// transport failures with exponential backoff up to the retry budget.
fn guarded<T>(
    api: &mut dyn ActionsApi,
    policy: &FetchPolicy,
    mut call: impl FnMut(&mut dyn ActionsApi) -> Result<T, ApiError>,
) -> Result<T, ApiError> {
    let mut transport_tries = 0u32;
    let mut rate_waits = 0u32;
    loop {
        while api.remaining_quota() < policy.rate_limit_floor {
            rate_waits += 1;
            if rate_waits > RATE_WAIT_CAP {
                return Err(ApiError::RateLimited);
            }
            api.pause(PauseReason::QuotaFloor, policy.backoff_base);
        }
        match call(api) {
            Ok(v) => return Ok(v),
            Err(ApiError::RateLimited) => {
                rate_waits += 1;
                if rate_waits > RATE_WAIT_CAP {
                    return Err(ApiError::RateLimited);
                }
                api.pause(PauseReason::QuotaFloor, policy.backoff_base);
            }
            Err(ApiError::Transport(msg)) => {
                if transport_tries >= policy.max_retries {
                    return Err(ApiError::Transport(msg));
                }
                let wait = policy.backoff_base.saturating_mul(1 << transport_tries.min(16));
                transport_tries += 1;
                api.pause(PauseReason::Backoff, wait);
            }
            Err(other) => return Err(other),
        }
    }
}

/// Fetches the complete rerun history of one repository: every attempt of
/// every run updated after `since`, with job metadata and logs. When
/// `out_root` is given each bundle is mirrored to the corpus layout as it is
/// produced.
///
/// A deleted or unreachable repository yields
/// [`IngestError::RepoUnavailable`]. Malformed or partially missing records
/// are skipped with diagnostics rather than failing the fetch; an unavailable
/// log is substituted with an empty one.
pub fn fetch_repo_history(
    api: &mut dyn ActionsApi,
    repo: &str,
    policy: &FetchPolicy,
    since: Option<DateTime<Utc>>,
    out_root: Option<&Path>,
) -> Result<CorpusLoad, IngestError> {
    policy.validate()?;
    let per_page = policy.page_size;
    let mut out = CorpusLoad::default();

    let mut run_docs: Vec<RawRun> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut page = 1u32;
    loop {
        let batch = match guarded(api, policy, |a| a.list_runs(repo, since, page, per_page)) {
            Ok(b) => b,
            Err(ApiError::NotFound { .. }) if page == 1 => {
                return Err(IngestError::RepoUnavailable { repo: repo.to_string() })
            }
            Err(ApiError::NotFound { .. }) => break,
            Err(ApiError::Malformed { what }) => {
                out.diagnostics.push(Diagnostic::new(
                    repo,
                    format!("run listing page {page} skipped: malformed payload: {what}"),
                ));
                break;
            }
            Err(e) => {
                return Err(IngestError::Api { what: format!("list runs for {repo}"), source: e })
            }
        };
        let len = batch.len();
        for run in batch {
            if seen.insert(run.id) {
                run_docs.push(run);
            }
        }
        if len < per_page as usize {
            break;
        }
        page += 1;
    }

    'runs: for run in &run_docs {
        let run_ctx = format!("{repo}/{}", run.id);
        if run.run_attempt == 0 {
            out.diagnostics
                .push(Diagnostic::new(&run_ctx, "build skipped: run_attempt is zero"));
            continue;
        }
        let mut builds = Vec::new();
        let mut logs = BTreeMap::new();
        for attempt in 1..=run.run_attempt {
            let doc =
                match guarded(api, policy, |a| a.get_run_attempt(repo, run.id, attempt)) {
                    Ok(d) => d,
                    Err(e @ (ApiError::NotFound { .. } | ApiError::Malformed { .. })) => {
                        out.diagnostics.push(Diagnostic::new(
                            &run_ctx,
                            format!("build skipped: attempt {attempt}: {e}"),
                        ));
                        continue 'runs;
                    }
                    Err(e) => {
                        return Err(IngestError::Api {
                            what: format!("get {run_ctx} attempt {attempt}"),
                            source: e,
                        })
                    }
                };

            let mut jobs = Vec::new();
            let mut jobs_page = 1u32;
            loop {
                let batch = match guarded(api, policy, |a| {
                    a.list_jobs(repo, run.id, attempt, jobs_page, per_page)
                }) {
                    Ok(b) => b,
                    Err(e @ (ApiError::NotFound { .. } | ApiError::Malformed { .. })) => {
                        out.diagnostics.push(Diagnostic::new(
                            &run_ctx,
                            format!("build skipped: jobs of attempt {attempt}: {e}"),
                        ));
                        continue 'runs;
                    }
                    Err(e) => {
                        return Err(IngestError::Api {
                            what: format!("list jobs of {run_ctx} attempt {attempt}"),
                            source: e,
                        })
                    }
                };
                let len = batch.len();
                for raw in &batch {
                    match raw.to_job() {
                        Ok(j) => jobs.push(j),
                        Err(msg) => out.diagnostics.push(Diagnostic::new(
                            &run_ctx,
                            format!("job {} skipped: {msg}", raw.id),
                        )),
                    }
                }
                if len < per_page as usize {
                    break;
                }
                jobs_page += 1;
            }

            for job in &jobs {
                let text = match guarded(api, policy, |a| a.job_logs(repo, job.job_id)) {
                    Ok(t) => t,
                    Err(e @ (ApiError::NotFound { .. } | ApiError::Malformed { .. })) => {
                        out.diagnostics.push(Diagnostic::new(
                            format!("{run_ctx}/{}", job.job_id),
                            format!("log unavailable ({e}); substituted empty log"),
                        ));
                        String::new()
                    }
                    Err(e) => {
                        return Err(IngestError::Api {
                            what: format!("logs of job {} in {run_ctx}", job.job_id),
                            source: e,
                        })
                    }
                };
                logs.insert((attempt, job.job_id), text);
            }

            match doc.to_build(jobs) {
                Ok(b) => builds.push(b),
                Err(msg) => {
                    out.diagnostics.push(Diagnostic::new(
                        &run_ctx,
                        format!("build skipped: attempt {attempt}: {msg}"),
                    ));
                    continue 'runs;
                }
            }
        }

        match RerunSequence::new(builds) {
            Ok(sequence) => {
                let bundle = BuildBundle { sequence, changes: ChangeContext::default(), logs };
                if let Some(root) = out_root {
                    write_bundle(root, &bundle)?;
                }
                out.bundles.push(bundle);
            }
            Err(e) => {
                out.diagnostics
                    .push(Diagnostic::new(&run_ctx, format!("build skipped: {e}")));
            }
        }
    }

    out.bundles.sort_by(|a, b| {
        (a.sequence.repo(), a.sequence.build_id()).cmp(&(b.sequence.repo(), b.sequence.build_id()))
    });
    Ok(out)
}

/// Record of one request a [`FixtureApi`] served: the remaining quota at the
/// moment the request arrived, and a short description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTrace {
    pub remaining_before: u32,
    pub what: String,
}

/// In-memory [`ActionsApi`] backed by bundles, with failure injection and
/// quota accounting for exercising the fetcher offline.
///
/// Every request is traced with the quota remaining when it arrived, so
/// tests can assert the fetcher respects the rate-limit floor. Pausing for
/// [`PauseReason::QuotaFloor`] restores the quota to its reset value.
#[derive(Debug, Clone, Default)]
pub struct FixtureApi {
    runs: BTreeMap<String, Vec<RawRun>>,
    attempts: BTreeMap<(String, u64, u32), RawRun>,
    jobs: BTreeMap<(String, u64, u32), Vec<RawJob>>,
    logs: BTreeMap<(String, u64), String>,
    unavailable_repos: BTreeSet<String>,
    poisoned_runs: BTreeSet<u64>,
    missing_logs: BTreeSet<u64>,
    fail_next: u32,
    quota: u32,
    quota_reset_to: u32,
    pub requests: Vec<RequestTrace>,
    pub pauses: Vec<(PauseReason, Duration)>,
}

impl FixtureApi {
    pub fn from_bundles(bundles: &[BuildBundle]) -> FixtureApi {
        let mut api = FixtureApi {
            quota: u32::MAX,
            quota_reset_to: u32::MAX,
            ..FixtureApi::default()
        };
        for bundle in bundles {
            let seq = &bundle.sequence;
            let repo = seq.repo().to_string();
            for build in seq.attempts() {
                let doc = RawRun::from_build(build);
                api.attempts.insert((repo.clone(), build.build_id, build.run_attempt), doc);
                api.jobs.insert(
                    (repo.clone(), build.build_id, build.run_attempt),
                    build.jobs.iter().map(RawJob::from_job).collect(),
                );
                for job in &build.jobs {
                    let text = bundle.log_for(job).unwrap_or("").to_string();
                    api.logs.insert((repo.clone(), job.job_id), text);
                }
            }
            let latest = RawRun::from_build(seq.last_attempt());
            api.runs.entry(repo).or_default().push(latest);
        }
        for listing in api.runs.values_mut() {
            listing.sort_by_key(|r| (std::cmp::Reverse(r.updated_at), std::cmp::Reverse(r.id)));
        }
        api
    }

    /// Sets the current quota and the value a quota pause restores.
    pub fn with_quota(mut self, quota: u32, reset_to: u32) -> Self {
        self.quota = quota;
        self.quota_reset_to = reset_to;
        self
    }

    /// Marks a repository as deleted: listing its runs yields not-found.
    pub fn deny_repo(mut self, repo: &str) -> Self {
        self.unavailable_repos.insert(repo.to_string());
        self
    }

    /// Makes `get_run_attempt` for this run id return a malformed-payload
    /// error.
    pub fn poison_run(mut self, run_id: u64) -> Self {
        self.poisoned_runs.insert(run_id);
        self
    }

    /// Makes log downloads for this job id return not-found.
    pub fn drop_log(mut self, job_id: u64) -> Self {
        self.missing_logs.insert(job_id);
        self
    }

    /// Makes the next `n` requests fail with a transport error.
    pub fn fail_next_requests(mut self, n: u32) -> Self {
        self.fail_next = n;
        self
    }

    fn begin(&mut self, what: String) -> Result<(), ApiError> {
        self.requests.push(RequestTrace { remaining_before: self.quota, what });
        if self.fail_next > 0 {
            self.fail_next -= 1;
            self.quota = self.quota.saturating_sub(1);
            return Err(ApiError::Transport("injected failure".to_string()));
        }
        if self.quota == 0 {
            return Err(ApiError::RateLimited);
        }
        self.quota -= 1;
        Ok(())
    }

    fn page<T: Clone>(items: &[T], page: u32, per_page: u32) -> Vec<T> {
        let start = (page.max(1) as usize - 1) * per_page as usize;
        items.iter().skip(start).take(per_page as usize).cloned().collect()
    }
}

impl ActionsApi for FixtureApi {
    fn list_runs(
        &mut self,
        repo: &str,
        since: Option<DateTime<Utc>>,
        page: u32,
        per_page: u32,
    ) -> Result<Vec<RawRun>, ApiError> {
        self.begin(format!("list_runs {repo} page {page}"))?;
        if self.unavailable_repos.contains(repo) {
            return Err(ApiError::NotFound { what: format!("repo {repo}") });
        }
        let listing = self.runs.get(repo).cloned().unwrap_or_default();
        let filtered: Vec<RawRun> = listing
            .into_iter()
            .filter(|r| since.is_none_or(|s| r.updated_at > s))
            .collect();
        Ok(Self::page(&filtered, page, per_page))
    }

    fn get_run_attempt(
        &mut self,
        repo: &str,
        run_id: u64,
        attempt: u32,
    ) -> Result<RawRun, ApiError> {
        self.begin(format!("get_run_attempt {repo}/{run_id}/{attempt}"))?;
        if self.poisoned_runs.contains(&run_id) {
            return Err(ApiError::Malformed { what: format!("run {run_id} document") });
        }
        self.attempts
            .get(&(repo.to_string(), run_id, attempt))
            .cloned()
            .ok_or_else(|| ApiError::NotFound { what: format!("run {run_id} attempt {attempt}") })
    }

    fn list_jobs(
        &mut self,
        repo: &str,
        run_id: u64,
        attempt: u32,
        page: u32,
        per_page: u32,
    ) -> Result<Vec<RawJob>, ApiError> {
        self.begin(format!("list_jobs {repo}/{run_id}/{attempt} page {page}"))?;
        let jobs = self
            .jobs
            .get(&(repo.to_string(), run_id, attempt))
            .cloned()
            .unwrap_or_default();
        Ok(Self::page(&jobs, page, per_page))
    }

    fn job_logs(&mut self, repo: &str, job_id: u64) -> Result<String, ApiError> {
        self.begin(format!("job_logs {repo}/{job_id}"))?;
        if self.missing_logs.contains(&job_id) {
            return Err(ApiError::NotFound { what: format!("logs of job {job_id}") });
        }
        self.logs
            .get(&(repo.to_string(), job_id))
            .cloned()
            .ok_or_else(|| ApiError::NotFound { what: format!("logs of job {job_id}") })
    }

    fn remaining_quota(&self) -> u32 {
        self.quota
    }

    fn pause(&mut self, reason: PauseReason, hint: Duration) {
        self.pauses.push((reason, hint));
        if reason == PauseReason::QuotaFloor {
            self.quota = self.quota_reset_to;
        }
    }
}

#[cfg(feature = "live")]
pub mod live {
    //! Authenticated client for the real Actions REST API. Compiled only
    //! with the `live` feature; nothing in the test suite depends on it.

    use super::*;

    /// Blocking REST client. Tracks remaining quota from the
    //  x-ratelimit-remaining header of the latest response.
    pub struct LiveApi {
        client: reqwest::blocking::Client,
        token: String,
        remaining: u32,
    }

    #[derive(serde::Deserialize)]
    struct RunsEnvelope {
        workflow_runs: Vec<RawRun>,
    }

    #[derive(serde::Deserialize)]
    struct JobsEnvelope {
        jobs: Vec<RawJob>,
    }

    impl LiveApi {
        pub fn new(token: String) -> Result<LiveApi, IngestError> {
            let client = reqwest::blocking::Client::builder()
                .user_agent("flakescope")
                .build()
                .map_err(|e| IngestError::Api {
                    what: "build http client".to_string(),
                    source: ApiError::Transport(e.to_string()),
                })?;
            Ok(LiveApi { client, token, remaining: u32::MAX })
        }

        fn get(&mut self, url: &str) -> Result<reqwest::blocking::Response, ApiError> {
            let resp = self
                .client
                .get(url)
                .header("Authorization", format!("Bearer {}", self.token))
                .header("Accept", "application/vnd.github+json")
                .header("X-GitHub-Api-Version", "2022-11-28")
                .send()
                .map_err(|e| ApiError::Transport(e.to_string()))?;
            if let Some(rem) = resp
                .headers()
                .get("x-ratelimit-remaining")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse().ok())
            {
                self.remaining = rem;
            }
            match resp.status().as_u16() {
                200..=299 => Ok(resp),
                404 | 410 => Err(ApiError::NotFound { what: url.to_string() }),
                403 | 429 => Err(ApiError::RateLimited),
                s => Err(ApiError::Transport(format!("status {s} for {url}"))),
            }
        }

        fn get_json<T: serde::de::DeserializeOwned>(&mut self, url: &str) -> Result<T, ApiError> {
            let resp = self.get(url)?;
            resp.json().map_err(|e| ApiError::Malformed { what: format!("{url}: {e}") })
        }
    }

    impl ActionsApi for LiveApi {
        fn list_runs(
            &mut self,
            repo: &str,
            since: Option<DateTime<Utc>>,
            page: u32,
            per_page: u32,
        ) -> Result<Vec<RawRun>, ApiError> {
            let mut url = format!(
                "https://api.github.com/repos/{repo}/actions/runs?per_page={per_page}&page={page}"
            );
            if let Some(s) = since {
                url.push_str(&format!("&created=%3E{}", s.format("%Y-%m-%dT%H:%M:%SZ")));
            }
            let envelope: RunsEnvelope = self.get_json(&url)?;
            Ok(envelope
                .workflow_runs
                .into_iter()
                .filter(|r| since.is_none_or(|s| r.updated_at > s))
                .collect())
        }

        fn get_run_attempt(
            &mut self,
            repo: &str,
            run_id: u64,
            attempt: u32,
        ) -> Result<RawRun, ApiError> {
            self.get_json(&format!(
                "https://api.github.com/repos/{repo}/actions/runs/{run_id}/attempts/{attempt}"
            ))
        }

        fn list_jobs(
            &mut self,
            repo: &str,
            run_id: u64,
            attempt: u32,
            page: u32,
            per_page: u32,
        ) -> Result<Vec<RawJob>, ApiError> {
            let envelope: JobsEnvelope = self.get_json(&format!(
                "https://api.github.com/repos/{repo}/actions/runs/{run_id}/attempts/{attempt}/jobs?per_page={per_page}&page={page}"
            ))?;
            Ok(envelope.jobs)
        }

        fn job_logs(&mut self, repo: &str, job_id: u64) -> Result<String, ApiError> {
            let resp =
                self.get(&format!("https://api.github.com/repos/{repo}/actions/jobs/{job_id}/logs"))?;
            resp.text().map_err(|e| ApiError::Malformed { what: e.to_string() })
        }

        fn remaining_quota(&self) -> u32 {
            self.remaining
        }

        fn pause(&mut self, _reason: PauseReason, hint: Duration) {
            std::thread::sleep(hint);
        }
    }
}
