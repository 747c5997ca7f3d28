//! Structured features for failed CI jobs, grouped in three blocks: who made
//! the change (developer), what the change did (code change), and where it
//! ran (project context).
//!
//! Every feature of a build must be computable from data available when the
//! build started: history filters use half-open windows ending strictly
//! before the build's start, so nothing later can influence the vector.
//! Unavailable inputs degrade to documented neutral defaults instead of
//! failing: zero for counts, one half for trust with no history, and an
//! `unknown` or `other` bucket for categoricals.

pub mod java;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::model::{BuildId, Conclusion, JobId, JobRecord, RerunSequence};
use crate::taxonomy::{classify_log, FailureCategory, PatternLibrary};
use java::StructuralCounts;

/// Short history window (one month).
pub const RECENT_WINDOW_DAYS: i64 = 30;
/// Long history window (three months).
pub const HISTORY_WINDOW_DAYS: i64 = 90;
/// Committers with at least this many prior commits count as core members.
pub const CORE_MEMBER_COMMITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeStatus {
    Added,
    Modified,
    Deleted,
}

/// One file's change within one commit. `before`/`after` carry full file
/// texts when the corpus provides them; structural diffs need them, the
/// line-count features do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub status: ChangeStatus,
    pub lines_added: u64,
    pub lines_deleted: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitMeta {
    pub id: String,
    pub author: String,
    pub message: String,
    pub timestamp: DateTime<Utc>,
    pub files: Vec<FileChange>,
}

/// Point-in-time repository statistics captured alongside the change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RepoSnapshot {
    #[serde(default)]
    pub sloc: u64,
    #[serde(default)]
    pub test_lines: u64,
    #[serde(default)]
    pub dependencies_count: u64,
    #[serde(default)]
    pub pr_comments: u64,
}

/// The commits a build tested, oldest first, plus repository statistics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChangeContext {
    pub commits: Vec<CommitMeta>,
    #[serde(default)]
    pub snapshot: RepoSnapshot,
}

impl ChangeContext {
    /// Author of the head (last) commit; empty when no commits are known.
    pub fn head_committer(&self) -> &str {
        self.commits.last().map_or("", |c| c.author.as_str())
    }
}

/// A past build of the repository, as the history features see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalBuild {
    pub build_id: BuildId,
    pub started_at: DateTime<Utc>,
    /// Completed conclusion, `None` while running or when unknown.
    pub conclusion: Option<Conclusion>,
    pub committer: String,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitSummary {
    pub author: String,
    pub timestamp: DateTime<Utc>,
    pub files: Vec<String>,
}

/// A committer's build in some other repository, for cross-project
/// experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalActivity {
    pub committer: String,
    pub timestamp: DateTime<Utc>,
}

/// Execution interval of a past job, for the concurrency feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobSpan {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// Read-only repository history handles the extractor consumes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RepoHistory {
    pub builds: Vec<HistoricalBuild>,
    pub commits: Vec<CommitSummary>,
    #[serde(default)]
    pub external: Vec<ExternalActivity>,
    #[serde(default)]
    pub job_spans: Vec<JobSpan>,
}

macro_rules! categorical {
    ($name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case")]
        pub enum $name {
            $($variant),+
        }
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }
    };
}

categorical!(CommitAttention {
    Fix => "fix",
    Feat => "feat",
    Chore => "chore",
    Refactor => "refactor",
    Test => "test",
    Docs => "docs",
    Other => "other",
});

impl CommitAttention {
    /// Reads a conventional-commit prefix (`type(scope)!:`) from the head
    /// commit message; anything unrecognized is `other`.
    pub fn from_message(message: &str) -> Self {
        static PREFIX: Lazy<Regex> =
            Lazy::new(|| Regex::new(r"^\s*([A-Za-z]+)\s*(?:\([^)]*\))?!?\s*:").unwrap());
        let Some(caps) = PREFIX.captures(message) else {
            return CommitAttention::Other;
        };
        match caps.get(1).unwrap().as_str().to_lowercase().as_str() {
            "fix" | "bugfix" | "hotfix" => CommitAttention::Fix,
            "feat" | "feature" => CommitAttention::Feat,
            "chore" => CommitAttention::Chore,
            "refactor" => CommitAttention::Refactor,
            "test" | "tests" => CommitAttention::Test,
            "docs" | "doc" => CommitAttention::Docs,
            _ => CommitAttention::Other,
        }
    }
}

categorical!(ErrorStep {
    Checkout => "checkout",
    Setup => "setup",
    Dependency => "dependency",
    Compile => "compile",
    Test => "test",
    StaticAnalysis => "static-analysis",
    Deploy => "deploy",
    Other => "other",
});

const STEP_KEYWORDS: &[(ErrorStep, &[&str])] = &[
    (ErrorStep::Checkout, &["checkout", "clone"]),
    (ErrorStep::Setup, &["setup", "set up", "toolchain", "configure", "bootstrap"]),
    (ErrorStep::Dependency, &["dependen", "install", "restore", "resolve", "bundle"]),
    (ErrorStep::Compile, &["build", "compile", "assemble", "package", "make"]),
    (ErrorStep::Test, &["test", "junit", "verify", "integration", "e2e"]),
    (
        ErrorStep::StaticAnalysis,
        &["lint", "checkstyle", "spotbugs", "pmd", "style", "format", "analysis", "sonar"],
    ),
    (ErrorStep::Deploy, &["deploy", "publish", "release", "upload"]),
];

impl ErrorStep {
    /// Maps a failed job's name onto a coarse pipeline stage. The keyword
    /// table is checked in a fixed order and the first hit wins.
    pub fn from_job_name(name: &str) -> Self {
        let lower = name.to_lowercase();
        for (step, keywords) in STEP_KEYWORDS {
            if keywords.iter().any(|k| lower.contains(k)) {
                return *step;
            }
        }
        ErrorStep::Other
    }
}

categorical!(RunnerType {
    GithubHosted => "github-hosted",
    SelfHosted => "self-hosted",
    Unknown => "unknown",
});

impl RunnerType {
    pub fn from_log(log: &str) -> Self {
        let head = log_head(log);
        if head.contains("self-hosted") {
            RunnerType::SelfHosted
        } else if head.contains("runner image")
            || head.contains("current runner version")
            || head.contains("hosted agent")
            || head.contains("github actions")
        {
            RunnerType::GithubHosted
        } else {
            RunnerType::Unknown
        }
    }
}

categorical!(OperatingSystem {
    Linux => "linux",
    Windows => "windows",
    Macos => "macos",
    Unknown => "unknown",
});

impl OperatingSystem {
    pub fn detect(job_name: &str, log: &str) -> Self {
        for text in [job_name.to_lowercase(), log_head(log)] {
            if text.contains("windows") {
                return OperatingSystem::Windows;
            }
            if ["macos", "mac os", "darwin", "osx"].iter().any(|k| text.contains(k)) {
                return OperatingSystem::Macos;
            }
            if ["ubuntu", "linux", "debian", "alpine", "centos", "fedora"]
                .iter()
                .any(|k| text.contains(k))
            {
                return OperatingSystem::Linux;
            }
        }
        OperatingSystem::Unknown
    }
}

/// First 100 lines, lowercased: runner provisioning banners live at the top.
fn log_head(log: &str) -> String {
    log.lines().take(100).collect::<Vec<_>>().join("\n").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeveloperFeatures {
    pub num_committers: u32,
    pub team_size: u32,
    pub trust_recent: f64,
    pub trust_hist: f64,
    pub same_committer: bool,
    pub repo_exp: u32,
    pub first_build: bool,
    pub cross_project_exp: u32,
    pub core_member: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeFeatures {
    pub commits: u32,
    pub commits_on_files_touched: u32,
    pub src_churn: u64,
    pub test_churn: u64,
    pub tests_added: u32,
    pub tests_deleted: u32,
    pub lines_added: u64,
    pub lines_deleted: u64,
    pub files_added: u32,
    pub files_deleted: u32,
    pub files_modified: u32,
    pub file_types_modified: u32,
    pub files_entropy: f64,
    pub attention: CommitAttention,
    pub cross_module: bool,
    pub src_structural: StructuralCounts,
    pub test_structural: StructuralCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatures {
    pub fail_rate_history: f64,
    pub fail_rate_recent: f64,
    pub hotspot_files_touched: u32,
    pub prev_same_files: bool,
    pub prev_build_success: bool,
    pub first_error_step: ErrorStep,
    pub sub_reason: Option<FailureCategory>,
    pub sloc: u64,
    pub test_lines: u64,
    pub tests_ran: u64,
    pub tests_passed: u64,
    pub tests_failed: u64,
    pub concurrent_jobs: u32,
    pub dependencies_churn: u64,
    pub dependencies_count: u64,
    pub dockerfile_changed: bool,
    pub artifact_share: bool,
    pub runner_changed: bool,
    pub pr_comments: u64,
    pub duration_secs: f64,
    pub warn_lines: u32,
    pub external_resource: bool,
    pub time_of_day: u32,
    pub day_of_week: u32,
    pub runner_type: RunnerType,
    pub operation_system: OperatingSystem,
}

/// All structured features of one failed job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredFeatureVector {
    pub developer: DeveloperFeatures,
    pub change: ChangeFeatures,
    pub context: ContextFeatures,
}

const DEVELOPER_NUMERIC: [&str; 9] = [
    "gh_num_committers",
    "repo_team_size",
    "gh_committer_trust_recent",
    "gh_committer_trust_hist",
    "gh_same_committer",
    "gh_committer_repo_exp",
    "gh_committer_first_build",
    "gh_committer_cross_project_exp",
    "is_core_member",
];

const CHANGE_NUMERIC: [&str; 13] = [
    "gh_commits",
    "gh_commits_on_files_touched",
    "gh_src_churn",
    "gh_test_churn",
    "gh_tests_added",
    "gh_tests_deleted",
    "gh_lines_added",
    "gh_lines_deleted",
    "gh_files_added",
    "gh_files_deleted",
    "gh_files_modified",
    "gh_files_type_modified",
    "gh_files_entropy",
];

const AST_NUMERIC: [&str; 13] = [
    "src_ast_diff",
    "test_ast_diff",
    "ast_class_added",
    "ast_class_deleted",
    "ast_class_modified",
    "ast_met_added",
    "ast_met_deleted",
    "ast_met_changed",
    "ast_met_body_modified",
    "ast_field_added",
    "ast_field_deleted",
    "ast_import_added",
    "ast_import_deleted",
];

const CONTEXT_NUMERIC: [&str; 22] = [
    "repo_fail_rate_history",
    "repo_fail_rate_recent",
    "gh_hotspot_files_touched",
    "gh_prev_same_files",
    "gh_prev_build_result",
    "sloc_initial",
    "test_lines_initial",
    "tests_ran",
    "tests_passed",
    "tests_failed",
    "concurrent_jobs",
    "gh_dependencies_churn",
    "gh_dependencies_count",
    "dockerfile_changed",
    "is_artifact_share",
    "is_runner_changed",
    "gh_num_pr_comments",
    "duration",
    "log_warn_nums",
    "external_github_resource",
    "time_of_day",
    "day_of_week",
];

static FEATURE_NAMES: Lazy<Vec<String>> = Lazy::new(|| {
    let mut names: Vec<String> = Vec::new();
    names.extend(DEVELOPER_NUMERIC.iter().map(|s| s.to_string()));
    names.extend(CHANGE_NUMERIC.iter().map(|s| s.to_string()));
    names.extend(CommitAttention::ALL.iter().map(|a| format!("git_commit_attention={}", a.name())));
    names.push("gh_cross_module_changes".to_string());
    names.extend(AST_NUMERIC.iter().map(|s| s.to_string()));
    names.extend(CONTEXT_NUMERIC.iter().map(|s| s.to_string()));
    names.extend(ErrorStep::ALL.iter().map(|s| format!("gh_first_error_step={}", s.name())));
    names.extend(FailureCategory::ALL.iter().map(|c| format!("sub_reason={}", c.name())));
    names.push("sub_reason=unmatched".to_string());
    names.extend(RunnerType::ALL.iter().map(|r| format!("runner_type={}", r.name())));
    names.extend(OperatingSystem::ALL.iter().map(|o| format!("operation_system={}", o.name())));
    names
});

fn one_hot<T: PartialEq + Copy>(all: &[T], value: T, out: &mut Vec<f64>) {
    for &v in all {
        out.push(if v == value { 1.0 } else { 0.0 });
    }
}

impl StructuredFeatureVector {
    /// Column names of [`StructuredFeatureVector::encode`], in order.
    /// Categorical features appear as `name=category` one-hot columns.
    pub fn feature_names() -> &'static [String] {
        &FEATURE_NAMES
    }

    /// Flattens to the documented column order.
    pub fn encode(&self) -> Vec<f64> {
        let d = &self.developer;
        let ch = &self.change;
        let cx = &self.context;
        let mut v: Vec<f64> = Vec::with_capacity(FEATURE_NAMES.len());
        v.extend([
            f64::from(d.num_committers),
            f64::from(d.team_size),
            d.trust_recent,
            d.trust_hist,
            f64::from(u8::from(d.same_committer)),
            f64::from(d.repo_exp),
            f64::from(u8::from(d.first_build)),
            f64::from(d.cross_project_exp),
            f64::from(u8::from(d.core_member)),
        ]);
        v.extend([
            f64::from(ch.commits),
            f64::from(ch.commits_on_files_touched),
            ch.src_churn as f64,
            ch.test_churn as f64,
            f64::from(ch.tests_added),
            f64::from(ch.tests_deleted),
            ch.lines_added as f64,
            ch.lines_deleted as f64,
            f64::from(ch.files_added),
            f64::from(ch.files_deleted),
            f64::from(ch.files_modified),
            f64::from(ch.file_types_modified),
            ch.files_entropy,
        ]);
        one_hot(CommitAttention::ALL, ch.attention, &mut v);
        v.push(f64::from(u8::from(ch.cross_module)));
        let combined = {
            let mut c = ch.src_structural;
            c += ch.test_structural;
            c
        };
        v.extend([
            f64::from(ch.src_structural.total()),
            f64::from(ch.test_structural.total()),
            f64::from(combined.class_added),
            f64::from(combined.class_deleted),
            f64::from(combined.class_modified),
            f64::from(combined.met_added),
            f64::from(combined.met_deleted),
            f64::from(combined.met_changed),
            f64::from(combined.met_body_modified),
            f64::from(combined.field_added),
            f64::from(combined.field_deleted),
            f64::from(combined.import_added),
            f64::from(combined.import_deleted),
        ]);
        v.extend([
            cx.fail_rate_history,
            cx.fail_rate_recent,
            f64::from(cx.hotspot_files_touched),
            f64::from(u8::from(cx.prev_same_files)),
            f64::from(u8::from(cx.prev_build_success)),
            cx.sloc as f64,
            cx.test_lines as f64,
            cx.tests_ran as f64,
            cx.tests_passed as f64,
            cx.tests_failed as f64,
            f64::from(cx.concurrent_jobs),
            cx.dependencies_churn as f64,
            cx.dependencies_count as f64,
            f64::from(u8::from(cx.dockerfile_changed)),
            f64::from(u8::from(cx.artifact_share)),
            f64::from(u8::from(cx.runner_changed)),
            cx.pr_comments as f64,
            cx.duration_secs,
            f64::from(cx.warn_lines),
            f64::from(u8::from(cx.external_resource)),
            f64::from(cx.time_of_day),
            f64::from(cx.day_of_week),
        ]);
        one_hot(ErrorStep::ALL, cx.first_error_step, &mut v);
        for c in FailureCategory::ALL {
            v.push(if cx.sub_reason == Some(c) { 1.0 } else { 0.0 });
        }
        v.push(if cx.sub_reason.is_none() { 1.0 } else { 0.0 });
        one_hot(RunnerType::ALL, cx.runner_type, &mut v);
        one_hot(OperatingSystem::ALL, cx.operation_system, &mut v);
        debug_assert_eq!(v.len(), FEATURE_NAMES.len());
        v
    }
}

/// Beta(1,1) posterior mean of a success rate: `(successes+1)/(total+2)`.
/// Always strictly inside (0,1); no history gives exactly one half.
pub fn trust_score(successes: u64, total: u64) -> f64 {
    assert!(successes <= total, "successes cannot exceed total");
    (successes as f64 + 1.0) / (total as f64 + 2.0)
}

/// Shannon entropy (bits) of churn proportions over touched files. Zero for
/// at most one file or zero total churn.
pub fn change_entropy(per_file_churn: &[f64]) -> f64 {
    let total: f64 = per_file_churn.iter().sum();
    if per_file_churn.len() <= 1 || total <= 0.0 {
        return 0.0;
    }
    per_file_churn
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Failed completed builds over completed builds in `[as_of − window, as_of)`.
/// Builds at exactly `as_of` or later never count.
pub fn fail_rate(builds: &[HistoricalBuild], window: Duration, as_of: DateTime<Utc>) -> f64 {
    let lo = as_of - window;
    let mut completed = 0u64;
    let mut failed = 0u64;
    for b in builds {
        if b.started_at >= lo && b.started_at < as_of {
            if b.conclusion.is_some() {
                completed += 1;
            }
            if b.conclusion == Some(Conclusion::Failure) {
                failed += 1;
            }
        }
    }
    if completed == 0 {
        0.0
    } else {
        failed as f64 / completed as f64
    }
}

const CODE_EXTENSIONS: [&str; 18] = [
    "java", "kt", "scala", "groovy", "rs", "go", "py", "js", "ts", "tsx", "jsx", "rb", "c",
    "cc", "cpp", "h", "hpp", "cs",
];

const DEPENDENCY_MANIFESTS: [&str; 18] = [
    "pom.xml",
    "build.gradle",
    "build.gradle.kts",
    "settings.gradle",
    "package.json",
    "package-lock.json",
    "yarn.lock",
    "cargo.toml",
    "cargo.lock",
    "go.mod",
    "go.sum",
    "requirements.txt",
    "pipfile",
    "pipfile.lock",
    "pyproject.toml",
    "gemfile",
    "gemfile.lock",
    "composer.json",
];

fn extension(path: &str) -> String {
    let base = path.rsplit('/').next().unwrap_or(path);
    match base.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => ext.to_lowercase(),
        _ => String::new(),
    }
}

fn basename(path: &str) -> String {
    path.rsplit('/').next().unwrap_or(path).to_lowercase()
}

/// Heuristic test-file detection: a `test`/`tests` path component, or a
/// basename shaped like a test (`Test*`, `*Test`, `*Tests`, `*TestCase`,
/// `test_*`, `*_test`, `*.spec.*`). Suffix checks are case-sensitive so that
/// words like `latest` or `testing` stay out.
pub fn is_test_path(path: &str) -> bool {
    let lower = path.to_lowercase();
    if lower.split('/').any(|c| c == "test" || c == "tests") {
        return true;
    }
    let base = path.rsplit('/').next().unwrap_or(path);
    let stem = base.split('.').next().unwrap_or(base);
    stem == "test"
        || stem == "tests"
        || stem.starts_with("Test")
        || stem.starts_with("test_")
        || stem.ends_with("Test")
        || stem.ends_with("Tests")
        || stem.ends_with("TestCase")
        || stem.ends_with("_test")
        || base.to_lowercase().contains(".spec.")
}

fn is_code_path(path: &str) -> bool {
    CODE_EXTENSIONS.contains(&extension(path).as_str())
}

fn is_dependency_manifest(path: &str) -> bool {
    DEPENDENCY_MANIFESTS.contains(&basename(path).as_str())
}

fn top_module(path: &str) -> &str {
    match path.split_once('/') {
        Some((head, _)) => head,
        None => "",
    }
}

/// Files changed at least as often as the top decile (by modification count,
/// ties broken by path) of files touched in the window.
pub fn hotspot_files(
    commits: &[CommitSummary],
    window: Duration,
    as_of: DateTime<Utc>,
) -> BTreeSet<String> {
    let lo = as_of - window;
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for c in commits {
        if c.timestamp >= lo && c.timestamp < as_of {
            for f in &c.files {
                *counts.entry(f.as_str()).or_insert(0) += 1;
            }
        }
    }
    if counts.is_empty() {
        return BTreeSet::new();
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = ranked.len().div_ceil(10);
    ranked.into_iter().take(keep).map(|(p, _)| p.to_string()).collect()
}

/// Test totals recovered from a job log across common runner formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestTotals {
    pub ran: u64,
    pub passed: u64,
    pub failed: u64,
}

static MAVEN_TOTALS: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"Tests run: (\d+), Failures: (\d+), Errors: (\d+)(?:, Skipped: (\d+))?").unwrap()
});
static GRADLE_TOTALS: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(\d+) tests? completed, (\d+) failed(?:, (\d+) skipped)?").unwrap());
static CARGO_TOTALS: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"test result: (?:ok|FAILED)\. (\d+) passed; (\d+) failed").unwrap());
static PYTEST_TOTALS: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:(\d+) failed, )?(\d+) passed(?:, \d+ skipped)?(?:, \d+ warnings?)? in [\d.]+s")
        .unwrap()
});

/// Sums matching test-summary lines; multi-module logs accumulate.
pub fn parse_test_totals(log: &str) -> TestTotals {
    let mut t = TestTotals::default();
    let grab = |m: Option<regex::Match<'_>>| m.map_or(0, |v| v.as_str().parse::<u64>().unwrap_or(0));
    for line in log.lines() {
        if let Some(c) = MAVEN_TOTALS.captures(line) {
            let (run, fail, err, skip) =
                (grab(c.get(1)), grab(c.get(2)), grab(c.get(3)), grab(c.get(4)));
            t.ran += run;
            t.failed += fail + err;
            t.passed += run.saturating_sub(fail + err + skip);
        } else if let Some(c) = GRADLE_TOTALS.captures(line) {
            let (run, fail, skip) = (grab(c.get(1)), grab(c.get(2)), grab(c.get(3)));
            t.ran += run;
            t.failed += fail;
            t.passed += run.saturating_sub(fail + skip);
        } else if let Some(c) = CARGO_TOTALS.captures(line) {
            let (pass, fail) = (grab(c.get(1)), grab(c.get(2)));
            t.ran += pass + fail;
            t.passed += pass;
            t.failed += fail;
        } else if let Some(c) = PYTEST_TOTALS.captures(line) {
            let (fail, pass) = (grab(c.get(1)), grab(c.get(2)));
            t.ran += pass + fail;
            t.passed += pass;
            t.failed += fail;
        }
    }
    t
}

static WARN_LINE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)\bwarn(ing)?\b").unwrap());

pub fn count_warning_lines(log: &str) -> u32 {
    log.lines().filter(|l| WARN_LINE.is_match(l)).count() as u32
}

static RUNNER_IMAGE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?im)^\s*(?:runner\s+)?image:\s*([\w.-]+)\s*$").unwrap());

/// Runner image label from the provisioning banner, when present.
pub fn runner_label(log: &str) -> Option<String> {
    RUNNER_IMAGE.captures(log).map(|c| c[1].to_lowercase())
}

struct FileAgg {
    first_status: ChangeStatus,
    last_status: ChangeStatus,
    lines_added: u64,
    lines_deleted: u64,
    before: Option<String>,
    after: Option<String>,
}

fn aggregate_files(ctx: &ChangeContext) -> BTreeMap<String, FileAgg> {
    let mut agg: BTreeMap<String, FileAgg> = BTreeMap::new();
    for commit in &ctx.commits {
        for f in &commit.files {
            match agg.get_mut(&f.path) {
                None => {
                    agg.insert(
                        f.path.clone(),
                        FileAgg {
                            first_status: f.status,
                            last_status: f.status,
                            lines_added: f.lines_added,
                            lines_deleted: f.lines_deleted,
                            before: f.before.clone(),
                            after: f.after.clone(),
                        },
                    );
                }
                Some(a) => {
                    a.last_status = f.status;
                    a.lines_added += f.lines_added;
                    a.lines_deleted += f.lines_deleted;
                    a.after = f.after.clone();
                }
            }
        }
    }
    // A file created and deleted within the same build is a net no-op.
    agg.retain(|_, a| {
        !(a.first_status == ChangeStatus::Added && a.last_status == ChangeStatus::Deleted)
    });
    agg
}

fn effective_status(a: &FileAgg) -> ChangeStatus {
    if a.first_status == ChangeStatus::Added {
        ChangeStatus::Added
    } else if a.last_status == ChangeStatus::Deleted {
        ChangeStatus::Deleted
    } else {
        ChangeStatus::Modified
    }
}

/// Extracts the full feature vector for one failed job of a build.
///
/// `log` is the job's raw log (empty when missing). History windows are
/// anchored at the first attempt's start, and only strictly earlier data can
/// influence the result. Returns the vector plus diagnostics for inputs that
/// had to be approximated.
pub fn extract(
    seq: &RerunSequence,
    job: &JobRecord,
    log: &str,
    ctx: &ChangeContext,
    history: &RepoHistory,
    library: &PatternLibrary,
) -> (StructuredFeatureVector, Vec<Diagnostic>) {
    let as_of = seq.first_attempt().started_at;
    let mut diagnostics = Vec::new();

    let committer = ctx.head_committer();
    let recent = Duration::days(RECENT_WINDOW_DAYS);
    let long = Duration::days(HISTORY_WINDOW_DAYS);

    // Developer block.
    let num_committers =
        ctx.commits.iter().map(|c| c.author.as_str()).collect::<BTreeSet<_>>().len() as u32;
    let team_size = history
        .commits
        .iter()
        .filter(|c| c.timestamp >= as_of - long && c.timestamp < as_of)
        .map(|c| c.author.as_str())
        .collect::<BTreeSet<_>>()
        .len() as u32;
    let committer_builds = |window: Duration| -> (u64, u64) {
        let lo = as_of - window;
        let mut successes = 0;
        let mut total = 0;
        for b in &history.builds {
            if b.committer == committer
                && b.started_at >= lo
                && b.started_at < as_of
                && b.conclusion.is_some()
            {
                total += 1;
                if b.conclusion == Some(Conclusion::Success) {
                    successes += 1;
                }
            }
        }
        (successes, total)
    };
    let (s1, t1) = committer_builds(recent);
    let (s3, t3) = committer_builds(long);
    let prev_build = history
        .builds
        .iter()
        .filter(|b| b.started_at < as_of)
        .max_by_key(|b| (b.started_at, b.build_id));
    let repo_exp = history
        .builds
        .iter()
        .filter(|b| b.committer == committer && !committer.is_empty() && b.started_at < as_of)
        .count() as u32;
    let cross_project_exp = history
        .external
        .iter()
        .filter(|e| e.committer == committer && !committer.is_empty() && e.timestamp < as_of)
        .count() as u32;
    let prior_commits = history
        .commits
        .iter()
        .filter(|c| c.author == committer && !committer.is_empty() && c.timestamp < as_of)
        .count();
    let developer = DeveloperFeatures {
        num_committers,
        team_size,
        trust_recent: trust_score(s1, t1),
        trust_hist: trust_score(s3, t3),
        same_committer: prev_build
            .is_some_and(|b| !committer.is_empty() && b.committer == committer),
        repo_exp,
        first_build: repo_exp == 0,
        cross_project_exp,
        core_member: prior_commits >= CORE_MEMBER_COMMITS,
    };

    // Change block.
    let files = aggregate_files(ctx);
    let touched: BTreeSet<&str> = files.keys().map(String::as_str).collect();
    let commits_on_files_touched = history
        .commits
        .iter()
        .filter(|c| {
            c.timestamp >= as_of - long
                && c.timestamp < as_of
                && c.files.iter().any(|f| touched.contains(f.as_str()))
        })
        .count() as u32;
    let mut change = ChangeFeatures {
        commits: ctx.commits.len() as u32,
        commits_on_files_touched,
        src_churn: 0,
        test_churn: 0,
        tests_added: 0,
        tests_deleted: 0,
        lines_added: 0,
        lines_deleted: 0,
        files_added: 0,
        files_deleted: 0,
        files_modified: 0,
        file_types_modified: 0,
        files_entropy: 0.0,
        attention: CommitAttention::from_message(
            ctx.commits.last().map_or("", |c| c.message.as_str()),
        ),
        cross_module: false,
        src_structural: StructuralCounts::default(),
        test_structural: StructuralCounts::default(),
    };
    let mut churns: Vec<f64> = Vec::new();
    let mut extensions: BTreeSet<String> = BTreeSet::new();
    let mut modules: BTreeSet<&str> = BTreeSet::new();
    let mut dependencies_churn = 0u64;
    let mut dockerfile_changed = false;
    for (path, agg) in &files {
        let churn = agg.lines_added + agg.lines_deleted;
        churns.push(churn as f64);
        extensions.insert(extension(path));
        modules.insert(top_module(path));
        change.lines_added += agg.lines_added;
        change.lines_deleted += agg.lines_deleted;
        match effective_status(agg) {
            ChangeStatus::Added => change.files_added += 1,
            ChangeStatus::Deleted => change.files_deleted += 1,
            ChangeStatus::Modified => change.files_modified += 1,
        }
        let test = is_test_path(path);
        if is_code_path(path) {
            if test {
                change.test_churn += churn;
            } else {
                change.src_churn += churn;
            }
        }
        if is_dependency_manifest(path) {
            dependencies_churn += churn;
        }
        if basename(path).starts_with("dockerfile") {
            dockerfile_changed = true;
        }
        if extension(path) == "java" && (agg.before.is_some() || agg.after.is_some()) {
            let (counts, fell_back) =
                java::diff_java_texts(agg.before.as_deref(), agg.after.as_deref());
            if fell_back {
                diagnostics.push(Diagnostic::new(
                    path.clone(),
                    "source did not parse; structural diff approximated from lines",
                ));
            }
            if test {
                change.test_structural += counts;
                change.tests_added += counts.met_added;
                change.tests_deleted += counts.met_deleted;
            } else {
                change.src_structural += counts;
            }
        }
    }
    change.file_types_modified = extensions.len() as u32;
    change.files_entropy = change_entropy(&churns);
    change.cross_module = modules.len() > 1;

    // Context block.
    let hotspots = hotspot_files(&history.commits, long, as_of);
    let totals = parse_test_totals(log);
    let job_start = job.started_at.unwrap_or(as_of);
    let concurrent_jobs = history
        .job_spans
        .iter()
        .filter(|s| s.start < as_of && s.start <= job_start && job_start < s.end)
        .count() as u32;
    let current_runner = runner_label(log);
    let lower_log = log.to_lowercase();
    let context = ContextFeatures {
        fail_rate_history: fail_rate(&history.builds, long, as_of),
        fail_rate_recent: fail_rate(&history.builds, recent, as_of),
        hotspot_files_touched: touched.iter().filter(|p| hotspots.contains(**p)).count() as u32,
        prev_same_files: prev_build
            .is_some_and(|b| b.files.iter().any(|f| touched.contains(f.as_str()))),
        prev_build_success: prev_build
            .is_some_and(|b| b.conclusion == Some(Conclusion::Success)),
        first_error_step: ErrorStep::from_job_name(&job.name),
        sub_reason: classify_log(log, library).category,
        sloc: ctx.snapshot.sloc,
        test_lines: ctx.snapshot.test_lines,
        tests_ran: totals.ran,
        tests_passed: totals.passed,
        tests_failed: totals.failed,
        concurrent_jobs,
        dependencies_churn,
        dependencies_count: ctx.snapshot.dependencies_count,
        dockerfile_changed,
        artifact_share: lower_log.contains("upload-artifact")
            || lower_log.contains("download-artifact"),
        runner_changed: match (&current_runner, prev_build.and_then(|b| b.runner.as_ref())) {
            (Some(cur), Some(prev)) => cur != &prev.to_lowercase(),
            _ => false,
        },
        pr_comments: ctx.snapshot.pr_comments,
        duration_secs: match (job.started_at, job.completed_at) {
            (Some(s), Some(e)) => (e - s).num_seconds().max(0) as f64,
            _ => 0.0,
        },
        warn_lines: count_warning_lines(log),
        external_resource: lower_log.contains("download action repository")
            || lower_log.contains("api.github.com")
            || lower_log.contains("objects.githubusercontent.com"),
        time_of_day: as_of.hour(),
        day_of_week: as_of.weekday().num_days_from_monday(),
        runner_type: RunnerType::from_log(log),
        operation_system: OperatingSystem::detect(&job.name, log),
    };

    (StructuredFeatureVector { developer, change, context }, diagnostics)
}

/// Feature vector and provenance for one failed job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFeatures {
    pub job_id: JobId,
    pub job_name: String,
    pub vector: StructuredFeatureVector,
    pub diagnostics: Vec<Diagnostic>,
}

/// Extracts features for every job that failed in the build's first attempt.
/// Jobs without a captured log get an empty one.
pub fn extract_failed_jobs(
    seq: &RerunSequence,
    logs: &BTreeMap<JobId, String>,
    ctx: &ChangeContext,
    history: &RepoHistory,
    library: &PatternLibrary,
) -> Vec<JobFeatures> {
    seq.initially_failed_jobs()
        .into_iter()
        .map(|job| {
            let log = logs.get(&job.job_id).map_or("", String::as_str);
            let (vector, diagnostics) = extract(seq, job, log, ctx, history, library);
            JobFeatures { job_id: job.job_id, job_name: job.name.clone(), vector, diagnostics }
        })
        .collect()
}
