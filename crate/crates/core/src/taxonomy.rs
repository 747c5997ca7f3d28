//! Failure taxonomy: turns a job log into a failure category.
//!
//! The pipeline has three steps. First the failure message is extracted from
//! the log tail: the last [`TAIL_WINDOW_LINES`] lines, filtered to
//! failure-indicative ones. Second, [`generalize`] rewrites variable tokens
//! (paths, URLs, versions, timestamps, hex ids, owner/name slugs) into
//! non-greedy wildcards, so one pattern covers every instance of a message.
//! Third, the message is matched against an ordered [`PatternLibrary`] with
//! first-match semantics; the library ships as an editable data file and more
//! specific patterns come first.

use std::collections::BTreeSet;
use std::path::Path;

use once_cell::sync::Lazy;
use rand::SeedableRng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::errmark;

/// How many trailing log lines are searched for the failure message.
pub const TAIL_WINDOW_LINES: usize = 200;

/// Failure categories. The first eleven are established by observation
/// counts; the last four cover the long tail and are marked provisional in
/// the shipped library annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    FlakyTest,
    NetworkIssue,
    DependencyResolution,
    ExternalEnvironmentInconsistency,
    ApiServiceUnavailable,
    ConcurrencyIssue,
    CompilationError,
    ExecutionCrash,
    FileSystemInteractionError,
    StaticAnalysisError,
    MemoryLimit,
    JobTimeout,
    CacheError,
    ArtifactError,
    AuthorizationError,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 15] = [
        FailureCategory::FlakyTest,
        FailureCategory::NetworkIssue,
        FailureCategory::DependencyResolution,
        FailureCategory::ExternalEnvironmentInconsistency,
        FailureCategory::ApiServiceUnavailable,
        FailureCategory::ConcurrencyIssue,
        FailureCategory::CompilationError,
        FailureCategory::ExecutionCrash,
        FailureCategory::FileSystemInteractionError,
        FailureCategory::StaticAnalysisError,
        FailureCategory::MemoryLimit,
        FailureCategory::JobTimeout,
        FailureCategory::CacheError,
        FailureCategory::ArtifactError,
        FailureCategory::AuthorizationError,
    ];

    /// Long-tail categories whose boundaries are still settling.
    pub fn is_provisional(self) -> bool {
        matches!(
            self,
            FailureCategory::JobTimeout
                | FailureCategory::CacheError
                | FailureCategory::ArtifactError
                | FailureCategory::AuthorizationError
        )
    }

    /// The stable snake_case name, identical to the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            FailureCategory::FlakyTest => "flaky_test",
            FailureCategory::NetworkIssue => "network_issue",
            FailureCategory::DependencyResolution => "dependency_resolution",
            FailureCategory::ExternalEnvironmentInconsistency => {
                "external_environment_inconsistency"
            }
            FailureCategory::ApiServiceUnavailable => "api_service_unavailable",
            FailureCategory::ConcurrencyIssue => "concurrency_issue",
            FailureCategory::CompilationError => "compilation_error",
            FailureCategory::ExecutionCrash => "execution_crash",
            FailureCategory::FileSystemInteractionError => "file_system_interaction_error",
            FailureCategory::StaticAnalysisError => "static_analysis_error",
            FailureCategory::MemoryLimit => "memory_limit",
            FailureCategory::JobTimeout => "job_timeout",
            FailureCategory::CacheError => "cache_error",
            FailureCategory::ArtifactError => "artifact_error",
            FailureCategory::AuthorizationError => "authorization_error",
        }
    }
}

impl std::fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One entry of the pattern library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePattern {
    pub id: String,
    /// Anchored when compiled; wildcards are the non-greedy `.*?`.
    pub regex: String,
    pub category: FailureCategory,
    /// Where the pattern was observed. Informational only.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootCause {
    pub name: String,
    pub mitigation: String,
}

/// Per-category annotation block. Never consulted during classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub category: FailureCategory,
    pub provisional: bool,
    #[serde(default)]
    pub root_causes: Vec<RootCause>,
}

#[derive(Deserialize)]
struct LibraryFile {
    #[allow(dead_code)]
    schema_version: u32,
    patterns: Vec<FailurePattern>,
    #[serde(default)]
    categories: Vec<CategoryInfo>,
}

/// Ordered, compiled pattern library.
#[derive(Debug)]
pub struct PatternLibrary {
    patterns: Vec<FailurePattern>,
    compiled: Vec<Regex>,
    categories: Vec<CategoryInfo>,
}

impl PatternLibrary {
    /// The library shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json_str(include_str!("../data/pattern_library.json"))
            .expect("builtin pattern library is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaxonomyError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, TaxonomyError> {
        let file: LibraryFile = serde_json::from_str(text)?;
        Self::from_parts(file.patterns, file.categories)
    }

    pub fn from_parts(
        patterns: Vec<FailurePattern>,
        categories: Vec<CategoryInfo>,
    ) -> Result<Self, TaxonomyError> {
        let mut seen = BTreeSet::new();
        for p in &patterns {
            if !seen.insert(p.id.clone()) {
                return Err(TaxonomyError::DuplicatePatternId { id: p.id.clone() });
            }
        }
        let compiled = patterns
            .iter()
            .map(|p| {
                Regex::new(&format!("^(?s:{})$", p.regex))
                    .map_err(|e| TaxonomyError::InvalidRegex { id: p.id.clone(), source: e })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PatternLibrary { patterns, compiled, categories })
    }

    pub fn patterns(&self) -> &[FailurePattern] {
        &self.patterns
    }

    pub fn categories(&self) -> &[CategoryInfo] {
        &self.categories
    }

    fn first_match(&self, message: &str) -> Option<&FailurePattern> {
        let lines: Vec<&str> = message.lines().collect();
        for (pattern, re) in self.patterns.iter().zip(&self.compiled) {
            if re.is_match(message) {
                return Some(pattern);
            }
            if lines.len() > 1 && lines.iter().any(|l| re.is_match(l)) {
                return Some(pattern);
            }
        }
        None
    }
}

/// Outcome of matching one message against the library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub category: Option<FailureCategory>,
    pub pattern_id: Option<String>,
    /// The message that was matched (extracted, not generalized).
    pub message: String,
    pub unmatched_reason: Option<String>,
}

impl MatchResult {
    pub fn is_matched(&self) -> bool {
        self.category.is_some()
    }
}

/// Extracts the failure message from a raw log: the failure-indicative lines
/// among the last [`TAIL_WINDOW_LINES`] lines, joined by newlines.
pub fn extract_failure_message(log: &str) -> String {
    let lines: Vec<&str> = log.lines().map(|l| l.trim_end_matches('\r')).collect();
    let start = lines.len().saturating_sub(TAIL_WINDOW_LINES);
    lines[start..]
        .iter()
        .copied()
        .filter(|l| errmark::is_failure_indicative(l))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Matches an already extracted message against the library. Patterns are
/// tried in library order against the whole message, then line by line.
pub fn match_message(message: &str, library: &PatternLibrary) -> MatchResult {
    if message.is_empty() {
        return MatchResult {
            category: None,
            pattern_id: None,
            message: String::new(),
            unmatched_reason: Some("empty message".to_string()),
        };
    }
    match library.first_match(message) {
        Some(p) => MatchResult {
            category: Some(p.category),
            pattern_id: Some(p.id.clone()),
            message: message.to_string(),
            unmatched_reason: None,
        },
        None => MatchResult {
            category: None,
            pattern_id: None,
            message: message.to_string(),
            unmatched_reason: Some("no pattern matched".to_string()),
        },
    }
}

/// Extraction plus matching in one step.
pub fn classify_log(log: &str, library: &PatternLibrary) -> MatchResult {
    let message = extract_failure_message(log);
    if message.is_empty() {
        return MatchResult {
            category: None,
            pattern_id: None,
            message,
            unmatched_reason: Some("no failure-indicative lines".to_string()),
        };
    }
    match_message(&message, library)
}

static VARIABLE_TOKEN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(concat!(
        r"\.\*\?",                              // an already generalized wildcard
        r"|[a-z][a-z0-9+.-]*://[^\s'\x22<>]+",  // URL
        // ISO timestamp, then bare date and bare time
        r"|\b\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:?\d{2})?",
        r"|\b\d{4}-\d{2}-\d{2}\b",
        r"|\b\d{2}:\d{2}:\d{2}(?:\.\d+)?\b",
        r"|(?:~?/|[A-Za-z]:\\)[\w.@%+\\/~-]+",  // absolute file path
        r"|\b[\w.-]+/[\w.-]+\b",                // owner/name slug
        r"|\bv?\d+(?:\.\d+)+(?:[-+][\w.]+)?\b", // version
        r"|\b0x[0-9a-fA-F]+\b",                 // hex id
        r"|\b[0-9a-f]{7,40}\b",                 // bare hex id (needs a digit)
    ))
    .expect("variable token pattern")
});

/// Rewrites a concrete failure message into a reusable pattern: variable
/// tokens become the non-greedy wildcard `.*?` and everything else is
/// escaped as literal text.
///
/// The function is idempotent, so a pattern fed back in comes out unchanged,
/// and the produced regex always matches the original message. One caveat
/// follows from idempotence: a backslash directly before a regex
/// metacharacter is read as an escape sequence, not as a literal backslash.
pub fn generalize(message: &str) -> String {
    let mut out = String::with_capacity(message.len() + 8);
    let mut last = 0;
    for m in VARIABLE_TOKEN.find_iter(message) {
        let token = m.as_str();
        // Bare hex runs must contain a digit; otherwise they are ordinary
        // words like "deadline" prefixes and stay literal.
        let is_bare_hex = token.len() >= 7
            && token.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase());
        if is_bare_hex
            && !token.chars().any(|c| c.is_ascii_digit())
            && !token.starts_with("0x")
        {
            continue;
        }
        escape_literal(&message[last..m.start()], &mut out);
        out.push_str(".*?");
        last = m.end();
    }
    escape_literal(&message[last..], &mut out);
    // Tokens that touch collapse into a single wildcard. Escaped literal text
    // cannot contain a raw ".*?" since its dot would be escaped.
    while out.contains(".*?.*?") {
        out = out.replace(".*?.*?", ".*?");
    }
    out
}

const fn is_meta(c: char) -> bool {
    matches!(
        c,
        '\\' | '.' | '+' | '*' | '?' | '(' | ')' | '|' | '[' | ']' | '{' | '}' | '^' | '$'
    )
}

/// Escapes regex metacharacters, preserving already escaped pairs so that
/// re-escaping a previous output is a no-op.
fn escape_literal(text: &str, out: &mut String) {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' && i + 1 < chars.len() && is_meta(chars[i + 1]) {
            out.push('\\');
            out.push(chars[i + 1]);
            i += 2;
            continue;
        }
        if is_meta(c) {
            out.push('\\');
        }
        out.push(c);
        i += 1;
    }
}

/// Match-rate summary over a batch of logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: usize,
    pub matched: usize,
    pub match_rate: f64,
    /// Seeded random sample of extracted-but-unmatched messages, at most 10,
    /// in input order.
    pub unmatched_sample: Vec<String>,
}

/// Classifies every log and reports how much of the corpus the library
/// covers. The unmatched sample is drawn with the given seed, so repeated
/// calls with the same seed return the same report.
pub fn coverage_report(logs: &[String], library: &PatternLibrary, seed: u64) -> CoverageReport {
    let mut unmatched = Vec::new();
    let mut matched = 0usize;
    for log in logs {
        let result = classify_log(log, library);
        if result.is_matched() {
            matched += 1;
        } else {
            unmatched.push(result.message);
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sample_size = unmatched.len().min(10);
    let mut picked = rand::seq::index::sample(&mut rng, unmatched.len(), sample_size).into_vec();
    picked.sort_unstable();
    let unmatched_sample = picked.into_iter().map(|i| unmatched[i].clone()).collect();
    CoverageReport {
        total: logs.len(),
        matched,
        match_rate: if logs.is_empty() { 0.0 } else { matched as f64 / logs.len() as f64 },
        unmatched_sample,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("pattern {id}: invalid regex: {source}")]
    InvalidRegex {
        id: String,
        #[source]
        source: regex::Error,
    },
    #[error("duplicate pattern id {id}")]
    DuplicatePatternId { id: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing pattern library: {0}")]
    Parse(#[from] serde_json::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_library_loads_and_covers_every_category() {
        let lib = PatternLibrary::builtin();
        assert!(lib.patterns().len() >= 45);
        let covered: BTreeSet<FailureCategory> =
            lib.patterns().iter().map(|p| p.category).collect();
        assert_eq!(covered.len(), FailureCategory::ALL.len());
        // Annotations exist for every category and agree on provisional flags.
        for cat in FailureCategory::ALL {
            let info = lib
                .categories()
                .iter()
                .find(|c| c.category == cat)
                .unwrap_or_else(|| panic!("no annotation for {cat}"));
            assert_eq!(info.provisional, cat.is_provisional(), "{cat}");
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let p = FailurePattern {
            id: "x".into(),
            regex: "a".into(),
            category: FailureCategory::FlakyTest,
            provenance: String::new(),
        };
        let err = PatternLibrary::from_parts(vec![p.clone(), p], vec![]).unwrap_err();
        assert!(matches!(err, TaxonomyError::DuplicatePatternId { .. }));
    }

    #[test]
    fn invalid_regex_is_reported_with_its_id() {
        let p = FailurePattern {
            id: "broken".into(),
            regex: "(".into(),
            category: FailureCategory::FlakyTest,
            provenance: String::new(),
        };
        match PatternLibrary::from_parts(vec![p], vec![]) {
            Err(TaxonomyError::InvalidRegex { id, .. }) => assert_eq!(id, "broken"),
            other => panic!("expected InvalidRegex, got {other:?}"),
        }
    }

    #[test]
    fn extraction_takes_failure_lines_from_the_tail() {
        let mut log = String::new();
        for i in 0..500 {
            log.push_str(&format!("INFO step {i} ok\n"));
        }
        log.push_str("Error: failed to download helm/helm\n");
        assert_eq!(extract_failure_message(&log), "Error: failed to download helm/helm");
    }

    #[test]
    fn extraction_ignores_errors_before_the_window() {
        let mut log = String::from("Error: ancient failure\n");
        for i in 0..TAIL_WINDOW_LINES {
            log.push_str(&format!("INFO filler {i}\n"));
        }
        assert_eq!(extract_failure_message(&log), "");
    }

    #[test]
    fn all_info_log_yields_no_failure_lines_reason() {
        let log = "INFO a\nINFO b\nINFO c\n";
        let lib = PatternLibrary::builtin();
        let r = classify_log(log, &lib);
        assert!(!r.is_matched());
        assert_eq!(r.unmatched_reason.as_deref(), Some("no failure-indicative lines"));
    }

    #[test]
    fn empty_message_reason_is_distinct() {
        let lib = PatternLibrary::builtin();
        let r = match_message("", &lib);
        assert_eq!(r.unmatched_reason.as_deref(), Some("empty message"));
    }

    #[test]
    fn generalize_replaces_slug_with_wildcard() {
        assert_eq!(
            generalize("Error: failed to download starwhale/starwhale"),
            "Error: failed to download .*?"
        );
    }

    #[test]
    fn generalize_keeps_invariant_text() {
        assert_eq!(
            generalize("Error: Remote host terminated the handshake"),
            "Error: Remote host terminated the handshake"
        );
    }

    #[test]
    fn generalize_handles_urls_paths_versions_timestamps_hex() {
        assert_eq!(
            generalize("Failed to fetch https://repo1.maven.org/maven2/org/acme/ Network is unreachable"),
            "Failed to fetch .*? Network is unreachable"
        );
        assert_eq!(
            generalize("cannot open /home/runner/work/widget/widget/build.log"),
            "cannot open .*?"
        );
        assert_eq!(generalize("using gradle 8.4.1 now"), "using gradle .*? now");
        assert_eq!(
            generalize("at 2024-01-02T03:04:05Z worker 0x7ffce3a1 died"),
            "at .*? worker .*? died"
        );
        assert_eq!(generalize("commit 7f3a9c1 is bad"), "commit .*? is bad");
        // Hex-shaped tokens without a digit are ordinary words.
        assert_eq!(generalize("restarting cafebabe"), "restarting cafebabe");
        assert_eq!(generalize("word decaffed stays"), "word decaffed stays");
    }

    #[test]
    fn generalize_escapes_metacharacters() {
        assert_eq!(
            generalize("[ERROR] build failed (exit 1)"),
            "\\[ERROR\\] build failed \\(exit 1\\)"
        );
    }

    #[test]
    fn generalize_is_idempotent_and_self_matching_on_examples() {
        let messages = [
            "Error: failed to download starwhale/starwhale",
            "Error: Remote host terminated the handshake",
            "[ERROR] Failed to execute goal on project widget: boom (exit 1)",
            "E: Failed to fetch https://deb.debian.org/pool/main/c/curl.deb Network is unreachable",
            "java.io.FileNotFoundException: /tmp/fixture.yaml (No such file or directory)",
            "expected:<42> but was:<41>",
        ];
        for m in messages {
            let g1 = generalize(m);
            let g2 = generalize(&g1);
            assert_eq!(g1, g2, "not idempotent for {m:?}");
            let re = Regex::new(&format!("^(?s:{g1})$")).expect("generalized pattern compiles");
            assert!(re.is_match(m), "{g1:?} does not match {m:?}");
        }
    }

    #[test]
    fn canonical_messages_match_expected_categories() {
        let lib = PatternLibrary::builtin();
        let cases = [
            ("Error: failed to download helm/helm", FailureCategory::DependencyResolution),
            ("Error: Remote host terminated the handshake", FailureCategory::NetworkIssue),
            (
                "E: Failed to fetch https://deb.debian.org/x.deb Network is unreachable",
                FailureCategory::NetworkIssue,
            ),
            ("java.lang.OutOfMemoryError: Java heap space", FailureCategory::MemoryLimit),
            (
                "java.lang.AssertionError: expected:<200> but was:<503>",
                FailureCategory::FlakyTest,
            ),
        ];
        for (msg, want) in cases {
            let r = match_message(msg, &lib);
            assert_eq!(r.category, Some(want), "{msg}");
        }
    }

    #[test]
    fn first_match_wins_in_library_order() {
        let mk = |id: &str, regex: &str, category| FailurePattern {
            id: id.into(),
            regex: regex.into(),
            category,
            provenance: String::new(),
        };
        let lib = PatternLibrary::from_parts(
            vec![
                mk("specific", "boom: .*?", FailureCategory::NetworkIssue),
                mk("generic", ".*?boom.*?", FailureCategory::FlakyTest),
            ],
            vec![],
        )
        .unwrap();
        let r = match_message("boom: reactor offline", &lib);
        assert_eq!(r.pattern_id.as_deref(), Some("specific"));
        assert_eq!(r.category, Some(FailureCategory::NetworkIssue));
    }

    #[test]
    fn multiline_messages_match_per_line() {
        let lib = PatternLibrary::builtin();
        let message = "FATAL: worker lost\njava.lang.OutOfMemoryError: Java heap space";
        let r = match_message(message, &lib);
        assert_eq!(r.category, Some(FailureCategory::MemoryLimit));
    }

    #[test]
    fn coverage_report_is_seed_deterministic() {
        let lib = PatternLibrary::builtin();
        let mut logs = Vec::new();
        for i in 0..30 {
            logs.push(format!("Error: mysterious thing {i} nobody patterns"));
        }
        logs.push("java.lang.OutOfMemoryError: Java heap space".to_string());
        let a = coverage_report(&logs, &lib, 99);
        let b = coverage_report(&logs, &lib, 99);
        assert_eq!(a, b);
        assert_eq!(a.matched, 1);
        assert_eq!(a.total, 31);
        assert_eq!(a.unmatched_sample.len(), 10);
        let c = coverage_report(&logs, &lib, 100);
        assert_eq!(c.matched, a.matched);
    }
}
