//! Deterministic synthetic corpora with plantable log and change signals.
//!
//! Each job is one failed first-attempt build. A tunable fraction is flaky;
//! `log_signal` controls how many class-revealing lines each log carries and
//! `struct_signal` how strongly the change metadata separates the classes.
//! At zero signal both channels are pure noise, so any detector should score
//! at chance. The corpus ships ground-truth labels plus oracle scripts that
//! let the rerun-labeling protocol rediscover those labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{
    ChangeContext, ChangeStatus, CommitMeta, FileChange, RepoSnapshot,
};
use crate::ingest::{self, BuildBundle};
use crate::labeler;
use crate::model::{BuildRecord, Conclusion, JobRecord, Outcome, RerunSequence};

use super::HarnessError;

/// Shape of a generated corpus. Signals are strengths in [0, 1]; the flaky
/// ratio is exclusive of 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_jobs: usize,
    pub flaky_ratio: f64,
    pub log_signal: f64,
    pub struct_signal: f64,
    pub repo: String,
    pub start: DateTime<Utc>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_jobs: 200,
            flaky_ratio: 0.3,
            log_signal: 0.5,
            struct_signal: 0.5,
            repo: "synth/widgets".to_string(),
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_jobs == 0 {
            return Err(HarnessError::BadSynthSpec("n_jobs must be at least 1".into()));
        }
        if !(self.flaky_ratio > 0.0 && self.flaky_ratio < 1.0) {
            return Err(HarnessError::BadSynthSpec(format!(
                "flaky_ratio must lie strictly between 0 and 1, got {}",
                self.flaky_ratio
            )));
        }
        for (name, v) in [("log_signal", self.log_signal), ("struct_signal", self.struct_signal)]
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(HarnessError::BadSynthSpec(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.repo.is_empty() || !self.repo.contains('/') {
            return Err(HarnessError::BadSynthSpec("repo must look like owner/name".into()));
        }
        Ok(())
    }
}

/// A generated corpus: build bundles, ground-truth labels by job ref, and
/// rerun scripts for the labeling protocol.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub bundles: Vec<BuildBundle>,
    pub labels: BTreeMap<String, u8>,
    pub oracle_scripts: BTreeMap<String, Vec<String>>,
    pub spec: SynthSpec,
    pub seed: u64,
}

/// Log lines that only flaky failures emit.
const FLAKY_LINES: &[&str] = &[
    "Error: Connection timed out: connect",
    "java.net.SocketTimeoutException: Read timed out",
    "Could not transfer artifact from central",
    "HTTP 503 Service Unavailable",
    "Tests run: 14, Failures: 1, Errors: 0, Skipped: 2",
    "org.awaitility.core.ConditionTimeoutException: condition not fulfilled",
];

/// Log lines that only genuine failures emit.
const LEGIT_LINES: &[&str] = &[
    "error: cannot find symbol",
    "error: incompatible types: String cannot be converted to int",
    "checkstyle: Line is longer than 120 characters",
    "java.lang.NullPointerException at AppTest.testParse",
    "Segmentation fault (core dumped)",
    "BUILD FAILURE: compilation failed with 3 errors",
];

/// Class-neutral filler lines; `{w}` takes a word, `{n}` a number.
const NOISE_LINES: &[&str] = &[
    "[INFO] Building module {w}",
    "[INFO] Downloading dependency {w}-{n}.jar",
    "[INFO] Compiling {n} source files",
    "[WARNING] Deprecated API used in {w}",
    "Running test suite {w}",
    "Task :{w}:compileJava UP-TO-DATE",
    "[INFO] Installing artifact {w} into local repository",
];

const WORDS: &[&str] =
    &["alpha", "bravo", "carrier", "delta", "engine", "fabric", "gateway", "harbor"];

/// Commit authors with long repository tenure in the generated history.
const VETERANS: &[&str] = &["maria", "chen", "olga"];
/// Authors with no prior appearances.
const NEWCOMERS: &[&str] = &["intern7", "newbie42", "firstpr"];

/// True when the log carries any planted flaky-only line. This is the
/// generator's own back door, used to measure the separability ceiling a
/// detector is graded against.
pub fn planted_flaky_marker(log: &str) -> bool {
    FLAKY_LINES.iter().any(|l| log.contains(l))
}

fn noise_line(rng: &mut ChaCha8Rng) -> String {
    let template = NOISE_LINES[rng.gen_range(0..NOISE_LINES.len())];
    let word = WORDS[rng.gen_range(0..WORDS.len())];
    let number = rng.gen_range(1000..99999u32);
    template.replace("{w}", word).replace("{n}", &number.to_string())
}

fn failure_log(rng: &mut ChaCha8Rng, flaky: bool, log_signal: f64) -> String {
    let mut lines: Vec<String> = Vec::new();
    let noise = 4 + rng.gen_range(0..4);
    for _ in 0..noise {
        lines.push(noise_line(rng));
    }
    let pool = if flaky { FLAKY_LINES } else { LEGIT_LINES };
    let signal_lines = (log_signal * 6.0).round() as usize;
    for _ in 0..signal_lines {
        lines.push(pool[rng.gen_range(0..pool.len())].to_string());
    }
    lines.shuffle(rng);
    let mut log = lines.join("\n");
    log.push('\n');
    log
}

fn success_log(rng: &mut ChaCha8Rng) -> String {
    format!("{}\nBUILD SUCCESS\n", noise_line(rng))
}

fn change_context(
    rng: &mut ChaCha8Rng,
    flaky: bool,
    s: f64,
    i: usize,
    build_start: DateTime<Utc>,
) -> ChangeContext {
    // With probability 1/2 + s/2 each trait takes its class-typical value,
    // so s = 0 is uninformative and s = 1 is deterministic.
    let mut typical = [false; 3];
    for t in &mut typical {
        *t = rng.gen_range(0.0..1.0) < 0.5 + 0.5 * s;
    }

    let author_pool = if flaky == typical[0] { VETERANS } else { NEWCOMERS };
    let author = author_pool[rng.gen_range(0..author_pool.len())].to_string();
    let prefix = if flaky == typical[1] { "fix" } else { "feat" };
    let touches_tests = flaky == typical[2];

    let planted = if flaky { (s * 400.0).round() as u64 } else { 0 };
    let mut files = vec![FileChange {
        path: "src/main/java/App.java".to_string(),
        status: ChangeStatus::Modified,
        lines_added: planted + rng.gen_range(0..60),
        lines_deleted: rng.gen_range(0..20),
        before: None,
        after: None,
    }];
    if touches_tests {
        files.push(FileChange {
            path: "src/test/java/AppTest.java".to_string(),
            status: ChangeStatus::Modified,
            lines_added: rng.gen_range(1..40),
            lines_deleted: rng.gen_range(0..10),
            before: None,
            after: None,
        });
    }

    ChangeContext {
        commits: vec![CommitMeta {
            id: format!("c{:06x}{:08x}", i, rng.gen::<u32>()),
            author,
            message: format!("{prefix}: adjust {}", WORDS[rng.gen_range(0..WORDS.len())]),
            timestamp: build_start - Duration::minutes(5),
            files,
        }],
        snapshot: RepoSnapshot {
            sloc: 12_000 + i as u64,
            test_lines: 3_000 + (i as u64) / 2,
            dependencies_count: 25,
            pr_comments: rng.gen_range(0..5),
        },
    }
}

fn attempt(
    spec: &SynthSpec,
    build_id: u64,
    attempt_no: u32,
    started: DateTime<Utc>,
    conclusion: Conclusion,
) -> BuildRecord {
    let job_id = build_id * 10 + attempt_no as u64;
    let finished = started + Duration::minutes(8);
    BuildRecord {
        build_id,
        repo: spec.repo.clone(),
        run_attempt: attempt_no,
        trigger_event: "push".to_string(),
        started_at: started,
        updated_at: finished,
        outcome: Outcome::completed(conclusion),
        jobs: vec![JobRecord {
            job_id,
            build_id,
            attempt: attempt_no,
            name: "build".to_string(),
            started_at: Some(started + Duration::seconds(30)),
            completed_at: Some(finished),
            outcome: Outcome::completed(conclusion),
            log_ref: None,
        }],
    }
}

/// Generates the corpus. The same (spec, seed) pair always produces the
/// identical corpus, down to every byte written by
/// [`write_synth_corpus`].
pub fn generate_synthetic_corpus(
    spec: &SynthSpec,
    seed: u64,
) -> Result<SynthCorpus, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_jobs;
    let n_flaky = (n as f64 * spec.flaky_ratio).round() as usize;
    let flaky_set: BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, n, n_flaky.min(n)).into_iter().collect();

    let mut bundles = Vec::with_capacity(n);
    let mut labels = BTreeMap::new();
    let mut oracle_scripts = BTreeMap::new();

    for i in 0..n {
        let flaky = flaky_set.contains(&i);
        let build_id = (i + 1) as u64;
        let started = spec.start + Duration::minutes(10 * i as i64);

        let first = attempt(spec, build_id, 1, started, Conclusion::Failure);
        let first_job_id = first.jobs[0].job_id;
        let mut logs = BTreeMap::new();
        logs.insert((1u32, first_job_id), failure_log(&mut rng, flaky, spec.log_signal));

        let mut attempts = vec![first];
        // Even flaky builds carry their success in the attempt history;
        // odd ones need the rerun oracle to reveal it.
        if flaky && i % 2 == 0 {
            let second =
                attempt(spec, build_id, 2, started + Duration::minutes(20), Conclusion::Success);
            logs.insert((2u32, second.jobs[0].job_id), success_log(&mut rng));
            attempts.push(second);
        }

        let changes = change_context(&mut rng, flaky, spec.struct_signal, i, started);
        let sequence = RerunSequence::new(attempts).expect("generated attempts are coherent");
        let job_ref = labeler::job_ref(&sequence, &sequence.first_attempt().jobs[0]);
        labels.insert(job_ref.clone(), u8::from(flaky));
        if flaky && i % 2 == 1 {
            oracle_scripts.insert(job_ref, vec!["success".to_string()]);
        }
        bundles.push(BuildBundle { sequence, changes, logs });
    }

    Ok(SynthCorpus { bundles, labels, oracle_scripts, spec: spec.clone(), seed })
}

/// On-disk form of the ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsDoc {
    pub schema_version: u32,
    pub seed: u64,
    pub labels: BTreeMap<String, u8>,
}

pub const LABELS_DOC: &str = "labels.json";
pub const ORACLE_SCRIPTS_DOC: &str = "oracle_scripts.json";

/// Writes the corpus in the ingestion layout plus `labels.json` and
/// `oracle_scripts.json` at the root.
pub fn write_synth_corpus(corpus: &SynthCorpus, root: &Path) -> Result<(), HarnessError> {
    for bundle in &corpus.bundles {
        ingest::write_bundle(root, bundle)?;
    }
    let write = |name: &str, json: String| -> Result<(), HarnessError> {
        let path = root.join(name);
        fs::write(&path, json + "\n")
            .map_err(|source| crate::ingest::IngestError::Io { path, source })?;
        Ok(())
    };
    let labels = LabelsDoc {
        schema_version: crate::SCHEMA_VERSION,
        seed: corpus.seed,
        labels: corpus.labels.clone(),
    };
    write(LABELS_DOC, serde_json::to_string_pretty(&labels).expect("labels serialize"))?;
    write(
        ORACLE_SCRIPTS_DOC,
        serde_json::to_string_pretty(&corpus.oracle_scripts).expect("scripts serialize"),
    )?;
    Ok(())
}

/// Reads `labels.json` from a corpus root.
pub fn read_labels_doc(root: &Path) -> Result<LabelsDoc, HarnessError> {
    let path = root.join(LABELS_DOC);
    let text = fs::read_to_string(&path)
        .map_err(|source| crate::ingest::IngestError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| {
        HarnessError::BadSynthSpec(format!("{} is not a labels document: {e}", path.display()))
    })
}
