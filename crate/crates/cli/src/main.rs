//! Command-line frontend: one binary wiring corpus ingestion, flakiness
//! statistics, failure classification, rerun labeling, feature extraction,
//! detector training and prediction, forward-chaining evaluation, and
//! synthetic corpus generation.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. All randomness
//! flows from the single `--seed` flag, and machine-readable outputs carry
//! `schema_version` and that seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use flakescope::cost;
use flakescope::detector::{self, DetectorConfig, DetectorModel};
use flakescope::harness::{
    self, assemble_history, assemble_rows, evaluate_corpus, generate_synthetic_corpus,
    train_detector, EvaluateOptions, GridSpec, ModelKind, SynthSpec,
};
use flakescope::ingest::load_corpus;
use flakescope::labeler::{label_corpus, LabelKind, ScriptedOracle, DEFAULT_MAX_RERUNS};
use flakescope::logsem::LogDocument;
use flakescope::model::judge_build;
use flakescope::taxonomy::{classify_log, PatternLibrary};
use flakescope::SCHEMA_VERSION;

#[derive(Parser)]
#[command(
    name = "flakescope",
    version,
    about = "Identify, measure, and predict flaky CI failures in build histories"
)]
struct Cli {
    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; defaults to the available cores. Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output format for results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    /// One JSON record per line.
    JsonLines,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch a repository's workflow history from the GitHub REST API into
    /// a local corpus (requires a build with the `live` feature; reads the
    /// token from GITHUB_TOKEN).
    Ingest(IngestArgs),
    /// Summarize a corpus: reruns, flaky builds, and rerun cost.
    Stats(CorpusArgs),
    /// Classify every failed job's log against the failure-pattern library.
    ClassifyFailures(ClassifyArgs),
    /// Label initially-failed jobs as flaky or not via rerun evidence.
    Label(LabelArgs),
    /// Extract structured features for every failed first-attempt job.
    Features(CorpusArgs),
    /// Train a detector on a labeled corpus and save it.
    Train(TrainArgs),
    /// Score failed jobs in a corpus with a trained detector.
    Predict(PredictArgs),
    /// Forward-chaining evaluation of detectors (and optionally the voting
    /// baseline) over a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic corpus with planted signals.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Repository slug, owner/name.
    #[arg(long)]
    repo: String,
    /// Directory the corpus is written to.
    #[arg(long)]
    out: PathBuf,
    /// Only fetch runs updated strictly after this RFC 3339 instant.
    #[arg(long)]
    since: Option<chrono::DateTime<chrono::Utc>>,
    /// Runs and jobs per API page (1..=100).
    #[arg(long, default_value_t = 100)]
    page_size: u32,
    /// Transport retries per request.
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus root directory.
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Pattern library JSON; defaults to the built-in library.
    #[arg(long)]
    patterns: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Scripted rerun outcomes, a JSON map of job ref to outcome words.
    /// Defaults to `oracle_scripts.json` in the corpus when present.
    #[arg(long)]
    scripts: Option<PathBuf>,
    /// Rerun budget per job.
    #[arg(long, default_value_t = DEFAULT_MAX_RERUNS)]
    max_reruns: u32,
    /// Write the resulting labels document here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Labels document; defaults to `labels.json` in the corpus.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Where the model document is written.
    #[arg(long)]
    out: PathBuf,
    /// Structured-channel classifier.
    #[arg(long, default_value = "lr")]
    model: ModelKind,
    /// Log-channel neighbor count.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Structured features kept after ranking.
    #[arg(long, default_value_t = 20)]
    f: usize,
    /// Log-channel weight in the fusion.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Decision threshold.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Model document produced by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Score only this job ref (repo/build_id/job_id).
    #[arg(long)]
    job: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Labels document; defaults to `labels.json` in the corpus.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// `full` for the complete hyperparameter grid, or a path to a grid
    /// spec JSON.
    #[arg(long, default_value = "full")]
    grid: String,
    /// Comma-separated structured-channel models to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "lr,rf")]
    models: Vec<ModelKind>,
    /// Also run the voting baseline on the identical fold plan.
    #[arg(long)]
    baseline: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of failed jobs to generate.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    flaky_ratio: f64,
    /// Strength of the class signal planted in logs, 0 to 1.
    #[arg(long, default_value_t = 0.5)]
    log_signal: f64,
    /// Strength of the class signal planted in change metadata, 0 to 1.
    #[arg(long, default_value_t = 0.5)]
    struct_signal: f64,
    /// Repository slug the corpus claims.
    #[arg(long, default_value = "synth/widgets")]
    repo: String,
    /// Directory the corpus is written to.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes instead of panicking on
    // EPIPE mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Ignore failure: a pool may already exist in test harnesses.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(cli, args),
        Command::Stats(args) => cmd_stats(cli, args),
        Command::ClassifyFailures(args) => cmd_classify(cli, args),
        Command::Label(args) => cmd_label(cli, args),
        Command::Features(args) => cmd_features(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Predict(args) => cmd_predict(cli, args),
        Command::Evaluate(args) => cmd_evaluate(cli, args),
        Command::Synth(args) => cmd_synth(cli, args),
    }
}

/// Stamps every machine-readable record with the schema version and seed.
fn record(cli: &Cli, kind: &str, body: serde_json::Value) -> serde_json::Value {
    let mut base = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": cli.seed,
        "kind": kind,
    });
    base.as_object_mut()
        .unwrap()
        .extend(body.as_object().cloned().unwrap_or_default());
    base
}

fn emit(value: &serde_json::Value) {
    println!("{}", serde_json::to_string(value).expect("serializable record"));
}

fn load(corpus: &Path) -> Result<flakescope::ingest::CorpusLoad> {
    load_corpus(corpus).with_context(|| format!("loading corpus at {}", corpus.display()))
}

fn load_labels(corpus: &Path, labels: &Option<PathBuf>) -> Result<harness::synth::LabelsDoc> {
    match labels {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading labels at {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("{} is not a labels document", path.display()))
        }
        None => harness::synth::read_labels_doc(corpus)
            .context("no --labels given and the corpus has no labels.json"),
    }
}

#[cfg(feature = "live")]
fn cmd_ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    use flakescope::ingest::{fetch_repo_history, live::LiveApi, FetchPolicy};
    let token = std::env::var("GITHUB_TOKEN")
        .context("GITHUB_TOKEN must be set to fetch from the GitHub API")?;
    let mut api = LiveApi::new(token)?;
    let policy = FetchPolicy {
        page_size: args.page_size,
        max_retries: args.max_retries,
        ..FetchPolicy::default()
    };
    let fetched =
        fetch_repo_history(&mut api, &args.repo, &policy, args.since, Some(&args.out))?;
    match cli.format {
        Format::Text => {
            println!(
                "fetched {} build sequences from {} into {}",
                fetched.bundles.len(),
                args.repo,
                args.out.display()
            );
            for d in &fetched.diagnostics {
                println!("note: {}: {}", d.context, d.message);
            }
        }
        Format::JsonLines => emit(&record(
            cli,
            "ingest",
            json!({
                "repo": args.repo,
                "out": args.out.display().to_string(),
                "bundles": fetched.bundles.len(),
                "diagnostics": fetched.diagnostics,
            }),
        )),
    }
    Ok(())
}

#[cfg(not(feature = "live"))]
fn cmd_ingest(_cli: &Cli, _args: &IngestArgs) -> Result<()> {
    bail!("this binary was built without the live GitHub client; rebuild with --features live")
}

fn cmd_stats(cli: &Cli, args: &CorpusArgs) -> Result<()> {
    let loaded = load(&args.corpus)?;
    let mut rerun_costs: Vec<i64> = Vec::new();
    let mut non_rerun_costs: Vec<i64> = Vec::new();
    let mut builds = 0usize;
    let mut reruns = 0usize;
    let mut flaky = 0usize;
    let mut failed_jobs = 0usize;

    for bundle in &loaded.bundles {
        let seq = &bundle.sequence;
        let verdict = judge_build(seq);
        let report = cost::cost_report(seq);
        builds += 1;
        failed_jobs += seq.initially_failed_jobs().len();
        if verdict.build_is_rerun {
            reruns += 1;
            rerun_costs.push(report.computational_ms);
        } else {
            non_rerun_costs.push(report.computational_ms);
        }
        if verdict.build_is_flaky {
            flaky += 1;
        }
        if cli.format == Format::JsonLines {
            emit(&record(
                cli,
                "build",
                json!({
                    "repo": seq.repo(),
                    "build_id": seq.build_id(),
                    "attempts": seq.attempts().len(),
                    "build_is_flaky": verdict.build_is_flaky,
                    "approval_rerun": verdict.approval_rerun,
                    "waiting_ms": report.waiting_ms,
                    "computational_ms": report.computational_ms,
                }),
            ));
        }
    }

    let comparison = cost::compare_costs(&rerun_costs, &non_rerun_costs).ok();
    match cli.format {
        Format::Text => {
            println!("builds:            {builds}");
            println!("rerun builds:      {reruns}");
            println!("flaky builds:      {flaky}");
            println!("failed jobs:       {failed_jobs}");
            if let Some(c) = &comparison {
                println!(
                    "machine cost, rerun builds:     mean {:.0} ms, median {:.0} ms (n={})",
                    c.rerun.mean_ms, c.rerun.median_ms, c.rerun.count
                );
                println!(
                    "machine cost, non-rerun builds: mean {:.0} ms, median {:.0} ms (n={})",
                    c.non_rerun.mean_ms, c.non_rerun.median_ms, c.non_rerun.count
                );
                println!(
                    "{} ({}): p = {:.4}",
                    c.test_name, c.method, c.p_value
                );
            }
            for d in &loaded.diagnostics {
                println!("note: {}: {}", d.context, d.message);
            }
        }
        Format::JsonLines => emit(&record(
            cli,
            "summary",
            json!({
                "builds": builds,
                "rerun_builds": reruns,
                "flaky_builds": flaky,
                "failed_jobs": failed_jobs,
                "cost_comparison": comparison,
            }),
        )),
    }
    Ok(())
}

fn library(patterns: &Option<PathBuf>) -> Result<PatternLibrary> {
    match patterns {
        Some(path) => PatternLibrary::from_path(path)
            .with_context(|| format!("loading pattern library at {}", path.display())),
        None => Ok(PatternLibrary::builtin()),
    }
}

fn cmd_classify(cli: &Cli, args: &ClassifyArgs) -> Result<()> {
    let loaded = load(&args.corpus)?;
    let library = library(&args.patterns)?;
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for bundle in &loaded.bundles {
        let seq = &bundle.sequence;
        for job in seq.initially_failed_jobs() {
            let job_ref = flakescope::labeler::job_ref(seq, job);
            let log = bundle.log_for(job).unwrap_or("");
            let result = classify_log(log, &library);
            let category = result.category.map(|c| c.name()).unwrap_or("unmatched");
            *tally.entry(category).or_insert(0) += 1;
            match cli.format {
                Format::Text => {
                    println!("{job_ref}  {category}  {}", result.message.replace('\n', " | "))
                }
                Format::JsonLines => emit(&record(
                    cli,
                    "classification",
                    json!({
                        "job_ref": job_ref,
                        "category": result.category.map(|c| c.name()),
                        "pattern_id": result.pattern_id,
                        "message": result.message,
                    }),
                )),
            }
        }
    }
    if cli.format == Format::Text {
        println!();
        for (category, count) in &tally {
            println!("{category:28} {count}");
        }
    }
    Ok(())
}

fn cmd_label(cli: &Cli, args: &LabelArgs) -> Result<()> {
    let loaded = load(&args.corpus)?;
    let scripts_path = args
        .scripts
        .clone()
        .or_else(|| {
            let default = args.corpus.join(harness::synth::ORACLE_SCRIPTS_DOC);
            default.exists().then_some(default)
        });
    let mut oracle = match &scripts_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading oracle scripts at {}", path.display()))?;
            ScriptedOracle::from_json_str(&text)
                .with_context(|| format!("{} is not a script map", path.display()))?
        }
        None => ScriptedOracle::from_script(&BTreeMap::<String, Vec<String>>::new())?,
    };
    let sequences: Vec<_> = loaded.bundles.iter().map(|b| b.sequence.clone()).collect();
    let report = label_corpus(&sequences, &mut oracle, args.max_reruns);

    if let Some(out) = &args.out {
        let labels: BTreeMap<String, u8> = report
            .labels
            .iter()
            .map(|l| (l.job_ref.clone(), u8::from(l.label == LabelKind::Flaky)))
            .collect();
        let doc = harness::synth::LabelsDoc {
            schema_version: SCHEMA_VERSION,
            seed: cli.seed,
            labels,
        };
        std::fs::write(out, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing labels to {}", out.display()))?;
    }

    match cli.format {
        Format::Text => {
            for label in &report.labels {
                println!(
                    "{}  {}  {:?}  reruns={}",
                    label.job_ref,
                    match label.label {
                        LabelKind::Flaky => "flaky",
                        LabelKind::NonFlaky => "not-flaky",
                    },
                    label.evidence,
                    label.reruns_consumed
                );
            }
            println!();
            println!("from attempt history: {}", report.summary.developer_history);
            println!("from automated rerun: {}", report.summary.automated);
            println!("budget exhausted:     {}", report.summary.exhausted);
            for d in &report.diagnostics {
                println!("note: {}: {}", d.context, d.message);
            }
        }
        Format::JsonLines => {
            for label in &report.labels {
                emit(&record(cli, "label", serde_json::to_value(label)?));
            }
            emit(&record(cli, "summary", serde_json::to_value(report.summary)?));
        }
    }
    Ok(())
}

fn cmd_features(cli: &Cli, args: &CorpusArgs) -> Result<()> {
    let loaded = load(&args.corpus)?;
    let library = PatternLibrary::builtin();
    let histories = assemble_history(&loaded.bundles);
    let names = flakescope::features::StructuredFeatureVector::feature_names();
    let mut jobs = 0usize;
    for bundle in &loaded.bundles {
        let seq = &bundle.sequence;
        let logs = bundle.first_attempt_logs();
        let extracted = flakescope::features::extract_failed_jobs(
            seq,
            &logs,
            &bundle.changes,
            &histories[seq.repo()],
            &library,
        );
        for (job, jf) in seq.initially_failed_jobs().iter().zip(&extracted) {
            jobs += 1;
            let job_ref = flakescope::labeler::job_ref(seq, job);
            let values = jf.vector.encode();
            match cli.format {
                Format::Text => {
                    println!("{job_ref}: {} features, {} notes", values.len(), jf.diagnostics.len())
                }
                Format::JsonLines => {
                    let features: BTreeMap<&str, f64> = names
                        .iter()
                        .map(String::as_str)
                        .zip(values.iter().copied())
                        .collect();
                    emit(&record(
                        cli,
                        "features",
                        json!({
                            "job_ref": job_ref,
                            "features": features,
                            "diagnostics": jf.diagnostics,
                        }),
                    ));
                }
            }
        }
    }
    if cli.format == Format::Text {
        println!();
        println!("{jobs} failed jobs, {} features each", names.len());
    }
    Ok(())
}

/// On-disk model document: the detector plus the provenance the run
/// invariants require.
#[derive(Serialize, serde::Deserialize)]
struct ModelDoc {
    schema_version: u32,
    seed: u64,
    model: DetectorModel,
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let loaded = load(&args.corpus)?;
    let labels = load_labels(&args.corpus, &args.labels)?;
    let library = PatternLibrary::builtin();
    let (rows, diagnostics) = assemble_rows(&loaded.bundles, &labels.labels, &library);
    let config = DetectorConfig { k: args.k, f: args.f, alpha: args.alpha, beta: args.beta };
    let model = train_detector(&rows, config, args.model, cli.seed)?;
    let doc = ModelDoc { schema_version: SCHEMA_VERSION, seed: cli.seed, model };
    std::fs::write(&args.out, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing model to {}", args.out.display()))?;

    let positives = rows.iter().filter(|r| r.label == 1).count();
    match cli.format {
        Format::Text => {
            println!(
                "trained {} detector on {} rows ({} flaky) -> {}",
                args.model.name(),
                rows.len(),
                positives,
                args.out.display()
            );
            for d in &diagnostics {
                println!("note: {}: {}", d.context, d.message);
            }
        }
        Format::JsonLines => emit(&record(
            cli,
            "train",
            json!({
                "model": args.model.name(),
                "rows": rows.len(),
                "flaky_rows": positives,
                "out": args.out.display().to_string(),
                "config": config,
            }),
        )),
    }
    Ok(())
}

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.model)
        .with_context(|| format!("reading model at {}", args.model.display()))?;
    let doc: ModelDoc = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a model document", args.model.display()))?;
    doc.model.validate()?;

    let loaded = load(&args.corpus)?;
    let library = PatternLibrary::builtin();
    let histories = assemble_history(&loaded.bundles);
    let mut scored = 0usize;
    for bundle in &loaded.bundles {
        let seq = &bundle.sequence;
        let logs = bundle.first_attempt_logs();
        let extracted = flakescope::features::extract_failed_jobs(
            seq,
            &logs,
            &bundle.changes,
            &histories[seq.repo()],
            &library,
        );
        for (job, jf) in seq.initially_failed_jobs().iter().zip(&extracted) {
            let job_ref = flakescope::labeler::job_ref(seq, job);
            if args.job.as_deref().is_some_and(|wanted| wanted != job_ref) {
                continue;
            }
            let log = logs.get(&job.job_id).map(String::as_str).unwrap_or("");
            let log_doc = LogDocument::build(job_ref.clone(), log);
            let prediction = detector::predict(&doc.model, &log_doc, &jf.vector)?;
            scored += 1;
            match cli.format {
                Format::Text => println!(
                    "{job_ref}  p_log={:.4}  p_struct={:.4}  p_final={:.4}  {:?}",
                    prediction.p_log, prediction.p_struct, prediction.p_final, prediction.label
                ),
                Format::JsonLines => {
                    emit(&record(cli, "prediction", serde_json::to_value(&prediction)?))
                }
            }
        }
    }
    if scored == 0 {
        bail!(match &args.job {
            Some(job) => format!("no failed first-attempt job matches {job:?}"),
            None => "the corpus has no failed first-attempt jobs to score".to_string(),
        });
    }
    Ok(())
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let loaded = load(&args.corpus)?;
    let labels = load_labels(&args.corpus, &args.labels)?;
    let grid = match args.grid.as_str() {
        "full" => GridSpec::full(),
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading grid spec at {path}"))?;
            serde_json::from_str(&text)
                .with_context(|| format!("{path} is not a grid spec"))?
        }
    };
    let opts = EvaluateOptions {
        grid,
        kinds: args.models.clone(),
        include_baseline: args.baseline,
        seed: cli.seed,
    };
    let library = PatternLibrary::builtin();
    let report = evaluate_corpus(&loaded.bundles, &labels.labels, &library, &opts)?;
    match cli.format {
        Format::Text => print!("{}", harness::render_text(&report)),
        Format::JsonLines => emit(&serde_json::to_value(&report)?),
    }
    Ok(())
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_jobs: args.n,
        flaky_ratio: args.flaky_ratio,
        log_signal: args.log_signal,
        struct_signal: args.struct_signal,
        repo: args.repo.clone(),
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, cli.seed)?;
    harness::write_synth_corpus(&corpus, &args.out)?;
    let flaky = corpus.labels.values().filter(|&&l| l == 1).count();
    match cli.format {
        Format::Text => println!(
            "wrote {} builds ({} flaky) to {}",
            corpus.bundles.len(),
            flaky,
            args.out.display()
        ),
        Format::JsonLines => emit(&record(
            cli,
            "synth",
            json!({
                "builds": corpus.bundles.len(),
                "flaky": flaky,
                "out": args.out.display().to_string(),
            }),
        )),
    }
    Ok(())
}
