//! `rbcorr` command-line front end.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rbcorr::experiments::{before_after_report, mean_curve, size_sweep, DEFAULT_ITERATIONS, DEFAULT_SIZE};
use rbcorr::ingest::{assert_class_balanced, load_paths, save_store, RecordStore};
use rbcorr::metrics::eval_all;
use rbcorr::model::{CorrectionTerm, Method, PromptFormat, QuestionType, RecordGroup, RunConfig};
use rbcorr::report::{self, ReportBundle};
use rbcorr::synthetic::{generate, SyntheticSpec};
use rbcorr::transfer::{enumerate_pairs, run_transfer, transfer_heatmap, transfer_summary, Modality, TransferOutcome};
use rbcorr_harvest::{
    harvest_run, load_items, CompletionsClient, EndpointConfig, HarvestOptions, PromptTemplate, RetryPolicy,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 1,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    rbcorr::ingest::IngestError,
    rbcorr::report::ReportError,
    rbcorr::experiments::ExperimentError,
    rbcorr::transfer::TransferError,
    rbcorr::correction::CorrectionError,
    rbcorr::metrics::MetricError,
    rbcorr::model::ValidationError,
    rbcorr::synthetic::SyntheticError,
    rbcorr_harvest::HarvestError,
    rbcorr_harvest::FetchError,
    rbcorr_harvest::PromptError,
    serde_json::Error
);

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "rbcorr",
    version,
    about = "Measure and correct response bias in LM log-probability evaluations"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat key = value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate record files and print per-condition counts.
    Ingest(IngestArgs),
    /// Uncorrected metrics per condition.
    Eval(EvalArgs),
    /// Before/after report for correction methods.
    Correct(CorrectArgs),
    /// Corrected accuracy across calibration set sizes.
    Sweep(SweepArgs),
    /// Apply correction terms across conditions.
    Transfer(TransferArgs),
    /// Generate a synthetic biased record group.
    Synth(SynthArgs),
    /// Collect option log-probabilities from a completions endpoint.
    Harvest(HarvestArgs),
    /// Write the full report bundle and plot-ready CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Record files (JSON lines), comma-separated or repeated.
    #[arg(long, short, required = true, value_delimiter = ',', value_name = "PATH")]
    pub input: Vec<PathBuf>,
    /// Only use the condition with this key (model/dataset/format).
    #[arg(long, value_name = "KEY")]
    pub run: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Write the merged, validated records here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Fail when any condition is not class-balanced.
    #[arg(long)]
    pub require_balanced: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Label-distribution CSV.
    #[arg(long)]
    pub distribution_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Methods to run, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "rbcorr")]
    pub method: Vec<Method>,
    /// Calibration set size.
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    pub size: usize,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Method-comparison table CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "rbcorr")]
    pub method: Method,
    #[arg(long, value_delimiter = ',', default_value = "20,50,100,500,1000")]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Per-iteration CSV.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Mean curve across conditions CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Full sweep results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// cross-dataset, cross-model, cross-prompt or all.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub modality: Vec<String>,
    #[arg(long, default_value = "rbcorr")]
    pub method: Method,
    #[arg(long, default_value_t = rbcorr::transfer::DEFAULT_TRANSFER_SIZE)]
    pub size: usize,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Per-pair outcomes CSV.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Long-format heatmap CSV over all conditions.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of options: 2, 3 or 4.
    #[arg(long, default_value_t = 2)]
    pub arity: usize,
    #[arg(long, default_value_t = 500)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Per-option bias in canonical order, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bias: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic")]
    pub model: String,
    #[arg(long, default_value = "synthetic")]
    pub model_family: String,
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    #[arg(long)]
    pub format: Option<PromptFormat>,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Unbiased scores for oracle checks, as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarvestArgs {
    /// Items as JSON lines with item_id, text and gold_label.
    #[arg(long)]
    pub items: PathBuf,
    /// Server root URL.
    #[arg(long)]
    pub endpoint: String,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub model_family: Option<String>,
    /// Dataset id; also selects the prompt template.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value = "fewshot")]
    pub format: PromptFormat,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    /// Environment variable holding a bearer token.
    #[arg(long)]
    pub auth_env: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub top_logprobs: usize,
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    /// Do not append a response line after the item.
    #[arg(long)]
    pub no_response_cue: bool,
    /// Skip the content-free probe records.
    #[arg(long)]
    pub no_probes: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short = 'd')]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "cc,bc,rbcorr")]
    pub method: Vec<Method>,
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    pub size: usize,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Also run a size sweep (RBCorr) over these sizes.
    #[arg(long, value_delimiter = ',')]
    pub sweep_sizes: Vec<usize>,
    /// Also run transfer for these modalities.
    #[arg(long, value_delimiter = ',')]
    pub transfer: Vec<String>,
    #[arg(long, default_value_t = rbcorr::transfer::DEFAULT_TRANSFER_SIZE)]
    pub transfer_size: usize,
    /// Generation time in Unix seconds; defaults to SOURCE_DATE_EPOCH, then the clock.
    #[arg(long)]
    pub timestamp: Option<u64>,
}

/// Writes via a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents)
        .and_then(|_| tmp.flush())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn load(input: &InputArgs) -> Result<RecordStore> {
    let store = load_paths(&input.input)?;
    match &input.run {
        None => Ok(store),
        Some(key) => {
            let records: Vec<_> = store
                .into_records()
                .into_iter()
                .filter(|r| &r.run.key() == key)
                .collect();
            if records.is_empty() {
                return Err(CliError::Data(format!("no records for condition '{key}'")));
            }
            Ok(RecordStore::from_records(records)?)
        }
    }
}

fn parse_modalities(raw: &[String]) -> Result<Vec<Modality>> {
    let mut out = Vec::new();
    for m in raw {
        if m.eq_ignore_ascii_case("all") {
            out.extend(Modality::ALL);
        } else {
            out.push(m.parse::<Modality>().map_err(CliError::Usage)?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Serialize)]
struct GroupSummary {
    run: String,
    question_type: QuestionType,
    items: usize,
    content_free_probes: usize,
    class_counts: BTreeMap<String, usize>,
    balanced: bool,
}

fn group_summary(g: &RecordGroup) -> GroupSummary {
    GroupSummary {
        run: g.run().key(),
        question_type: g.run().question_type,
        items: g.len(),
        content_free_probes: g.probes().len(),
        class_counts: g.space().labels().iter().cloned().zip(g.class_counts()).collect(),
        balanced: assert_class_balanced(g).is_ok(),
    }
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let store = load(&a.input)?;
    let summaries: Vec<GroupSummary> = store.groups().iter().map(group_summary).collect();
    if a.require_balanced {
        for g in store.groups() {
            assert_class_balanced(g).map_err(|r| CliError::Data(format!("{}: {r}", g.run().key())))?;
        }
    }
    if let Some(out) = &a.output {
        let mut buf = Vec::new();
        save_store(&store, &mut buf)?;
        write_atomic(out, &buf)?;
    }
    emit(None, &pretty(&summaries)?)
}

#[derive(Serialize)]
struct EvalRow {
    run: RunConfig,
    baseline: rbcorr::model::EvalResult,
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let store = load(&a.input)?;
    let mut rows = Vec::new();
    for g in store.groups() {
        if assert_class_balanced(g).is_err() {
            log::warn!(
                "{}: classes are unbalanced; TVD's uniform reference assumes balance",
                g.run().key()
            );
        }
        rows.push(EvalRow {
            run: g.run().clone(),
            baseline: eval_all(g, &CorrectionTerm::identity(g.space()))?,
        });
    }
    if let Some(p) = &a.distribution_csv {
        let dist = report::label_distribution_rows(&store)?;
        write_atomic(p, report::label_distribution_csv(&dist)?.as_bytes())?;
    }
    emit(a.output.as_deref(), &pretty(&rows)?)
}

fn cmd_correct(a: &CorrectArgs) -> Result<()> {
    let store = load(&a.input)?;
    let mut reports = Vec::new();
    for g in store.groups() {
        for &m in &a.method {
            reports.push(before_after_report(g, m, a.size, a.exp.iters, a.exp.seed)?);
        }
    }
    if let Some(p) = &a.csv {
        let rows = report::comparison_rows(&reports);
        write_atomic(p, report::method_comparison_csv(&rows)?.as_bytes())?;
    }
    emit(a.output.as_deref(), &pretty(&reports)?)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let store = load(&a.input)?;
    let mut per_condition = Vec::new();
    for g in store.groups() {
        let mut results = Vec::new();
        for entry in size_sweep(g, a.method, &a.sizes, a.exp.iters, a.exp.seed) {
            match entry.result {
                Ok(r) => results.push(r),
                Err(e) => log::warn!("{} size {}: skipped ({e})", g.run().key(), entry.size),
            }
        }
        per_condition.push(results);
    }
    let flat: Vec<_> = per_condition.iter().flatten().cloned().collect();
    if flat.is_empty() {
        return Err(CliError::Data("no sweep size could be run on any condition".into()));
    }
    if let Some(p) = &a.curve {
        write_atomic(p, report::curve_csv(&mean_curve(&per_condition))?.as_bytes())?;
    }
    if let Some(p) = &a.json {
        write_atomic(p, pretty(&flat)?.as_bytes())?;
    }
    emit(a.output.as_deref(), &report::sweep_csv(&flat)?)
}

fn transfer_outcomes(
    store: &RecordStore,
    modalities: &[Modality],
    method: Method,
    size: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<TransferOutcome>> {
    let runs = store.runs();
    let mut outcomes = Vec::new();
    for &m in modalities {
        for pair in enumerate_pairs(&runs, m) {
            let (Some(s), Some(t)) = (store.group(&pair.source), store.group(&pair.target)) else {
                continue;
            };
            match run_transfer(&pair, s, t, method, size, iters, seed) {
                Ok(o) => outcomes.push(o),
                Err(e) => log::warn!("{} -> {}: skipped ({e})", pair.source.key(), pair.target.key()),
            }
        }
    }
    Ok(outcomes)
}

fn cmd_transfer(a: &TransferArgs) -> Result<()> {
    let store = load(&a.input)?;
    let modalities = parse_modalities(&a.modality)?;
    let outcomes = transfer_outcomes(&store, &modalities, a.method, a.size, a.exp.iters, a.exp.seed)?;
    let summary = transfer_summary(&outcomes);
    if let Some(p) = &a.summary {
        write_atomic(p, report::transfer_summary_csv(&summary)?.as_bytes())?;
    }
    if let Some(p) = &a.heatmap {
        let map = transfer_heatmap(&store.runs(), &outcomes)?;
        write_atomic(p, report::heatmap_csv(&map)?.as_bytes())?;
    }
    if let Some(p) = &a.json {
        write_atomic(p, pretty(&(&outcomes, &summary))?.as_bytes())?;
    }
    emit(a.output.as_deref(), &report::transfer_outcomes_csv(&outcomes)?)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let qt = QuestionType::from_arity(a.arity)
        .ok_or_else(|| CliError::Usage(format!("arity must be 2, 3 or 4, got {}", a.arity)))?;
    let bias = if a.bias.is_empty() {
        vec![0.0; a.arity]
    } else {
        a.bias.clone()
    };
    let mut spec = SyntheticSpec::new(qt, a.n_per_class, a.margin, a.noise, bias, a.seed);
    spec.run.model_id = a.model.clone();
    spec.run.model_family = a.model_family.clone();
    spec.run.dataset_id = a.dataset.clone();
    if let Some(f) = a.format {
        spec.run.prompt_format = f;
    }
    let (records, truth) = generate(&spec)?;
    let mut buf = Vec::new();
    rbcorr::ingest::write_records(&records, &mut buf)?;
    write_atomic(&a.output, &buf)?;
    if let Some(p) = &a.truth {
        write_atomic(p, pretty(&truth)?.as_bytes())?;
    }
    Ok(())
}

fn cmd_harvest(a: &HarvestArgs) -> Result<()> {
    let template = PromptTemplate::for_dataset(&a.dataset, a.format)?.with_response_cue(!a.no_response_cue);
    let run = RunConfig::new(
        a.model.clone(),
        a.model_family.clone().unwrap_or_else(|| a.model.clone()),
        a.dataset.clone(),
        a.format,
        template.question_type(),
    );
    let timeout = Duration::try_from_secs_f64(a.timeout).map_err(|e| CliError::Usage(format!("--timeout: {e}")))?;
    let mut cfg = EndpointConfig::new(a.endpoint.clone(), a.model.clone());
    cfg.timeout = timeout;
    cfg.max_concurrency = a.concurrency;
    cfg.auth_env = a.auth_env.clone();
    cfg.top_logprobs = a.top_logprobs;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let client = CompletionsClient::new(cfg)?;
    let items = load_items(&a.items)?;
    let options = HarvestOptions {
        max_concurrency: a.concurrency,
        retry: RetryPolicy {
            max_retries: a.retries,
            base_delay: Duration::from_millis(a.backoff_ms),
            ..RetryPolicy::default()
        },
        content_free_probes: !a.no_probes,
    };
    let summary = harvest_run(&items, &template, &run, &client, &options, &a.output)?;
    emit(None, &pretty(&summary)?)?;
    if summary.is_complete() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{} item(s) failed; rerun to resume: {}",
            summary.failed.len(),
            summary
                .failed
                .iter()
                .map(|f| f.item_id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }
}

fn report_timestamp(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| {
            std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|s| s.trim().parse().ok())
        })
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

/// Builds the bundle for `store`. Every CSV is derived from the bundle.
pub fn build_bundle(store: &RecordStore, a: &ReportArgs) -> Result<ReportBundle> {
    let mut bundle = ReportBundle::new(report_timestamp(a.timestamp));
    bundle.note_seed(a.exp.seed);
    for g in store.groups() {
        bundle.add_condition(g.run().clone(), eval_all(g, &CorrectionTerm::identity(g.space()))?);
        for &m in &a.method {
            match before_after_report(g, m, a.size, a.exp.iters, a.exp.seed) {
                Ok(r) => bundle.add_method(r),
                Err(e) => log::warn!("{} {m}: skipped ({e})", g.run().key()),
            }
        }
        if !a.sweep_sizes.is_empty() {
            for entry in size_sweep(g, Method::Rbcorr, &a.sweep_sizes, a.exp.iters, a.exp.seed) {
                match entry.result {
                    Ok(r) => {
                        bundle.add_sweep(r);
                    }
                    Err(e) => log::warn!("{} size {}: skipped ({e})", g.run().key(), entry.size),
                }
            }
        }
    }
    if !a.transfer.is_empty() {
        let modalities = parse_modalities(&a.transfer)?;
        let outcomes = transfer_outcomes(
            store,
            &modalities,
            Method::Rbcorr,
            a.transfer_size,
            a.exp.iters,
            a.exp.seed,
        )?;
        let summary = transfer_summary(&outcomes);
        bundle.set_transfer(outcomes, summary);
    }
    Ok(bundle)
}

/// Writes the bundle JSON and the CSV tables derived from it.
pub fn write_bundle(store: &RecordStore, bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };
    put("bundle.json", bundle.to_json()?)?;
    put(
        "label_distribution.csv",
        report::label_distribution_csv(&report::label_distribution_rows(store)?)?,
    )?;
    put(
        "method_comparison.csv",
        report::method_comparison_csv(&bundle.comparison_rows())?,
    )?;
    let sweeps: Vec<_> = bundle
        .conditions
        .iter()
        .flat_map(|c| c.sweeps.iter().cloned())
        .collect();
    if !sweeps.is_empty() {
        put("sweep.csv", report::sweep_csv(&sweeps)?)?;
        let per_condition: Vec<Vec<_>> = bundle.conditions.iter().map(|c| c.sweeps.clone()).collect();
        put("sweep_curve.csv", report::curve_csv(&mean_curve(&per_condition))?)?;
    }
    if let Some(t) = &bundle.transfer {
        put("transfer_outcomes.csv", report::transfer_outcomes_csv(&t.outcomes)?)?;
        put("transfer_summary.csv", report::transfer_summary_csv(&t.summary)?)?;
        let map = transfer_heatmap(&store.runs(), &t.outcomes)?;
        put("transfer_heatmap.csv", report::heatmap_csv(&map)?)?;
    }
    Ok(written)
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let store = load(&a.input)?;
    let bundle = build_bundle(&store, a)?;
    for p in write_bundle(&store, &bundle, &a.out_dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Correct(a) => cmd_correct(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Harvest(a) => cmd_harvest(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cmd = Cli::command();
    let argv = match config::expand_config(&cmd, argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}\n\n{}", cmd.clone().render_usage());
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
