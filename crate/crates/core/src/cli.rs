//! The `aers` command line. [`run`] returns the process exit code: 0 on
//! success, 1 on runtime failure, 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::ingest::{discover_quarters, normalize_drug_name, SchemaConfig};
use crate::model::{export_snapshot, import_snapshot, CountStore, Weighting};
use crate::pipeline::{ingest_directory, IngestOptions};
use crate::quarter::{Quarter, QuarterRange};
use crate::stats::{corpus_summary, top_n, write_measures_csv, RankMetric};
use crate::surveil::{
    boxplot_summary_with, detect_outbreaks, population_trend, write_alerts_csv, write_boxplot_csv, write_outliers_csv,
    write_trend_csv, DetectConfig, DEFAULT_MAX_OUTLIERS, DEFAULT_MIN_ACTIVE,
};
use crate::synth::{generate_corpus, inject_spike, Corpus, Sampling, SynthConfig};
use crate::{svg, Error};

#[derive(Debug, Parser)]
#[command(name = "aers", version, about = "Drug-name incidence counts and outbreak surveillance for AERS extracts")]
struct Cli {
    /// More diagnostics on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a directory of quarterly tables into a count snapshot.
    Ingest(IngestArgs),
    /// Corpus-wide descriptive statistics of per-drug totals.
    Summarize(ReportArgs),
    /// Highest-ranked drugs with their quarterly measures.
    Top(TopArgs),
    /// One drug's count in every covered quarter.
    Series(SeriesArgs),
    /// Per-quarter subjects, events and their shares.
    Trend(PlotArgs),
    /// Per-quarter five-number summaries of drug counts.
    Boxplot(BoxplotArgs),
    /// Flag quarters whose count departs from the drug's own history.
    Detect(DetectArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Multiply one drug's mentions in one quarter of a synthetic corpus.
    Inject(InjectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Render {
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingMode {
    Cohort,
    Independent,
}

#[derive(Debug, Args)]
struct RangeArgs {
    /// First quarter, YYYYQn.
    #[arg(long)]
    from: Option<Quarter>,
    /// Last quarter, YYYYQn.
    #[arg(long)]
    to: Option<Quarter>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Snapshot CSV (its .meta.json must sit beside it).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    range: RangeArgs,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Directory holding DEMOyyQq.TXT, DRUGyyQq.TXT, INDIyyQq.TXT, REACyyQq.TXT.
    #[arg(long = "in")]
    input: PathBuf,
    /// Snapshot CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    range: RangeArgs,
    #[arg(long, default_value = "additive")]
    weighting: Weighting,
}

#[derive(Debug, Args)]
struct TopArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// QSUM, QMAX or QAVERAGE.
    #[arg(long, default_value = "QSUM")]
    metric: RankMetric,
}

#[derive(Debug, Args)]
struct SeriesArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long)]
    drug: String,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[command(flatten)]
    report: ReportArgs,
    /// Also write a static SVG (beside --out, or to stdout instead of data).
    #[arg(long, value_enum)]
    render: Option<Render>,
}

#[derive(Debug, Args)]
struct BoxplotArgs {
    #[command(flatten)]
    plot: PlotArgs,
    /// Single quarter; every quarter with counts when omitted.
    #[arg(long)]
    quarter: Option<Quarter>,
    #[arg(long, default_value_t = DEFAULT_MAX_OUTLIERS)]
    max_outliers: usize,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value_t = 3.0)]
    theta: f64,
    #[arg(long, default_value_t = 1000)]
    min_count: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_ACTIVE)]
    min_active: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory to create or overwrite.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    range: RangeArgs,
    #[arg(long, default_value_t = 300)]
    subjects: usize,
    #[arg(long, default_value_t = 500)]
    vocabulary: usize,
    #[arg(long, default_value_t = 1.1)]
    zipf: f64,
    #[arg(long, value_enum, default_value_t = SamplingMode::Cohort)]
    sampling: SamplingMode,
    /// Largest fraction of a drug's cohort mentions dropped per quarter.
    #[arg(long, default_value_t = 0.2)]
    jitter: f64,
    /// Write drug names with varied case and spacing.
    #[arg(long)]
    messy: bool,
    /// Use only DRUGnnnnnn tokens, no real drug names.
    #[arg(long)]
    synthetic_names: bool,
}

#[derive(Debug, Args)]
struct InjectArgs {
    /// Corpus directory written by `synth`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the modified corpus here instead of in place.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    drug: String,
    #[arg(long)]
    quarter: Quarter,
    #[arg(long, default_value_t = 100)]
    multiplier: u32,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

macro_rules! lib_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Lib(e.into())
            }
        }
    )*};
}

lib_error!(crate::IngestError, crate::ModelError, crate::StatsError, crate::SurveilError, crate::SynthError);

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(command: Command) -> CliResult {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Summarize(a) => summarize(a),
        Command::Top(a) => top(a),
        Command::Series(a) => series(a),
        Command::Trend(a) => trend(a),
        Command::Boxplot(a) => boxplot(a),
        Command::Detect(a) => detect(a),
        Command::Synth(a) => synth(a),
        Command::Inject(a) => inject(a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn require_exists(path: &Path) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(io_err(path)(std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")))
    }
}

fn require_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => require_exists(p),
        _ => Ok(()),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Writes to `out`, or to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(path) => write_file(path, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialize");
    v.push(b'\n');
    v
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Other(format!("csv: {e}")))?;
    Ok(buf)
}

fn resolve_range(range: &RangeArgs, first: Option<Quarter>, last: Option<Quarter>) -> CliResult<Option<QuarterRange>> {
    if range.from.is_none() && range.to.is_none() {
        return Ok(None);
    }
    let (Some(from), Some(to)) = (range.from.or(first), range.to.or(last)) else {
        return Ok(None);
    };
    QuarterRange::new(from, to).map(Some).map_err(|e| CliError::Usage(e.to_string()))
}

/// Validates paths, loads the snapshot and applies `--from/--to`.
fn load_store(args: &ReportArgs) -> CliResult<CountStore> {
    require_exists(&args.input)?;
    if let Some(out) = &args.out {
        require_parent(out)?;
    }
    let store = import_snapshot(&args.input)?;
    let quarters: Vec<Quarter> = store.quarters().collect();
    match resolve_range(&args.range, quarters.first().copied(), quarters.last().copied())? {
        Some(range) => Ok(store.restricted(range)),
        None => Ok(store),
    }
}

fn ingest(a: IngestArgs) -> CliResult {
    require_exists(&a.input)?;
    require_parent(&a.out)?;
    let schema = SchemaConfig::from_env().map_err(crate::IngestError::from)?;
    let range = if a.range.from.is_some() || a.range.to.is_some() {
        let found: Vec<Quarter> = discover_quarters(&a.input)?.iter().map(|f| f.quarter).collect();
        resolve_range(&a.range, found.first().copied(), found.last().copied())?
    } else {
        None
    };
    let outcome = ingest_directory(&a.input, &IngestOptions { range, weighting: a.weighting, schema })?;
    let meta = export_snapshot(&outcome.store, &a.out)?;
    let rejects_path = sibling(&a.out, ".rejects.csv");
    write_file(&rejects_path, &csv_bytes(|b| outcome.rejects.write_csv(b))?)?;
    let store = &outcome.store;
    eprintln!(
        "{} quarters, {} subjects, {} drug names, {} events, {} rejected lines",
        store.subjects_per_quarter().len(),
        store.total_subjects(),
        store.drug_count(),
        store.total_events(),
        outcome.rejects.len()
    );
    info!("wrote {}, {} and {}", a.out.display(), meta.display(), rejects_path.display());
    Ok(())
}

fn summarize(a: ReportArgs) -> CliResult {
    let store = load_store(&a)?;
    let summary = corpus_summary(&store)?;
    let bytes = match a.format {
        Format::Csv => csv_bytes(|b| summary.write_csv(b))?,
        Format::Json => to_json(&summary),
    };
    emit(a.out.as_deref(), &bytes)
}

fn top(a: TopArgs) -> CliResult {
    let store = load_store(&a.report)?;
    let rows = top_n(&store, a.n, a.metric);
    let bytes = match a.report.format {
        Format::Csv => csv_bytes(|b| write_measures_csv(&rows, b))?,
        Format::Json => to_json(&rows),
    };
    emit(a.report.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct SeriesPoint {
    quarter: Quarter,
    count: u64,
}

fn series(a: SeriesArgs) -> CliResult {
    let store = load_store(&a.report)?;
    let drug = normalize_drug_name(&a.drug);
    if store.series(&drug).is_none() {
        return Err(CliError::Other(format!("drug `{}` has no counts in the selected quarters", drug.label())));
    }
    let points: Vec<SeriesPoint> =
        store.quarters().map(|quarter| SeriesPoint { quarter, count: store.count(&drug, quarter) }).collect();
    let bytes = match a.report.format {
        Format::Csv => csv_bytes(|b| {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(b);
            w.write_record(["drug_name", "year", "quarter", "count"])?;
            for p in &points {
                w.write_record([
                    drug.as_str(),
                    &p.quarter.year().to_string(),
                    &p.quarter.q().to_string(),
                    &p.count.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?,
        Format::Json => to_json(&points),
    };
    emit(a.report.out.as_deref(), &bytes)
}

/// Data to `--out` (or stdout); with `--render svg` the SVG goes beside
/// `--out`, or replaces the data on stdout.
fn emit_plot(args: &PlotArgs, data: &[u8], svg: impl FnOnce() -> String) -> CliResult {
    match (args.render, args.report.out.as_deref()) {
        (None, out) => emit(out, data),
        (Some(Render::Svg), None) => emit(None, svg().as_bytes()),
        (Some(Render::Svg), Some(out)) => {
            emit(Some(out), data)?;
            write_file(&out.with_extension("svg"), svg().as_bytes())
        }
    }
}

fn trend(a: PlotArgs) -> CliResult {
    let store = load_store(&a.report)?;
    let rows = population_trend(&store);
    let data = match a.report.format {
        Format::Csv => csv_bytes(|b| write_trend_csv(&rows, true, b))?,
        Format::Json => to_json(&rows),
    };
    emit_plot(&a, &data, || svg::render_trend(&rows))
}

fn boxplot(a: BoxplotArgs) -> CliResult {
    let store = load_store(&a.plot.report)?;
    let quarters: Vec<Quarter> = match a.quarter {
        Some(q) => vec![q],
        None => store.quarters().filter(|q| !store.quarter_counts(*q).is_empty()).collect(),
    };
    let rows =
        quarters.into_iter().map(|q| boxplot_summary_with(&store, q, a.max_outliers)).collect::<Result<Vec<_>, _>>()?;
    let data = match a.plot.report.format {
        Format::Csv => csv_bytes(|b| write_boxplot_csv(&rows, b))?,
        Format::Json => to_json(&rows),
    };
    if let (Some(out), Format::Csv) = (&a.plot.report.out, a.plot.report.format) {
        write_file(&sibling(out, ".outliers.csv"), &csv_bytes(|b| write_outliers_csv(&rows, b))?)?;
    }
    emit_plot(&a.plot, &data, || svg::render_boxplots(&rows))
}

fn detect(a: DetectArgs) -> CliResult {
    let config = DetectConfig { theta: a.theta, min_count: a.min_count, min_active: a.min_active };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let store = load_store(&a.report)?;
    let alerts = detect_outbreaks(&store, &config)?;
    eprintln!("{} alerts", alerts.len());
    let bytes = match a.report.format {
        Format::Csv => csv_bytes(|b| write_alerts_csv(&alerts, b))?,
        Format::Json => to_json(&alerts),
    };
    emit(a.report.out.as_deref(), &bytes)
}

fn synth(a: SynthArgs) -> CliResult {
    require_parent(&a.out)?;
    let defaults = SynthConfig::default();
    let first = defaults.quarters.first().copied();
    let last = defaults.quarters.last().copied();
    let quarters = match resolve_range(&a.range, first, last)? {
        Some(r) => r.iter().collect(),
        None => defaults.quarters.clone(),
    };
    let config = SynthConfig {
        quarters,
        subjects_per_quarter: a.subjects,
        vocabulary: a.vocabulary,
        zipf_exponent: a.zipf,
        seed: a.seed,
        sampling: match a.sampling {
            SamplingMode::Cohort => Sampling::Cohort { jitter: a.jitter },
            SamplingMode::Independent => Sampling::Independent,
        },
        real_names: !a.synthetic_names,
        messy_names: a.messy,
        ..defaults
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let corpus = generate_corpus(&config)?;
    corpus.write_to(&a.out)?;
    eprintln!(
        "{} quarters x {} subjects written to {}",
        corpus.config.quarters.len(),
        corpus.config.subjects_per_quarter,
        a.out.display()
    );
    Ok(())
}

fn inject(a: InjectArgs) -> CliResult {
    require_exists(&a.input)?;
    let mut corpus = Corpus::read_from(&a.input)?;
    let drug = normalize_drug_name(&a.drug);
    let added = inject_spike(&mut corpus, &drug, a.quarter, a.multiplier)?;
    let dest = a.out.as_deref().unwrap_or(&a.input);
    corpus.write_to(dest)?;
    eprintln!("added {added} subjects mentioning {} to {}", drug.label(), a.quarter);
    Ok(())
}
