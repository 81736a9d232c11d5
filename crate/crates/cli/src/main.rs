//! `idsel` command-line front end.
//!
//! Exit codes: 0 on success, 1 on data or validation errors, 2 on usage errors.
//! Structured output goes to stdout (JSON or CSV); diagnostics go to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use idsel::bench::{run_bench, BenchParams, CSV_HEADER};
use idsel::{
    compute_report, load_case, read_tensor, resolve_importance, select, synth_case, write_case,
    Case, Error, ImportanceKind, ImportanceSource, Method, ScoreVector, SelectionConfig,
    StepRecord, SynthSpec, DEFAULT_GAMMA,
};

#[derive(Debug, Parser)]
#[command(
    name = "idsel",
    version,
    about = "Importance-diversity visual token selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select tokens from a case and write the result as JSON.
    Select(SelectArgs),
    /// Score a selection result against its case.
    Metrics(MetricsArgs),
    /// Generate a clustered synthetic case.
    Synth(SynthArgs),
    /// Time id selection on synthetic cases and print CSV.
    Bench(BenchArgs),
}

#[derive(Debug, clap::Args)]
struct SelectArgs {
    /// Case manifest (JSON).
    #[arg(long)]
    case: PathBuf,
    /// Number of tokens to keep.
    #[arg(long, value_parser = positive)]
    budget: usize,
    /// id, topk, maxmin or random.
    #[arg(long, default_value = "id")]
    method: Method,
    /// cls, cross, unified or external.
    #[arg(long, default_value = "cls")]
    importance: ImportanceKind,
    /// Score vector (IDSL, rank 1) for `--importance external`.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Seed for `--method random`.
    #[arg(long)]
    seed: Option<u64>,
    /// Record one entry per id selection step.
    #[arg(long)]
    trace: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct MetricsArgs {
    #[arg(long)]
    case: PathBuf,
    /// Selection result written by `idsel select`.
    #[arg(long)]
    selection: PathBuf,
    /// Score vector for results produced with `--importance external`.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, value_parser = positive)]
    n: usize,
    #[arg(long, value_parser = positive)]
    dim: usize,
    #[arg(long, value_parser = positive)]
    clusters: usize,
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[arg(long, default_value_t = 0.1)]
    score_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    /// Comma-separated token counts.
    #[arg(long, required = true, value_delimiter = ',', value_parser = positive)]
    n_list: Vec<usize>,
    /// Comma-separated budgets.
    #[arg(long, required = true, value_delimiter = ',', value_parser = positive)]
    t_list: Vec<usize>,
    #[arg(long, default_value_t = 1024, value_parser = positive)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

/// Settings echoed into the selection result so `metrics` can rebuild the
/// importance that drove it.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    method: Method,
    budget: usize,
    gamma: f64,
    importance: ImportanceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<PathBuf>,
    clamp_negative_source: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionFile {
    picked: Vec<usize>,
    retained: Vec<usize>,
    config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<StepRecord>>,
}

/// Data errors and their message; usage errors never reach here.
#[derive(Debug)]
struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.to_string())
    }
}

fn read_scores(path: &Path) -> Result<ScoreVector, Error> {
    ScoreVector::try_from(read_tensor(path)?)
}

fn source_for(kind: ImportanceKind, scores: Option<&Path>) -> Result<ImportanceSource, Failure> {
    Ok(match kind {
        ImportanceKind::Cls => ImportanceSource::Cls,
        ImportanceKind::Cross => ImportanceSource::Cross,
        ImportanceKind::Unified => ImportanceSource::Unified,
        ImportanceKind::External => {
            let path = scores
                .ok_or_else(|| Failure("--importance external needs --scores <file>".into()))?;
            ImportanceSource::External(read_scores(path)?)
        }
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure(format!("cannot write to stdout: {e}")))
        }
    }
}

fn cmd_select(args: SelectArgs) -> Result<(), Failure> {
    let case = load_case(&args.case)?;
    let source = source_for(args.importance, args.scores.as_deref())?;
    let config = SelectionConfig::new(args.budget)
        .with_gamma(args.gamma)
        .with_trace(args.trace);
    if args.trace && args.method != Method::Id {
        eprintln!("warning: --trace only applies to --method id");
    }
    let result = select(&case, &source, &config, args.method, args.seed)?;
    let file = SelectionFile {
        picked: result.picked,
        retained: result.retained,
        config: RunConfig {
            method: args.method,
            budget: config.budget,
            gamma: config.gamma,
            importance: args.importance,
            seed: args.seed,
            scores: args.scores,
            clamp_negative_source: config.clamp_negative_source,
        },
        trace: result.trace,
    };
    let json = serde_json::to_string_pretty(&file).expect("selection serializes");
    emit(&(json + "\n"), args.out.as_deref())
}

fn metrics_scores(case: &Case, config: &RunConfig, scores: Option<&Path>) -> Option<ScoreVector> {
    let path = scores.or(config.scores.as_deref());
    let resolved = source_for(config.importance, path)
        .map_err(|f| f.0)
        .and_then(|s| resolve_importance(case, &s).map_err(|e| e.to_string()));
    match resolved {
        Ok(s) => Some(s),
        Err(msg) => {
            eprintln!(
                "warning: importance `{}` unavailable: {msg}",
                config.importance
            );
            None
        }
    }
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Failure> {
    let case = load_case(&args.case)?;
    let text = fs::read_to_string(&args.selection)
        .map_err(|e| Failure(format!("cannot read {}: {e}", args.selection.display())))?;
    let file: SelectionFile = serde_json::from_str(&text).map_err(|e| {
        Failure(format!(
            "{}: invalid selection result: {e}",
            args.selection.display()
        ))
    })?;
    let scores = metrics_scores(&case, &file.config, args.scores.as_deref());
    let report = compute_report(case.tokens.as_matrix()?, &file.picked, scores.as_ref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    emit(&(json + "\n"), None)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        n_tokens: args.n,
        dim: args.dim,
        n_clusters: args.clusters,
        cluster_spread: args.spread,
        seed: args.seed,
        score_noise: args.score_noise,
    };
    let case = synth_case(&spec)?;
    let manifest = write_case(&case, &args.out_dir)?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let params = BenchParams {
        n_list: args.n_list,
        t_list: args.t_list,
        dim: args.dim,
        gamma: args.gamma,
        reps: args.reps,
        seed: args.seed,
    };
    let rows = run_bench(&params)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    emit(&csv, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
