use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use togglebench_core::action::Dialect;
use togglebench_core::builder::DEFAULT_RATIO;
use togglebench_core::matching::{DistanceMetric, MatchConfig};
use togglebench_core::report::ReportFormat;
use togglebench_core::star::HistoryMode;
use togglebench_core::world::DEFAULT_BUDGET;
use tracing_subscriber::EnvFilter;

mod annotate;
mod build;
mod dynamic;
mod eval;
mod output;
mod report;
mod star;

/// Toggle-control benchmark tooling: dataset construction, training-data
/// synthesis and evaluation.
///
/// Logging goes to stderr and is controlled by TOGGLEBENCH_LOG
/// (e.g. `TOGGLEBENCH_LOG=debug`).
#[derive(Debug, Parser)]
#[command(name = "togglebench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand toggle quadruplets into positive/negative samples and split them.
    Build(BuildArgs),
    /// Run the two-annotator agreement pipeline over screen records.
    Annotate(AnnotateArgs),
    /// Synthesize reasoning chains and export training conversations.
    StarSynth(StarArgs),
    /// Score static predictions on state-control samples.
    EvalState(EvalStateArgs),
    /// Score step predictions on agentic episodes.
    EvalAgentic(EvalAgenticArgs),
    /// Run the dynamic task suite against an agent.
    EvalDynamic(EvalDynamicArgs),
    /// Render report files as JSON lines or tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Quadruplet JSONL (output of `annotate`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed for the split and for paraphrase selection.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of screens assigned to the training split.
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    ratio: f64,
    /// Instruction template JSON replacing the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Draw instruction phrasings from the template lists instead of always
    /// using the first entry.
    #[arg(long)]
    paraphrase: bool,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    /// Screen record JSONL.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON array of two annotator scripts; replaces the HTTP annotators
    /// configured by TOGGLEBENCH_ANNOTATOR_{A,B}_{URL,MODEL,API_KEY}.
    #[arg(long, value_name = "FILE")]
    mock_annotators: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long, conflicts_with = "restart")]
    resume: bool,
    /// Discard any existing checkpoint and start over.
    #[arg(long)]
    restart: bool,
    /// Compare features exactly instead of after normalization.
    #[arg(long)]
    strict_feature_match: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Stop after this many new units; rerun with --resume to continue.
    #[arg(long)]
    max_units: Option<usize>,
    /// Directory holding prompt templates replacing the built-in ones.
    #[arg(long, value_name = "DIR")]
    prompts: Option<PathBuf>,
    /// Record units whose annotator calls keep failing as errors instead of
    /// aborting the run.
    #[arg(long)]
    keep_going: bool,
    /// Attempts per annotator call before it counts as failed.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    max_attempts: u32,
    /// Boxes overlapping an earlier box at or above this IoU are merged.
    #[arg(long, default_value_t = togglebench_core::annotation::DEFAULT_IOU_CUTOFF)]
    iou_cutoff: f64,
    /// HTTP timeout per annotator call, in seconds.
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
}

#[derive(Debug, Args)]
struct StarArgs {
    /// Sample JSONL (e.g. train.jsonl from `build`).
    #[arg(long, required_unless_present = "episodes")]
    input: Option<PathBuf>,
    /// Episode JSONL from an agentic dataset.
    #[arg(long)]
    episodes: Option<PathBuf>,
    /// JSONL of toggle-step annotations selecting which episode steps get a
    /// synthesized chain.
    #[arg(long, requires = "episodes")]
    toggle_steps: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Action dialect of the exported targets.
    #[arg(long, default_value = "canonical")]
    dialect: Dialect,
    /// text-chain, screenshot-chain or none.
    #[arg(long, default_value = "text-chain")]
    history_mode: HistoryMode,
    /// Chain template JSON replacing the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Metric {
    Euclidean,
    Chebyshev,
}

impl From<Metric> for DistanceMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Euclidean => DistanceMetric::Euclidean,
            Metric::Chebyshev => DistanceMetric::Chebyshev,
        }
    }
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// Dialect the predictions are written in.
    #[arg(long, default_value = "canonical")]
    dialect: Dialect,
    /// jsonl or table, for stdout; both are written to the output directory.
    #[arg(long, default_value = "table")]
    report_format: ReportFormat,
    /// Score missing predictions as non-matches instead of failing.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "euclidean")]
    distance_metric: Metric,
    /// Label stored in the report (shown by `report`).
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Args)]
struct EvalStateArgs {
    /// Sample JSONL from `build`.
    #[arg(long)]
    samples: PathBuf,
    /// Prediction JSONL: {"sample_id": ..., "prediction": ...} per line.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// `state-control` (0.04), `agentic` (0.14) or a fraction in (0, 1).
    #[arg(long, default_value = "state-control")]
    click_threshold: MatchConfig,
    #[command(flatten)]
    common: MatchArgs,
}

#[derive(Debug, Args)]
struct EvalAgenticArgs {
    /// Ground-truth episode JSONL.
    #[arg(long)]
    episodes: PathBuf,
    /// Prediction JSONL: {"episode_id": ..., "step_id": ..., "prediction": ...}.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// `state-control` (0.04), `agentic` (0.14) or a fraction in (0, 1).
    #[arg(long, default_value = "agentic")]
    click_threshold: MatchConfig,
    #[command(flatten)]
    common: MatchArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scripted {
    Optimal,
    AlwaysToggle,
}

#[derive(Debug, Args)]
#[group(id = "agent", required = true, multiple = false)]
struct AgentArgs {
    /// Shell command of an agent speaking JSON lines on stdin/stdout.
    #[arg(long, group = "agent")]
    agent_cmd: Option<String>,
    /// HTTP endpoint receiving each step request as a POST.
    #[arg(long, group = "agent")]
    agent_url: Option<String>,
    /// A bundled reference policy.
    #[arg(long, group = "agent", value_enum)]
    scripted: Option<Scripted>,
}

#[derive(Debug, Args)]
struct EvalDynamicArgs {
    #[command(flatten)]
    agent: AgentArgs,
    /// Task ids to run, comma separated or repeated; all tasks by default.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    /// Step budget per episode.
    #[arg(long, default_value_t = DEFAULT_BUDGET, value_parser = clap::value_parser!(u32).range(1..))]
    budget: u32,
    /// Seed for the initial device states.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "canonical")]
    dialect: Dialect,
    /// HTTP agent timeout per step, in seconds.
    #[arg(long, default_value_t = 60)]
    agent_timeout_secs: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report JSONL written by eval-state/eval-agentic, or a summary.json
    /// written by eval-dynamic. Repeat to compare runs.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long, default_value = "table")]
    report_format: ReportFormat,
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("TOGGLEBENCH_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => build::run(a),
        Command::Annotate(a) => annotate::run(a),
        Command::StarSynth(a) => star::run(a),
        Command::EvalState(a) => eval::run_state(a),
        Command::EvalAgentic(a) => eval::run_agentic(a),
        Command::EvalDynamic(a) => dynamic::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
