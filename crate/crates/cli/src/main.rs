//! `axislab`: batch front end over axislab-core.
//!
//! Exit codes: 0 success, 2 bad flags or inputs, 1 computation failure.
//! `AXISLAB_THREADS` caps the worker pool.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use inputs::{parse_finite, parse_named_value, AxisSpec};

#[derive(Parser, Debug)]
#[command(
    name = "axislab",
    version,
    about = "Axis geometry, ablation prediction and strict-Pareto selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Centroid-difference (and optional PLS) axes with norms.
    Axis(AxisArgs),
    /// Projection summaries and projection AUROC along axes.
    Project(ProjectArgs),
    /// AUROC, operating-point rates and a metric block for two pools.
    Metrics(MetricsArgs),
    /// OLS-residualize a projection on manifest covariates.
    Residualize(ResidualizeArgs),
    /// Few-shot logistic probes and their alignment with named axes.
    Probe(ProbeArgs),
    /// Iterative nullspace projection baseline.
    Inlp(InlpArgs),
    /// Closed-form Δlogit of a rank-1 ablation, with measurements when the head allows.
    Predict(PredictArgs),
    /// ε-grid sweep over an axis bank with strict-Pareto verdicts.
    Sweep(SweepArgs),
    /// Predictor and oracle selection over a saved sweep report.
    Select(SelectArgs),
    /// Cosine matrix between axes.
    Align(AlignArgs),
    /// Baron–Kenny mediation over manifest covariates.
    Mediate(MediateArgs),
    /// Scalar deployment rule on typicality-axis norms.
    DeployRule(DeployArgs),
    /// Merge saved reports and re-emit their tables.
    Report(ReportArgs),
    /// Generate a synthetic cell (EMB1, manifest, head).
    Synth(SynthArgs),
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Output directory for report.json and tables; report goes to stdout when absent.
    #[arg(long, global = false)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CorpusArgs {
    /// EMB1 embedding file.
    #[arg(long)]
    emb: Option<PathBuf>,
    /// Population manifest (JSONL), one record per embedding row.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct AxisArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Axis as name=POP_A:POP_B (centroid A minus centroid B). Repeatable.
    #[arg(long = "axis", value_parser = parse_axis)]
    axes: Vec<AxisSpec>,
    /// Add a caps_PLS axis from the PLS1 direction of this covariate.
    #[arg(long)]
    pls: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long = "axis", value_parser = parse_axis, required = true)]
    axes: Vec<AxisSpec>,
    /// Positive populations (comma-separated) for AUROC.
    #[arg(long, value_delimiter = ',')]
    pos: Vec<String>,
    /// Negative populations (comma-separated) for AUROC.
    #[arg(long, value_delimiter = ',')]
    neg: Vec<String>,
    #[arg(long, default_value_t = 0.9)]
    target_tpr: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct MetricsArgs {
    /// Positive-pool EMB1 file.
    #[arg(long)]
    pos: PathBuf,
    /// Negative-pool EMB1 file.
    #[arg(long)]
    neg: PathBuf,
    /// Head file; without it, scores are projections on centroid(pos) - centroid(neg).
    #[arg(long)]
    head: Option<PathBuf>,
    /// Fixed threshold; the matched-TPR threshold is used when absent.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    target_tpr: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ResidualizeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_parser = parse_axis)]
    axis: AxisSpec,
    /// Covariate columns (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pos: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    neg: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ProbeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pos: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    neg: Vec<String>,
    /// Training texts per probe, balanced across populations.
    #[arg(long, default_value_t = 24)]
    shots: usize,
    #[arg(long, default_value_t = axislab_core::probes::DEFAULT_REG)]
    reg: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Axes to compare probe directions against.
    #[arg(long = "axis", value_parser = parse_axis)]
    axes: Vec<AxisSpec>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct InlpArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pos: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    neg: Vec<String>,
    /// Number of directions to remove.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = axislab_core::probes::DEFAULT_REG)]
    reg: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the projected embeddings (all rows) to this EMB1 file.
    #[arg(long)]
    save_emb: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long, value_parser = parse_axis)]
    axis: AxisSpec,
    /// Single ε; overrides --eps-grid.
    #[arg(long, value_parser = parse_finite, allow_hyphen_values = true)]
    eps: Option<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_finite, allow_hyphen_values = true)]
    eps_grid: Option<Vec<f64>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    /// Cell inputs; the bundled planted-bias cell is used when --emb is absent.
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long = "axis", value_parser = parse_axis)]
    axes: Vec<AxisSpec>,
    /// In-domain positive population.
    #[arg(long)]
    in_domain: Option<String>,
    /// Bias-negative population whose FPR is driven down.
    #[arg(long)]
    bias: Option<String>,
    /// Held-out positive populations; the first is the recall guard.
    #[arg(long, value_delimiter = ',')]
    guard: Vec<String>,
    /// Further negative populations.
    #[arg(long, value_delimiter = ',')]
    negative: Vec<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    tau: f64,
    /// Score pools as probabilities instead of logits.
    #[arg(long)]
    probability: bool,
    #[arg(long, value_delimiter = ',', value_parser = parse_finite, allow_hyphen_values = true)]
    eps_grid: Option<Vec<f64>>,
    /// Seeds of the bundled cell (ignored for file inputs).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Random-axis null size; 0 skips the null.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// ε of the random-axis null.
    #[arg(long, default_value_t = 0.7, allow_hyphen_values = true)]
    null_eps: f64,
    /// Draw null directions orthogonal to this bank axis (by name).
    #[arg(long)]
    orthogonal_to: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct SelectArgs {
    /// report.json written by `sweep`.
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct AlignArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long = "axis", value_parser = parse_axis, required = true)]
    axes: Vec<AxisSpec>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct MediateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Predictor column (covariate name, or `projection`).
    #[arg(long)]
    x: String,
    /// Mediator column.
    #[arg(long)]
    m: String,
    /// Outcome column.
    #[arg(long)]
    y: String,
    /// Axis whose projection fills the `projection` column.
    #[arg(long, value_parser = parse_axis)]
    axis: Option<AxisSpec>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct DeployArgs {
    /// Precomputed norm as name=value. Repeatable.
    #[arg(long = "norm", value_parser = parse_named_value)]
    norms: Vec<(String, f64)>,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Typicality axis to measure on the corpus.
    #[arg(long, value_parser = parse_axis)]
    axis: Option<AxisSpec>,
    #[arg(long, default_value_t = axislab_core::intervention::DEPLOYMENT_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Saved report.json files to merge. Repeatable.
    #[arg(long = "from", required = true)]
    from: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// SyntheticCellSpec as JSON; the planted-bias cell is used when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Seed of the planted-bias cell.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_axis(s: &str) -> Result<AxisSpec, String> {
    s.parse()
}

impl Serialize for AxisSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&format_args!("{}={}:{}", self.id, self.from, self.minus))
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("AXISLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("AXISLAB_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error[validation]: {e}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
