//! `drape`: command-line entry point for simulation, rendering, dataset
//! generation, the drape similarity metric and embedding evaluation.

mod commands;
mod report;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use util::{CliError, RunContext};

#[derive(Parser, Debug)]
#[command(
    name = "drape",
    version,
    about = "Fabric drape simulation, datasets and similarity metric"
)]
struct Cli {
    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relax one scene for one material; writes an OBJ mesh and a convergence report.
    Simulate(SimulateArgs),
    /// Render an OBJ mesh to a depth map, a shaded image or an 11-view sweep.
    Render(RenderArgs),
    /// Sweep one parameter over both scenes; writes an image grid and drape statistics.
    Sweep(SweepArgs),
    /// Apply an augmentation policy to depth PNGs.
    Augment(AugmentArgs),
    /// Generate a synthetic depth-image dataset.
    GenDataset(GenDatasetArgs),
    /// Spearman correlation statistics of a dataset manifest.
    Stats(StatsArgs),
    /// Drape distance between two materials.
    Distance(DistanceArgs),
    /// Rank candidate materials by drape similarity to a reference.
    Rank(RankArgs),
    /// Check that every self-distance is below the cross-distances of its row.
    ValidateMetric(ValidateArgs),
    /// Fit an ordinal embedding to triplet judgements.
    Embed(EmbedArgs),
    /// Markdown report with statistics, sweeps, z-score plots, rankings and correlation tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct MetricArgs {
    /// Metric configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulations per material and side.
    #[arg(long)]
    replicates: Option<usize>,
    /// Mesh edge length (m).
    #[arg(long)]
    mesh_edge: Option<f64>,
    /// Inner image metric: mad, ssim or external.
    #[arg(long)]
    inner: Option<String>,
    /// Render size in pixels.
    #[arg(long)]
    image_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    scene: String,
    /// Material parameters (JSON).
    #[arg(long)]
    params: PathBuf,
    /// Simulation configuration (JSON): fabric_size, mesh_edge, solver, jitter.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh_edge: Option<f64>,
    /// Enable initial-condition jitter with default magnitudes.
    #[arg(long)]
    jitter: bool,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Triangle mesh (OBJ).
    #[arg(long)]
    mesh: PathBuf,
    /// Camera (JSON); defaults to the panel-facing camera.
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long, default_value = "depth")]
    mode: String,
    #[arg(long)]
    size: Option<usize>,
    /// Render the 11-view inclination sweep.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 0.5)]
    fabric_size: f64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Parameter name, or kStretch / kBending for a whole group.
    #[arg(long)]
    param: String,
    /// Comma-separated ascending values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Fixed material (JSON) for the other parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Sweep configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh_edge: Option<f64>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Augmentation policy (JSON); defaults to the built-in policy.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Depth PNGs to augment.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Per-image seed of the first input; later inputs count up from it.
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    /// Histogram-equalize the result.
    #[arg(long)]
    equalize: bool,
}

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    /// Generation configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    mesh_edge: Option<f64>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct DistanceArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long)]
    reference: PathBuf,
    /// Materials file (JSON list).
    #[arg(long)]
    candidates: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Materials file (JSON list).
    #[arg(long)]
    materials: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Triplets CSV with columns ref,chosen,rejected.
    #[arg(long)]
    triplets: PathBuf,
    /// Number of items; defaults to the largest index plus one.
    #[arg(long)]
    n_items: Option<usize>,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// Options (JSON): learning_rate, iterations, alpha, restarts, seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Materials file whose names label the plot.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report configuration (JSON).
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut ctx = RunContext::new(cli.out.clone(), cli.seed, cli.jobs);
    let result = match ctx.create_out() {
        Ok(()) => dispatch(&cli.command, &mut ctx),
        Err(e) => Err(e),
    };
    let result = result.and_then(|()| {
        ctx.write_manifest(subcommand_name(&cli.command), start.elapsed().as_secs_f64())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.kind(), "message": e.to_string() })
            );
            ExitCode::from(e.code())
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Render(_) => "render",
        Command::Sweep(_) => "sweep",
        Command::Augment(_) => "augment",
        Command::GenDataset(_) => "gen-dataset",
        Command::Stats(_) => "stats",
        Command::Distance(_) => "distance",
        Command::Rank(_) => "rank",
        Command::ValidateMetric(_) => "validate-metric",
        Command::Embed(_) => "embed",
        Command::Report(_) => "report",
    }
}

fn dispatch(c: &Command, ctx: &mut RunContext) -> Result<(), CliError> {
    let jobs = ctx.jobs;
    if jobs == Some(0) {
        return Err(CliError::Config("--jobs must be positive".into()));
    }
    util::with_jobs(jobs, || match c {
        Command::Simulate(a) => commands::simulate(a, ctx),
        Command::Render(a) => commands::render(a, ctx),
        Command::Sweep(a) => commands::sweep(a, ctx),
        Command::Augment(a) => commands::augment(a, ctx),
        Command::GenDataset(a) => commands::gen_dataset(a, ctx),
        Command::Stats(a) => commands::stats(a, ctx),
        Command::Distance(a) => commands::distance(a, ctx),
        Command::Rank(a) => commands::rank(a, ctx),
        Command::ValidateMetric(a) => commands::validate_metric(a, ctx),
        Command::Embed(a) => commands::embed(a, ctx),
        Command::Report(a) => report::run(a, ctx),
    })
}
