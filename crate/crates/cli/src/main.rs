#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rangeudf::model::RangeInput;

#[derive(Debug, Parser)]
#[command(name = "rangeudf", version, about = "Range-aware unsigned distance fields: data, training, extraction, evaluation")]
pub struct Cli {
    /// Worker threads for parallel stages (falls back to RANGEUDF_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed applied to every seeded stage, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Procedural labeled scenes as PLY meshes with `.labels` and spec sidecars.
    GenScenes(GenScenesArgs),
    /// Query set (positions, distances, labels) for one mesh.
    GenData(GenDataArgs),
    /// Train on a directory of meshes; writes a checkpoint and a loss CSV.
    Train(TrainArgs),
    /// Dense points and optionally a mesh from a checkpoint and an input cloud.
    Reconstruct(ReconstructArgs),
    /// Per-point semantic labels from a checkpoint and an input cloud.
    Segment(SegmentArgs),
    /// Reconstruction and segmentation metrics as sorted-key JSON.
    Eval(EvalArgs),
    /// Train and score the ablation grid, printing a markdown table.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenScenesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Subdivisions per primitive edge.
    #[arg(long, default_value_t = 8)]
    pub density: usize,
    /// Build one scene from a JSON scene spec instead of random ones.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Defaults to the mesh path with a `.ruqs` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_on: Option<usize>,
    #[arg(long)]
    pub n_off: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RangeInputArg {
    Full,
    WithoutRelative,
    NeighborOnly,
}

impl From<RangeInputArg> for RangeInput {
    fn from(a: RangeInputArg) -> Self {
        match a {
            RangeInputArg::Full => RangeInput::Full,
            RangeInputArg::WithoutRelative => RangeInput::WithoutRelative,
            RangeInputArg::NeighborOnly => RangeInput::NeighborOnly,
        }
    }
}

/// Model and training overrides shared by `train` and `ablate`.
#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Total optimizer steps; replaces the epoch count.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub label_fraction: Option<f64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub queries_per_scene: Option<usize>,
    #[arg(long)]
    pub surface_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of meshes; a sibling `<stem>.ruqs` supplies each scene's queries.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long, value_enum)]
    pub range_input: Option<RangeInputArg>,
    /// Drop the relative offset from the range input.
    #[arg(long, conflicts_with = "range_input")]
    pub no_range_term: bool,
    /// Append the query position to the semantic rows.
    #[arg(long)]
    pub sem_with_q: bool,
    /// Neighbors per query.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Fixed unit weighting of the two losses.
    #[arg(long)]
    pub no_uncertainty: bool,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input point cloud (PLY or OBJ vertices) in the unit cube.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub out_points: Option<PathBuf>,
    #[arg(long)]
    pub out_mesh: Option<PathBuf>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Store predicted semantic labels with the dense points.
    #[arg(long)]
    pub labels: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub cloud: PathBuf,
    /// Points to label; defaults to the cloud itself.
    #[arg(long)]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted points, optionally with a vertex `label` property.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth points, or a mesh with `--gt-mesh`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Treat `--gt` as a mesh and sample its surface.
    #[arg(long)]
    pub gt_mesh: bool,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    /// Held-out scenes; defaults to the training scenes.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let from_env = std::env::var("RANGEUDF_THREADS").ok();
    let threads = match (flag, from_env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(v.trim().parse::<usize>().map_err(|_| {
            rangeudf::Error::Validation(format!("RANGEUDF_THREADS must be a positive integer, got `{v}`"))
        })?),
        (None, None) => None,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(rangeudf::Error::Validation("thread count must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// 2 when the failure came from the filesystem, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.downcast_ref::<rangeudf::Error>().is_some_and(|e| e.is_io()) || e.is::<std::io::Error>()
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = init_threads(cli.threads).and_then(|_| commands::run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
