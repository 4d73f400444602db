use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsp3d_cli::commands::{self, SuiteName};

/// Sparse voxel 3D object detection with dynamic spatial pruning.
#[derive(Parser)]
#[command(name = "dsp3d", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run inference over a point cloud and write detections plus a stats
    /// sidecar.
    Infer {
        /// Point cloud: one "x y z" triple (meters) per line.
        #[arg(long)]
        points: PathBuf,
        /// Weight file produced by init-weights.
        #[arg(long)]
        weights: PathBuf,
        /// Pipeline configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Detections JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Bypass the pruning step entirely (equivalent to tau = 0).
        #[arg(long)]
        no_prune: bool,
    },
    /// Generate keep masks, level assignments and positive voxels for
    /// ground-truth boxes.
    Targets {
        #[arg(long)]
        points: PathBuf,
        /// Ground-truth boxes JSON.
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the training objective on a scene and print the breakdown.
    LossEval {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep pruning thresholds and write per-level voxel counts as CSV.
    Bench {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated thresholds, e.g. 0,0.3,0.5.
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<f64>,
        #[arg(long)]
        csv: PathBuf,
        /// Ground-truth boxes for the optional gt-mask run.
        #[arg(long)]
        boxes: Option<PathBuf>,
        /// Add a run whose keep scores replay the ground-truth masks
        /// (requires --boxes); its rows carry tau = "gt".
        #[arg(long)]
        gt_prune: bool,
    },
    /// Generate a synthetic scene: floor plane plus box-shaped objects.
    /// Writes <out>.points.txt and <out>.boxes.json.
    Synth {
        #[arg(long)]
        objects: usize,
        /// Scene side length in meters.
        #[arg(long)]
        extent: f64,
        #[arg(long)]
        seed: u64,
        /// Output path prefix.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded parameter set as a weight file.
    InitWeights {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle equality suites.
    OracleCheck {
        #[arg(long, value_enum)]
        suite: SuiteName,
    },
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("DSP_THREADS") {
        let n: usize = value
            .parse()
            .map_err(|_| anyhow::anyhow!("DSP_THREADS must be a non-negative integer, got {value:?}"))?;
        dsp3d_core::parallel::set_max_threads(n);
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Infer {
            points,
            weights,
            config,
            out,
            no_prune,
        } => commands::cmd_infer(&points, &weights, &config, &out, no_prune),
        Command::Targets {
            points,
            boxes,
            config,
            out,
        } => commands::cmd_targets(&points, &boxes, &config, &out),
        Command::LossEval {
            points,
            boxes,
            weights,
            config,
        } => commands::cmd_loss_eval(&points, &boxes, &weights, &config),
        Command::Bench {
            points,
            weights,
            config,
            taus,
            csv,
            boxes,
            gt_prune,
        } => commands::cmd_bench(
            &points,
            &weights,
            &config,
            &taus,
            &csv,
            boxes.as_deref(),
            gt_prune,
        ),
        Command::Synth {
            objects,
            extent,
            seed,
            out,
        } => commands::cmd_synth(objects, extent, seed, &out),
        Command::InitWeights { config, seed, out } => {
            commands::cmd_init_weights(&config, seed, &out)
        }
        Command::OracleCheck { suite } => commands::cmd_oracle_check(suite),
    }
}

fn main() -> ExitCode {
    // Usage errors exit with status 2 via clap.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
