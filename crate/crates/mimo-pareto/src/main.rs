//! Command-line interface: computes key points, boundary sweeps, random
//! baselines and balanced-strategy sweeps for a channel configuration, and
//! emits plot-ready CSV or JSON artifacts.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mimo_pareto::artifact::{
    cmd_balanced, cmd_boundary, cmd_iaa, cmd_keypoints, cmd_random_baseline, load_config,
    BalancedGrid, BoundaryArtifact, RunConfig,
};
use mimo_pareto::iaa::IaaConfig;

#[derive(Parser)]
#[command(
    name = "mimo-pareto",
    version,
    about = "Rate-region boundary computation for the two-user single-beam MIMO \
             interference channel with MMSE receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Channel configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for randomized steps.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct IaaArgs {
    /// Convergence threshold on the change of link 1's rate (bits/s/Hz).
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Mixing-weight fallback grid size for the initialization.
    #[arg(long, default_value_t = 10)]
    nu_steps: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form key points, zero-forcing points and weak-boundary
    /// samples.
    Keypoints {
        #[command(flatten)]
        common: CommonArgs,
        /// Samples per weak-boundary segment.
        #[arg(long, default_value_t = 25)]
        samples: usize,
    },
    /// Full boundary sweep: alternating-optimization traces on a uniform
    /// rate-target grid plus the key points.
    Boundary {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of rate targets strictly inside the feasible interval.
        #[arg(long, default_value_t = 49)]
        targets: usize,
        #[command(flatten)]
        iaa: IaaArgs,
    },
    /// Random full-power beamformer baseline; emits the cloud envelope.
    RandomBaseline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Egoistic/altruistic combination sweeps.
    Balanced {
        #[command(flatten)]
        common: CommonArgs,
        /// Real-weight grid size N (weights (n-1)/N for n = 1..=N+1).
        #[arg(long, default_value_t = 100)]
        zeta_steps: usize,
        /// Use the complex-weight grid instead of the real-weight one.
        #[arg(long, default_value_t = false)]
        complex_weights: bool,
        /// Magnitude steps of the complex grid.
        #[arg(long, default_value_t = 20)]
        magnitude_steps: usize,
        /// Relative-phase steps of the complex grid.
        #[arg(long, default_value_t = 16)]
        phase_steps: usize,
    },
    /// Single alternating-optimization run at one rate target.
    Iaa {
        #[command(flatten)]
        common: CommonArgs,
        /// Rate target for link 2 (bits/s/Hz), strictly inside the
        /// feasible interval.
        #[arg(long)]
        r2_star: f64,
        #[command(flatten)]
        iaa: IaaArgs,
    },
}

fn emit(artifact: &BoundaryArtifact, common: &CommonArgs) -> mimo_pareto::Result<()> {
    let body = match common.format {
        OutputFormat::Csv => artifact.to_csv(),
        OutputFormat::Json => artifact.to_json()?,
    };
    match &common.out {
        Some(path) => std::fs::write(path, body)?,
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
        }
    }
    Ok(())
}

fn load(common: &CommonArgs) -> mimo_pareto::Result<RunConfig> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

fn iaa_config(args: &IaaArgs, seed: u64) -> IaaConfig {
    IaaConfig {
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        nu_steps: args.nu_steps,
        rng_seed: seed,
    }
}

fn run() -> mimo_pareto::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Keypoints { common, samples } => {
            let cfg = load(common)?;
            let art = cmd_keypoints(&cfg, *samples)?;
            emit(&art, common)?;
        }
        Command::Boundary {
            common,
            targets,
            iaa,
        } => {
            let cfg = load(common)?;
            let outcome = cmd_boundary(&cfg, *targets, &iaa_config(iaa, cfg.rng_seed))?;
            for (idx, err) in &outcome.failures {
                eprintln!("warning: target {idx} failed: {err}");
            }
            emit(&outcome.artifact, common)?;
        }
        Command::RandomBaseline { common, samples } => {
            let cfg = load(common)?;
            let (art, stats) = cmd_random_baseline(&cfg, *samples, cfg.rng_seed)?;
            eprintln!(
                "baseline: {} samples, max R1 {:.4}, max R2 {:.4}, {} envelope points",
                stats.samples, stats.max_r1, stats.max_r2, stats.envelope_points
            );
            emit(&art, common)?;
        }
        Command::Balanced {
            common,
            zeta_steps,
            complex_weights,
            magnitude_steps,
            phase_steps,
        } => {
            let cfg = load(common)?;
            let grid = if *complex_weights {
                BalancedGrid::Complex {
                    magnitude_steps: *magnitude_steps,
                    phase_steps: *phase_steps,
                }
            } else {
                BalancedGrid::RealWeight { steps: *zeta_steps }
            };
            let (art, skipped) = cmd_balanced(&cfg, &grid)?;
            if skipped > 0 {
                eprintln!("warning: {skipped} degenerate combinations skipped");
            }
            emit(&art, common)?;
        }
        Command::Iaa {
            common,
            r2_star,
            iaa,
        } => {
            let cfg = load(common)?;
            let (art, trace) = cmd_iaa(&cfg, *r2_star, &iaa_config(iaa, cfg.rng_seed))?;
            eprintln!(
                "converged: {} after {} iterations; R1 = {:.6}, R2 = {:.6}",
                trace.converged,
                trace.iterations.len(),
                trace.final_point.r1,
                trace.final_point.r2
            );
            emit(&art, common)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
