//! `sgcr`: synthesize scenes, train Spherical Gaussians on edge maps,
//! extract curves and score them.

mod config;
mod failure;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;
use failure::Failure;
use stages::EvalInputs;

#[derive(Parser)]
#[command(name = "sgcr", version, about = "Edge reconstruction with Spherical Gaussians and rational Bezier curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML pipeline configuration; built-in defaults when omitted
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// overrides the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long, env = "SGCR_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write cameras, edge maps and ground-truth points for a synthetic scene
    Synth(Common),
    /// Fit Spherical Gaussians to the edge maps
    Train {
        #[command(flatten)]
        common: Common,
        /// continue from a checkpoint written by an earlier run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Turn the trained Gaussians into rational Bezier curves
    Extract(Common),
    /// Score curves (or a point list) against ground-truth points
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        curves: Option<PathBuf>,
        /// score this point list instead of curves
        #[arg(long, conflicts_with = "curves")]
        pred_points: Option<PathBuf>,
        #[arg(long)]
        gt_points: Option<PathBuf>,
    },
    /// synth, train, extract and eval in sequence
    Pipeline(Common),
    /// Print the default configuration
    DefaultConfig,
}

fn load(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.propagate_seed();
    cfg.validate()?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::config("SGCR_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(c) => stages::synth(&load(&c)?),
        Command::Train { common, resume } => stages::train(&load(&common)?, resume.as_deref()).map(drop),
        Command::Extract(c) => stages::extract(&load(&c)?),
        Command::Eval {
            common,
            curves,
            pred_points,
            gt_points,
        } => {
            let inputs = EvalInputs {
                curves,
                pred_points,
                gt_points,
            };
            stages::eval(&load(&common)?, &inputs).map(drop)
        }
        Command::Pipeline(c) => stages::pipeline(&load(&c)?).map(drop),
        Command::DefaultConfig => {
            let text = toml::to_string(&PipelineConfig::default())
                .map_err(|e| Failure::config(format!("config: {e}")))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
