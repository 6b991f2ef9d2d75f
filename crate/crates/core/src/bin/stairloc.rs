use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stairloc::pipeline::{
    cmd_eval, cmd_localize, cmd_overlay, cmd_synth, load_corruption, PipelineError, RunConfig,
    SynthPlan,
};
use stairloc::synth::CorruptionSpec;

/// Staircase localization from RGB-D frames.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic dataset.
    Synth {
        /// Scene plan (JSON or key-value); defaults to the 1/3/5 m grid.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corruption applied to every frame.
        #[arg(long)]
        corruption: Option<PathBuf>,
        /// Frames per configuration.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize every frame of a dataset.
    Localize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed of the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a pose stream against the manifest truth.
    Eval {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for report.txt and report.json; the table is always
        /// printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw box, segments and pose arrows over one bundle.
    Overlay {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output PNG.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_config(config: Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig, PipelineError> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.cmd {
        Cmd::Synth {
            config,
            corruption,
            count,
            seed,
            out,
        } => {
            let plan = match config {
                Some(p) => SynthPlan::load(&p)?,
                None => SynthPlan::default(),
            };
            let corruption = match corruption {
                Some(p) => load_corruption(&p)?,
                None => CorruptionSpec::none(),
            };
            cmd_synth(&plan, &corruption, count, seed, &out)?;
        }
        Cmd::Localize {
            dataset,
            config,
            seed,
            out,
        } => {
            let mut cfg = run_config(config, seed)?;
            cfg.dataset = dataset;
            cfg.out = out;
            cmd_localize(&cfg)?;
        }
        Cmd::Eval {
            poses,
            manifest,
            out,
        } => {
            let report = cmd_eval(&poses, &manifest, out.as_deref())?;
            print!("{}", report.to_table());
        }
        Cmd::Overlay {
            bundle,
            poses,
            config,
            seed,
            out,
        } => {
            let cfg = run_config(config, seed)?;
            cmd_overlay(&bundle, poses.as_deref(), &cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stairloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
