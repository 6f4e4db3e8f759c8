use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csfft::experiment::{cmd_baselines, cmd_eval, cmd_gen, cmd_recover, cmd_sweep, ExperimentConfig};
use csfft::{CsfftError, Result};

#[derive(Parser)]
#[command(name = "csfft", version, about = "Sparse Fourier recovery of continuous-time signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config trial count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw instances and write them as JSON.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Also write sampled signal traces.
        #[arg(long)]
        trace: bool,
    },
    /// Run recovery on each trial.
    Recover {
        #[command(flatten)]
        common: Common,
        /// Also run the grid oracle.
        #[arg(long)]
        oracle: bool,
        /// Write per-round locate traces for one stage.
        #[arg(long)]
        trace: bool,
    },
    /// Recompute metrics for a saved recovery.
    Eval {
        #[command(flatten)]
        common: Common,
        /// recover.json to evaluate; defaults to the one in --out-dir.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sweep one parameter over the configured values.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Compare against the grid oracle, dense DFT and Nyquist reconstruction.
    Baselines {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("CSFFT_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| CsfftError::config(format!("CSFFT_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CsfftError::config(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Gen { common, trace } => {
            let cfg = load(&common)?;
            for path in cmd_gen(&cfg, &common.out_dir, trace)? {
                println!("{}", path.display());
            }
        }
        Command::Recover { common, oracle, trace } => {
            let cfg = load(&common)?;
            let out = cmd_recover(&cfg, &common.out_dir, oracle, trace)?;
            for t in &out.trials {
                let m = &t.report.metrics;
                println!(
                    "trial {}: found {} matched {} eq3/N2 {:.3} samples {} time {:.2}s",
                    t.trial,
                    t.report.tones.len(),
                    m.matching.pairs.len(),
                    m.eq3_ratio,
                    t.report.samples_used,
                    t.report.wall_time_s
                );
            }
        }
        Command::Eval { common, input } => {
            let cfg = load(&common)?;
            for r in cmd_eval(&cfg, &common.out_dir, input.as_deref())? {
                println!("trial {}: matched {}/{} eq2/N2 {:.3} eq3/N2 {:.3}", r.trial, r.matched, r.k, r.eq2_ratio, r.eq3_ratio);
            }
        }
        Command::Sweep { common } => {
            let cfg = load(&common)?;
            let rows = cmd_sweep(&cfg, &common.out_dir)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} rows ({failed} not ok) -> {}", rows.len(), common.out_dir.join("sweep.csv").display());
        }
        Command::Baselines { common } => {
            let cfg = load(&common)?;
            for r in cmd_baselines(&cfg, &common.out_dir)? {
                println!("trial {} {:<12} samples {:>10} max|df|T {:.3e} eq3/N2 {:.3e}", r.trial, r.method, r.samples_used, r.max_df_t, r.eq3_ratio);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
