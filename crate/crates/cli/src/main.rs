use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpinn::train::{TrainMode, TrainReport};
use cpinn_cli::commands::{cmd_generate, cmd_sweep, run_training, Overrides};
use cpinn_cli::config::RunConfig;
use cpinn_cli::report::cmd_report;
use cpinn_cli::Result;

#[derive(Parser)]
#[command(name = "cpinn", version, about = "PINN calibration of elastoplastic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: config `output`, then $CPINN_OUTPUT_ROOT/<command>, then runs/<command>].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            noise: self.noise,
            epochs: self.epochs,
            delta: self.delta,
            lr: self.lr,
        }
    }

    fn load(&self, command: &str) -> Result<(RunConfig, PathBuf, Overrides)> {
        let mut cfg = RunConfig::load(&self.config)?;
        let ov = self.overrides();
        ov.apply(&mut cfg)?;
        let out = cfg.output_dir(self.out.as_deref(), command);
        Ok((cfg, out, ov))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset, or a sweep of datasets.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Draw this many parameter sets from the configured distribution.
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Train from scratch.
    Train {
        #[command(flatten)]
        common: Common,
        /// Existing dataset CSV; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Recalibrate a trained checkpoint on new data.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train the general model with extra parameters unlocked.
    Discover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Generate and train a sweep of datasets.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Transfer from this checkpoint instead of training from scratch.
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Summarize the runs under a directory.
    Report { dir: PathBuf },
}

fn print_report(r: &TrainReport) {
    println!("stop: {:?} after {} epochs (best {})", r.stop_reason, r.epochs_run, r.best_epoch);
    println!("loss: {:.6e}", r.final_total);
    for p in &r.trainable {
        let err = r
            .relative_errors
            .as_ref()
            .and_then(|m| m.get(p))
            .map(|e| format!("  rel. err {e:.3e}"))
            .unwrap_or_default();
        println!("{:<10} {:.6e}{err}", p.as_str(), r.recovered.get(*p));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, sweep } => {
            let (cfg, out, _) = common.load("generate")?;
            for p in cmd_generate(&cfg, &out, sweep)? {
                println!("{}", p.display());
            }
        }
        Command::Train { common, data } => {
            let (cfg, out, ov) = common.load("train")?;
            let r = run_training(&cfg, TrainMode::Scratch, data.as_deref(), None, &ov, &out)?;
            print_report(&r);
        }
        Command::Calibrate { common, basis, data } => {
            let (cfg, out, ov) = common.load("calibrate")?;
            let r = run_training(&cfg, TrainMode::Transfer, data.as_deref(), Some(&basis), &ov, &out)?;
            print_report(&r);
        }
        Command::Discover { common, basis, data } => {
            let (cfg, out, ov) = common.load("discover")?;
            let r = run_training(&cfg, TrainMode::Discovery, data.as_deref(), Some(&basis), &ov, &out)?;
            print_report(&r);
        }
        Command::Sweep { common, n, jobs, basis } => {
            let (cfg, out, ov) = common.load("sweep")?;
            cmd_sweep(&cfg, n, jobs, basis.as_deref(), &ov, &out)?;
            print!("{}", cmd_report(&out)?.table());
        }
        Command::Report { dir } => print!("{}", cmd_report(&dir)?.table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
