//! Command implementations. Every command writes into its own output
//! directory and draws all randomness from the run seed.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cpinn::constitutive::{MaterialParams, ModelKind};
use cpinn::forward::{export, import, integrate, prepare, Dataset, SolverOptions};
use cpinn::network::Checkpoint;
use cpinn::train::{derive_seed, fit, TrainConfig, TrainMode, TrainReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const LOG_FILE: &str = "log.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.json";

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub epochs: Option<usize>,
    pub delta: Option<f64>,
    pub lr: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.noise {
            cfg.dataset.noise = n;
        }
        cfg.validate()
    }

    pub fn apply_train(&self, tc: &mut TrainConfig) -> Result<()> {
        if let Some(e) = self.epochs {
            tc.max_epochs = e;
        }
        if let Some(d) = self.delta {
            tc.loss.gate.delta = d;
        }
        if let Some(lr) = self.lr {
            tc.lr_initial = lr;
            tc.lr_final = tc.lr_final.min(lr);
        }
        tc.validate()?;
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let js = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, js).map_err(|e| CliError::io(path, e))
}

/// Integrates the configured program for `params` and prepares the
/// training dataset.
pub fn build_dataset(cfg: &RunConfig, params: &MaterialParams, noise_seed: u64) -> Result<Dataset> {
    let d = &cfg.dataset;
    let program = d.loading.build()?;
    let path = integrate(&program, params, d.model_kind, &SolverOptions::default())?;
    Ok(prepare(&path, d.points_per_cycle, d.noise, noise_seed)?)
}

/// Parameter sets of a sweep, drawn from the configured distribution.
pub fn sweep_params(cfg: &RunConfig, n: usize) -> Result<Vec<MaterialParams>> {
    let row = cfg.dataset.distribution.ok_or_else(|| {
        CliError::Config("sweeps need dataset.distribution (\"i\", \"ii\" or \"iii\")".into())
    })?;
    Ok(row.draw_n(n, derive_seed(cfg.seed, "sampling")))
}

pub fn member_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("sample_{i:03}"))
}

fn member_noise_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &format!("noise-{i}"))
}

#[derive(Debug, Serialize)]
struct SweepIndex<'a> {
    seed: u64,
    distribution: Option<&'a str>,
    params: &'a [MaterialParams],
}

/// Writes one dataset, or `sweep` datasets in numbered subdirectories.
pub fn cmd_generate(cfg: &RunConfig, out: &Path, sweep: Option<usize>) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = Vec::new();
    match sweep {
        None => {
            let d = build_dataset(cfg, &cfg.params()?, derive_seed(cfg.seed, "noise"))?;
            let p = out.join(DATASET_FILE);
            export(&d, &p)?;
            written.push(p);
        }
        Some(n) => {
            let params = sweep_params(cfg, n)?;
            for (i, p) in params.iter().enumerate() {
                let d = build_dataset(cfg, p, member_noise_seed(cfg.seed, i))
                    .map_err(|e| e.context(format!("sweep member {i} ({p:?})")))?;
                let dir = member_dir(out, i);
                create_dir(&dir)?;
                let path = dir.join(DATASET_FILE);
                export(&d, &path)?;
                written.push(path);
            }
            write_json(
                &out.join("sweep.json"),
                &SweepIndex {
                    seed: cfg.seed,
                    distribution: cfg.dataset.distribution.map(|r| r.label()),
                    params: &params,
                },
            )?;
        }
    }
    write_json(&out.join(RESOLVED_CONFIG_FILE), cfg)?;
    Ok(written)
}

/// The model trained for a command: discovery runs use the general model.
pub fn model_for(mode: TrainMode, data_kind: ModelKind) -> ModelKind {
    match mode {
        TrainMode::Discovery => ModelKind::DiscoveryGeneral,
        _ => data_kind,
    }
}

#[derive(Debug, Serialize)]
struct ResolvedRun<'a> {
    run: &'a RunConfig,
    model_kind: ModelKind,
    train: &'a TrainConfig,
    dataset: String,
    basis: Option<String>,
}

/// Trains on `data` (or a dataset generated from the config) and writes
/// checkpoint, report, log and resolved config into `out`.
pub fn run_training(
    cfg: &RunConfig,
    mode: TrainMode,
    data: Option<&Path>,
    basis: Option<&Path>,
    overrides: &Overrides,
    out: &Path,
) -> Result<TrainReport> {
    create_dir(out)?;
    let (dataset, data_path) = match data {
        Some(p) => (import(p)?, p.to_path_buf()),
        None => {
            let d = build_dataset(cfg, &cfg.params()?, derive_seed(cfg.seed, "noise"))?;
            let p = out.join(DATASET_FILE);
            export(&d, &p)?;
            (d, p)
        }
    };
    train_on(cfg, mode, &dataset, &data_path, basis, overrides, out)
}

fn train_on(
    cfg: &RunConfig,
    mode: TrainMode,
    dataset: &Dataset,
    data_path: &Path,
    basis: Option<&Path>,
    overrides: &Overrides,
    out: &Path,
) -> Result<TrainReport> {
    let kind = model_for(mode, dataset.meta.model_kind);
    let mut tc = cfg.train_config(mode, kind)?;
    overrides.apply_train(&mut tc)?;
    let ck = match (mode, basis) {
        (TrainMode::Scratch, _) => None,
        (_, None) => {
            return Err(CliError::Config(
                "calibrate and discover need --basis <checkpoint>".into(),
            ))
        }
        (_, Some(p)) => Some(Checkpoint::load(p, Some(&tc.network))?),
    };
    let (checkpoint, report) = fit(dataset, kind, &tc, ck.as_ref())?;
    checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    report.save(&out.join(REPORT_FILE))?;
    report.write_log_csv(&out.join(LOG_FILE))?;
    write_json(
        &out.join(RESOLVED_CONFIG_FILE),
        &ResolvedRun {
            run: cfg,
            model_kind: kind,
            train: &tc,
            dataset: data_path.display().to_string(),
            basis: basis.map(|p| p.display().to_string()),
        },
    )?;
    Ok(report)
}

/// Generates `n` datasets from the configured distribution and trains on
/// each, from `basis` when given (transfer) or from scratch. Up to `jobs`
/// members run at once, each in its own subdirectory.
pub fn cmd_sweep(
    cfg: &RunConfig,
    n: usize,
    jobs: usize,
    basis: Option<&Path>,
    overrides: &Overrides,
    out: &Path,
) -> Result<Vec<TrainReport>> {
    let params = sweep_params(cfg, n)?;
    create_dir(out)?;
    let mode = if basis.is_some() {
        TrainMode::Transfer
    } else {
        TrainMode::Scratch
    };
    // Fail on bad training settings before any member starts.
    let mut tc = cfg.train_config(mode, model_for(mode, cfg.dataset.model_kind))?;
    overrides.apply_train(&mut tc)?;

    let member = |i: usize| -> Result<TrainReport> {
        let dir = member_dir(out, i);
        create_dir(&dir)?;
        let d = build_dataset(cfg, &params[i], member_noise_seed(cfg.seed, i))?;
        let p = dir.join(DATASET_FILE);
        export(&d, &p)?;
        train_on(cfg, mode, &d, &p, basis, overrides, &dir)
    };

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TrainReport>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = member(i).map_err(|e| e.context(format!("sweep member {i}")));
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    write_json(
        &out.join("sweep.json"),
        &SweepIndex {
            seed: cfg.seed,
            distribution: cfg.dataset.distribution.map(|r| r.label()),
            params: &params,
        },
    )?;
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every member ran"))
        .collect()
}
