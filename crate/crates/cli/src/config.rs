//! Run configuration files.

use std::path::{Path, PathBuf};

use cpinn::constitutive::{MaterialParams, ModelKind};
use cpinn::loading::{CycleMode, ProgramDescriptor};
use cpinn::train::{TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};
use crate::sampling::Distribution;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "CPINN_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub model_kind: ModelKind,
    /// Physical parameters; the model kind's preset when absent.
    #[serde(default)]
    pub params: Option<MaterialParams>,
    /// Parameter distribution used by sweeps.
    #[serde(default)]
    pub distribution: Option<Distribution>,
    #[serde(default = "default_loading")]
    pub loading: ProgramDescriptor,
    #[serde(default = "default_ppc")]
    pub points_per_cycle: usize,
    #[serde(default)]
    pub noise: f64,
}

/// Two strain-controlled tension cycles, to 0.3% and 0.6%, at 1% per unit
/// time.
pub fn default_loading() -> ProgramDescriptor {
    ProgramDescriptor::Uniaxial {
        rate: 0.01,
        amplitudes: vec![0.003, 0.006],
        mode: CycleMode::TensionOnly,
    }
}

fn default_ppc() -> usize {
    150
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Single source of randomness; split per purpose.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    /// Overrides on top of the mode defaults; keys follow `TrainConfig`.
    #[serde(default)]
    pub train: Map<String, Value>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn preset(kind: ModelKind) -> RunConfig {
        RunConfig {
            seed: 0,
            dataset: DatasetSpec {
                model_kind: kind,
                params: None,
                distribution: None,
                loading: default_loading(),
                points_per_cycle: default_ppc(),
                noise: 0.0,
            },
            train: Map::new(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunConfig::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn params(&self) -> Result<MaterialParams> {
        match self.dataset.params {
            Some(p) => Ok(p),
            None => preset_params(self.dataset.model_kind).ok_or_else(|| {
                CliError::Config(format!(
                    "no preset parameters for {}; give dataset.params",
                    self.dataset.model_kind
                ))
            }),
        }
    }

    /// Training settings for `mode` and model `kind`: mode defaults, then
    /// the `train` overrides, then the run seed.
    pub fn train_config(&self, mode: TrainMode, kind: ModelKind) -> Result<TrainConfig> {
        let base = TrainConfig::for_mode(mode, kind);
        let mut merged = match serde_json::to_value(&base) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("TrainConfig serializes to an object"),
        };
        for (k, v) in &self.train {
            merged.insert(k.clone(), v.clone());
        }
        merged.insert("mode".into(), serde_json::to_value(mode).expect("enum"));
        merged.insert("seed".into(), Value::from(self.seed));
        let cfg: TrainConfig = serde_json::from_value(Value::Object(merged))
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked before work starts.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.points_per_cycle < 2 {
            return Err(CliError::Config("points_per_cycle must be >= 2".into()));
        }
        if !(d.noise >= 0.0 && d.noise.is_finite()) {
            return Err(CliError::Config(format!("noise must be >= 0, got {}", d.noise)));
        }
        d.loading.build()?;
        if d.distribution.is_none() || d.params.is_some() {
            self.params()?.validate(d.model_kind)?;
        }
        if let Some(row) = d.distribution {
            if row.model_kind() != d.model_kind {
                return Err(CliError::Config(format!(
                    "distribution {} draws {} parameters, dataset is {}",
                    row.label(),
                    row.model_kind(),
                    d.model_kind
                )));
            }
        }
        self.train_config(TrainMode::Scratch, d.model_kind)?;
        Ok(())
    }

    /// Output directory: explicit flag, then config, then
    /// `$CPINN_OUTPUT_ROOT/<command>`, then `runs/<command>`.
    pub fn output_dir(&self, flag: Option<&Path>, command: &str) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output {
            return p.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(command)
    }
}

pub fn preset_params(kind: ModelKind) -> Option<MaterialParams> {
    match kind {
        ModelKind::Vmih => Some(MaterialParams::vmih()),
        ModelKind::Vmkh => Some(MaterialParams::vmkh()),
        ModelKind::VmDamage => Some(MaterialParams::vmd()),
        ModelKind::DruckerPrager => Some(MaterialParams::silty_soil()),
        ModelKind::VmMixed | ModelKind::DiscoveryGeneral => None,
    }
}
