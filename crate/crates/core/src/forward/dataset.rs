//! Sampled stress-strain histories: resampling, scaling, rates, noise and
//! file IO.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constitutive::{MaterialParams, ModelKind};
use crate::error::{Error, Result};
use crate::loading::ProgramDescriptor;
use crate::tensor::{SymTensor, CHANNEL_NAMES};

use super::integrate::RawPath;

pub const DATASET_SCHEMA: &str = "ds-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    pub sigma_star: f64,
    pub eps_star: f64,
    pub e_star: f64,
    pub t_star: f64,
}

impl ScalingFactors {
    pub fn identity() -> Self {
        ScalingFactors {
            sigma_star: 1.0,
            eps_star: 1.0,
            e_star: 1.0,
            t_star: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub program: ProgramDescriptor,
    pub model_kind: ModelKind,
    pub true_params: Option<MaterialParams>,
    pub noise_level: f64,
    pub noise_seed: Option<u64>,
    /// Lateral condition of uniaxial programs.
    pub uniaxial_condition: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub t: Vec<f64>,
    pub eps: Vec<SymTensor>,
    pub sig: Vec<SymTensor>,
    pub eps_dot: Vec<SymTensor>,
    pub sig_dot: Vec<SymTensor>,
    /// Factors applied to reach the stored values (identity when physical).
    pub scaling: ScalingFactors,
    pub scaled: bool,
    /// Start time of the physical record; scaled time is `(t - t0)/t_star`.
    pub t0: f64,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.t.len();
        for (name, len) in [
            ("eps", self.eps.len()),
            ("sig", self.sig.len()),
            ("eps_dot", self.eps_dot.len()),
            ("sig_dot", self.sig_dot.len()),
        ] {
            if len != n {
                return Err(Error::Parse(format!(
                    "column group {name} has {len} rows, expected {n}"
                )));
            }
        }
        if n < 2 {
            return Err(Error::TooFewPoints { need: 2, got: n });
        }
        if self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateData("time must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Uniform resampling of a path: `points_per_cycle` intervals per load cycle,
/// plus the end point. Rates are left at zero.
pub fn sample_dataset(path: &RawPath, points_per_cycle: usize) -> Result<Dataset> {
    if points_per_cycle < 2 {
        return Err(Error::TooFewPoints {
            need: 2,
            got: points_per_cycle,
        });
    }
    let cycles = path.program.descriptor.cycles().max(1);
    let n = points_per_cycle * cycles;
    let t_end = path.program.total_duration();
    let mut d = Dataset {
        t: Vec::with_capacity(n + 1),
        eps: Vec::with_capacity(n + 1),
        sig: Vec::with_capacity(n + 1),
        eps_dot: vec![SymTensor::zero(); n + 1],
        sig_dot: vec![SymTensor::zero(); n + 1],
        scaling: ScalingFactors::identity(),
        scaled: false,
        t0: 0.0,
        meta: DatasetMeta {
            program: path.program.descriptor.clone(),
            model_kind: path.kind,
            true_params: Some(path.params),
            noise_level: 0.0,
            noise_seed: None,
            uniaxial_condition: "stress".into(),
        },
    };
    for i in 0..=n {
        let t = if i == n {
            t_end
        } else {
            t_end * i as f64 / n as f64
        };
        let p = path.point_at(t);
        d.t.push(t);
        d.eps.push(p.eps);
        d.sig.push(p.sigma);
    }
    Ok(d)
}

fn max_abs(xs: &[SymTensor]) -> f64 {
    xs.iter().fold(0.0_f64, |m, x| m.max(x.max_abs()))
}

/// Ground-truth `(gamma, gamma_dot)` of `path` at the dataset's sample
/// times, in the dataset's (possibly dimensionless) units.
pub fn multiplier_series(path: &RawPath, d: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let s = d.scaling;
    d.t.iter()
        .map(|&t| {
            let tp = if d.scaled { d.t0 + t * s.t_star } else { t };
            let g = path.state_at(tp)[12] / path.params.r;
            let gd = path.rate_at(tp)[12] / path.params.r;
            (g / s.eps_star, gd * s.t_star / s.eps_star)
        })
        .unzip()
}

/// Divides stress by `sigma* = max|sig|`, strain by `eps* = max|eps|`, and
/// maps time to `[0, 1]`. Rates are rescaled consistently.
pub fn nondimensionalize(d: &Dataset) -> Result<Dataset> {
    if d.scaled {
        return Ok(d.clone());
    }
    let sigma_star = max_abs(&d.sig);
    let eps_star = max_abs(&d.eps);
    if sigma_star == 0.0 {
        return Err(Error::DegenerateData("all stresses are zero".into()));
    }
    if eps_star == 0.0 {
        return Err(Error::DegenerateData("all strains are zero".into()));
    }
    let t0 = d.t[0];
    let t_star = d.t[d.t.len() - 1] - t0;
    if !(t_star > 0.0) {
        return Err(Error::DegenerateData("zero time span".into()));
    }
    let s = ScalingFactors {
        sigma_star,
        eps_star,
        e_star: sigma_star / eps_star,
        t_star,
    };
    let div = |xs: &[SymTensor], c: f64| xs.iter().map(|x| x.map(|v| v / c)).collect::<Vec<_>>();
    Ok(Dataset {
        t: d.t.iter().map(|t| (t - t0) / t_star).collect(),
        eps: div(&d.eps, eps_star),
        sig: div(&d.sig, sigma_star),
        eps_dot: div(&d.eps_dot, eps_star / t_star),
        sig_dot: div(&d.sig_dot, sigma_star / t_star),
        scaling: s,
        scaled: true,
        t0,
        meta: d.meta.clone(),
    })
}

/// Inverse of [`nondimensionalize`].
pub fn dimensionalize(d: &Dataset) -> Dataset {
    if !d.scaled {
        return d.clone();
    }
    let s = d.scaling;
    let scale = |xs: &[SymTensor], c: f64| xs.iter().map(|x| *x * c).collect::<Vec<_>>();
    Dataset {
        t: d.t.iter().map(|t| d.t0 + t * s.t_star).collect(),
        eps: scale(&d.eps, s.eps_star),
        sig: scale(&d.sig, s.sigma_star),
        eps_dot: scale(&d.eps_dot, s.eps_star / s.t_star),
        sig_dot: scale(&d.sig_dot, s.sigma_star / s.t_star),
        scaling: ScalingFactors::identity(),
        scaled: false,
        t0: 0.0,
        meta: d.meta.clone(),
    }
}

/// Second-order finite differences of a sampled signal: central in the
/// interior, one-sided three-point at the ends (nonuniform spacing allowed).
pub fn finite_diff(t: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    if n < 3 {
        return Err(Error::TooFewPoints { need: 3, got: n });
    }
    let mut d = vec![0.0; n];
    // three-point Lagrange derivative at x0 using nodes x0, x1, x2
    let lagr = |x: f64, xs: [f64; 3], ys: [f64; 3]| {
        let [a, b, c] = xs;
        ys[0] * (2.0 * x - b - c) / ((a - b) * (a - c))
            + ys[1] * (2.0 * x - a - c) / ((b - a) * (b - c))
            + ys[2] * (2.0 * x - a - b) / ((c - a) * (c - b))
    };
    d[0] = lagr(t[0], [t[0], t[1], t[2]], [y[0], y[1], y[2]]);
    for i in 1..n - 1 {
        d[i] = lagr(
            t[i],
            [t[i - 1], t[i], t[i + 1]],
            [y[i - 1], y[i], y[i + 1]],
        );
    }
    d[n - 1] = lagr(
        t[n - 1],
        [t[n - 3], t[n - 2], t[n - 1]],
        [y[n - 3], y[n - 2], y[n - 1]],
    );
    Ok(d)
}

fn tensor_rates(t: &[f64], xs: &[SymTensor]) -> Result<Vec<SymTensor>> {
    let mut out = vec![SymTensor::zero(); xs.len()];
    for k in 0..6 {
        let ch: Vec<f64> = xs.iter().map(|x| x.v[k]).collect();
        for (o, r) in out.iter_mut().zip(finite_diff(t, &ch)?) {
            o.v[k] = r;
        }
    }
    Ok(out)
}

/// Replaces the rates by finite differences of the stored fields.
pub fn finite_diff_rates(d: &Dataset) -> Result<Dataset> {
    let mut out = d.clone();
    out.eps_dot = tensor_rates(&d.t, &d.eps)?;
    out.sig_dot = tensor_rates(&d.t, &d.sig)?;
    Ok(out)
}

/// Adds Gaussian noise with standard deviation `level * max|channel|` to
/// every stress and strain channel, then recomputes rates.
pub fn add_noise(d: &Dataset, level: f64, seed: u64) -> Result<Dataset> {
    if !(level >= 0.0) {
        return Err(Error::Config(format!("noise level must be >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(d.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = d.clone();
    for field in [&mut out.eps, &mut out.sig] {
        for k in 0..6 {
            let amp = field.iter().fold(0.0_f64, |m, x| m.max(x.v[k].abs()));
            let sd = level * amp;
            for x in field.iter_mut() {
                let z: f64 = std_normal.sample(&mut rng);
                x.v[k] += sd * z;
            }
        }
    }
    out.meta.noise_level = level;
    out.meta.noise_seed = Some(seed);
    if out.len() >= 3 {
        out = finite_diff_rates(&out)?;
    }
    Ok(out)
}

/// Full pipeline from a path to a training-ready dataset.
pub fn prepare(path: &RawPath, points_per_cycle: usize, noise: f64, seed: u64) -> Result<Dataset> {
    let d = sample_dataset(path, points_per_cycle)?;
    let d = add_noise(&d, noise, seed)?;
    let d = nondimensionalize(&d)?;
    finite_diff_rates(&d)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema: String,
    scaled: bool,
    scaling: ScalingFactors,
    t0: f64,
    rows: usize,
    meta: DatasetMeta,
}

pub fn csv_columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["eps", "sig", "deps", "dsig"] {
        for c in CHANNEL_NAMES {
            cols.push(format!("{prefix}_{c}"));
        }
    }
    cols
}

/// Formats with 17 significant digits (exact round trip).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Path of the JSON sidecar belonging to a dataset CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn export(d: &Dataset, csv_path: &Path) -> Result<()> {
    d.check()?;
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_record(csv_columns())
        .map_err(|e| Error::Parse(e.to_string()))?;
    for i in 0..d.len() {
        let mut row = vec![fmt_f64(d.t[i])];
        for field in [&d.eps, &d.sig, &d.eps_dot, &d.sig_dot] {
            row.extend(field[i].v.iter().map(|x| fmt_f64(*x)));
        }
        w.write_record(&row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    let side = Sidecar {
        schema: DATASET_SCHEMA.into(),
        scaled: d.scaled,
        scaling: d.scaling,
        t0: d.t0,
        rows: d.len(),
        meta: d.meta.clone(),
    };
    let js = serde_json::to_string_pretty(&side)?;
    let sp = sidecar_path(csv_path);
    std::fs::write(&sp, js).map_err(|e| Error::io(&sp, e))?;
    Ok(())
}

pub fn import(csv_path: &Path) -> Result<Dataset> {
    let sp = sidecar_path(csv_path);
    let js = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let raw: serde_json::Value = serde_json::from_str(&js)?;
    let schema = raw
        .get("schema")
        .and_then(|s| s.as_str())
        .unwrap_or("<missing>")
        .to_string();
    if schema != DATASET_SCHEMA {
        return Err(Error::SchemaVersionMismatch {
            expected: DATASET_SCHEMA.into(),
            found: schema,
        });
    }
    let side: Sidecar = serde_json::from_value(raw)?;

    let mut r = csv::Reader::from_path(csv_path).map_err(|e| Error::Parse(e.to_string()))?;
    let header = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let cols = csv_columns();
    let mut pos = Vec::with_capacity(cols.len());
    for c in &cols {
        match index.get(c.as_str()) {
            Some(&i) => pos.push(i),
            None => return Err(Error::Parse(format!("missing column '{c}'"))),
        }
    }
    let mut d = Dataset {
        t: Vec::new(),
        eps: Vec::new(),
        sig: Vec::new(),
        eps_dot: Vec::new(),
        sig_dot: Vec::new(),
        scaling: side.scaling,
        scaled: side.scaled,
        t0: side.t0,
        meta: side.meta,
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let mut vals = Vec::with_capacity(cols.len());
        for (c, &i) in cols.iter().zip(&pos) {
            let s = rec
                .get(i)
                .ok_or_else(|| Error::Parse(format!("row {}: missing value for '{c}'", line + 1)))?;
            let v: f64 = s.trim().parse().map_err(|_| {
                Error::Parse(format!("row {}: bad number '{s}' in column '{c}'", line + 1))
            })?;
            vals.push(v);
        }
        let tensor = |k: usize| {
            let mut v = [0.0; 6];
            v.copy_from_slice(&vals[1 + 6 * k..7 + 6 * k]);
            SymTensor::new(v)
        };
        d.t.push(vals[0]);
        d.eps.push(tensor(0));
        d.sig.push(tensor(1));
        d.eps_dot.push(tensor(2));
        d.sig_dot.push(tensor(3));
    }
    if d.len() != side.rows {
        return Err(Error::Parse(format!(
            "sidecar declares {} rows, CSV has {}",
            side.rows,
            d.len()
        )));
    }
    d.check()?;
    Ok(d)
}
