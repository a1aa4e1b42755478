//! Fully connected tanh networks of scaled time, with the exact time
//! derivative of the output built alongside the forward pass.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Expr;
use crate::constitutive::{MaterialParams, ModelKind, ParamName};
use crate::error::{Error, Result};
use crate::forward::ScalingFactors;
use crate::scalar::Scalar;
use crate::tensor::SymTensor;

pub const CHECKPOINT_SCHEMA: &str = "ckpt-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(hidden_layers: usize, width: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim: 1,
            hidden_layers,
            width,
            output_dim,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != 1 {
            return Err(Error::SpecMismatch(format!(
                "input_dim must be 1 (scaled time), got {}",
                self.input_dim
            )));
        }
        if self.hidden_layers == 0 || self.width == 0 || self.output_dim == 0 {
            return Err(Error::SpecMismatch(format!("degenerate network shape {self:?}")));
        }
        if self.hidden_activation != Activation::Tanh || self.output_activation != Activation::Linear
        {
            return Err(Error::SpecMismatch(
                "only tanh hidden layers with a linear output are supported".into(),
            ));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            v.push((fan_in, self.width));
            fan_in = self.width;
        }
        v.push((fan_in, self.output_dim));
        v
    }

    /// Total parameter count `D`.
    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Glorot-uniform weights, zero biases. Layout per layer: row-major weights
/// (`fan_out` rows of `fan_in`) followed by biases.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(spec.num_params());
    for (fi, fo) in spec.layers() {
        let a = (6.0 / (fi + fo) as f64).sqrt();
        for _ in 0..fi * fo {
            theta.push(rng.random_range(-a..a));
        }
        theta.extend(std::iter::repeat_n(0.0, fo));
    }
    theta
}

/// Plain-float forward pass returning `(y, dy/dt)`.
pub fn eval_mlp(spec: &MlpSpec, theta: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let layers = spec.layers();
    let mut off = 0;
    let mut h = vec![t];
    let mut dh = vec![1.0];
    for (l, &(fi, fo)) in layers.iter().enumerate() {
        let w = &theta[off..off + fi * fo];
        let b = &theta[off + fi * fo..off + fi * fo + fo];
        off += fi * fo + fo;
        let mut z = vec![0.0; fo];
        let mut dz = vec![0.0; fo];
        for j in 0..fo {
            let row = &w[j * fi..(j + 1) * fi];
            z[j] = b[j] + row.iter().zip(&h).map(|(a, x)| a * x).sum::<f64>();
            dz[j] = row.iter().zip(&dh).map(|(a, x)| a * x).sum::<f64>();
        }
        if l + 1 == layers.len() {
            return (z, dz);
        }
        h = z.iter().map(|x| x.tanh()).collect();
        dh = h.iter().zip(&dz).map(|(y, d)| (1.0 - y * y) * d).collect();
    }
    unreachable!("network has an output layer")
}

/// Tape-recorded forward pass at constant input `t`: returns the outputs and
/// their exact time derivatives, both differentiable in `theta`.
///
/// `theta` must be a contiguous block of tape variables (as produced by
/// [`crate::autodiff::Tape::vars`]) for the fused dense kernels to apply.
pub fn forward_with_tderiv(spec: &MlpSpec, theta: &[Expr], t: f64) -> (Vec<Expr>, Vec<Expr>) {
    let layers = spec.layers();
    let (fi0, fo0) = layers[0];
    debug_assert_eq!(fi0, 1);
    let w0 = &theta[..fo0];
    let b0 = &theta[fo0..2 * fo0];
    let mut off = 2 * fo0;

    // first layer: z = w t + b, dz/dt = w
    let mut z: Vec<Expr> = w0
        .iter()
        .zip(b0)
        .map(|(w, b)| w.custom_binary(*b, w.value() * t + b.value(), t, 1.0))
        .collect();
    let mut dz: Vec<Expr> = w0.to_vec();
    if layers.len() == 1 {
        return (z, dz);
    }
    for &(fi, fo) in layers.iter().skip(1) {
        // activation of the previous layer, recorded in contiguous runs
        let h: Vec<Expr> = z.iter().map(|x| x.tanh()).collect();
        let dh: Vec<Expr> = h
            .iter()
            .zip(z.iter().zip(&dz))
            .map(|(hy, (zx, d))| {
                let y = hy.value();
                let s = 1.0 - y * y;
                zx.custom_binary(*d, s * d.value(), -2.0 * y * s * d.value(), s)
            })
            .collect();
        let w = &theta[off..off + fi * fo];
        let b = &theta[off + fi * fo..off + fi * fo + fo];
        off += fi * fo + fo;
        z = (0..fo)
            .map(|j| Expr::affine(&w[j * fi..(j + 1) * fi], &h, b[j]))
            .collect();
        dz = (0..fo)
            .map(|j| Expr::dot(&w[j * fi..(j + 1) * fi], &dh))
            .collect();
    }
    (z, dz)
}

/// Forward pass over many inputs at once, keeping what the reverse pass
/// needs. Outputs are stored row-major, `output_dim` per input.
#[derive(Debug, Clone)]
pub struct BatchForward {
    ts: Vec<f64>,
    /// Per hidden layer: activations and tangents of pre-activations.
    h: Vec<Vec<f64>>,
    dz: Vec<Vec<f64>>,
    dh: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

/// Batched [`eval_mlp`] for the inputs `ts`.
pub fn forward_batch(spec: &MlpSpec, theta: &[f64], ts: &[f64]) -> BatchForward {
    let n = ts.len();
    let layers = spec.layers();
    let nl = layers.len();
    let mut out = BatchForward {
        ts: ts.to_vec(),
        h: Vec::with_capacity(nl - 1),
        dz: Vec::with_capacity(nl - 1),
        dh: Vec::with_capacity(nl - 1),
        y: Vec::new(),
        dy: Vec::new(),
    };
    let mut off = 0;
    for (l, &(fi, fo)) in layers.iter().enumerate() {
        let w = &theta[off..off + fi * fo];
        let b = &theta[off + fi * fo..off + fi * fo + fo];
        off += fi * fo + fo;
        let mut z = vec![0.0; n * fo];
        let mut dz = vec![0.0; n * fo];
        if l == 0 {
            for (i, &t) in ts.iter().enumerate() {
                for j in 0..fo {
                    z[i * fo + j] = w[j] * t + b[j];
                    dz[i * fo + j] = w[j];
                }
            }
        } else {
            let hp = &out.h[l - 1];
            let dhp = &out.dh[l - 1];
            for i in 0..n {
                let x = &hp[i * fi..(i + 1) * fi];
                let dx = &dhp[i * fi..(i + 1) * fi];
                for j in 0..fo {
                    let row = &w[j * fi..(j + 1) * fi];
                    let mut acc = b[j];
                    let mut dacc = 0.0;
                    for k in 0..fi {
                        acc += row[k] * x[k];
                        dacc += row[k] * dx[k];
                    }
                    z[i * fo + j] = acc;
                    dz[i * fo + j] = dacc;
                }
            }
        }
        if l + 1 == nl {
            out.y = z;
            out.dy = dz;
        } else {
            let h: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let dh: Vec<f64> = h.iter().zip(&dz).map(|(y, d)| (1.0 - y * y) * d).collect();
            out.h.push(h);
            out.dz.push(dz);
            out.dh.push(dh);
        }
    }
    out
}

/// Reverse pass of [`forward_batch`]: gradient of `sum gy.y + gdy.dy` with
/// respect to `theta`.
pub fn backward_batch(
    spec: &MlpSpec,
    theta: &[f64],
    fwd: &BatchForward,
    gy: &[f64],
    gdy: &[f64],
) -> Vec<f64> {
    let n = fwd.ts.len();
    let layers = spec.layers();
    let nl = layers.len();
    let mut offsets = Vec::with_capacity(nl);
    let mut off = 0;
    for &(fi, fo) in &layers {
        offsets.push(off);
        off += fi * fo + fo;
    }
    let mut grad = vec![0.0; off];
    // adjoints of the current layer's pre-activation and its tangent
    let mut gz = gy.to_vec();
    let mut gdz = gdy.to_vec();
    for l in (0..nl).rev() {
        let (fi, fo) = layers[l];
        let o = offsets[l];
        let w = &theta[o..o + fi * fo];
        let (gw, gb) = grad[o..o + fi * fo + fo].split_at_mut(fi * fo);
        if l == 0 {
            for (i, &t) in fwd.ts.iter().enumerate() {
                for j in 0..fo {
                    let (a, da) = (gz[i * fo + j], gdz[i * fo + j]);
                    gw[j] += a * t + da;
                    gb[j] += a;
                }
            }
            break;
        }
        let hp = &fwd.h[l - 1];
        let dhp = &fwd.dh[l - 1];
        let mut gh = vec![0.0; n * fi];
        let mut gdh = vec![0.0; n * fi];
        for i in 0..n {
            let x = &hp[i * fi..(i + 1) * fi];
            let dx = &dhp[i * fi..(i + 1) * fi];
            let ghi = &mut gh[i * fi..(i + 1) * fi];
            let gdhi = &mut gdh[i * fi..(i + 1) * fi];
            for j in 0..fo {
                let (a, da) = (gz[i * fo + j], gdz[i * fo + j]);
                if a == 0.0 && da == 0.0 {
                    continue;
                }
                gb[j] += a;
                let row = &w[j * fi..(j + 1) * fi];
                let grow = &mut gw[j * fi..(j + 1) * fi];
                for k in 0..fi {
                    grow[k] += a * x[k] + da * dx[k];
                    ghi[k] += row[k] * a;
                    gdhi[k] += row[k] * da;
                }
            }
        }
        // through h = tanh(z), dh = (1 - h^2) dz
        let h = &fwd.h[l - 1];
        let dz = &fwd.dz[l - 1];
        gz = vec![0.0; n * fi];
        gdz = vec![0.0; n * fi];
        for q in 0..n * fi {
            let s = 1.0 - h[q] * h[q];
            let gh_total = gh[q] - 2.0 * h[q] * dz[q] * gdh[q];
            gz[q] = gh_total * s;
            gdz[q] = gdh[q] * s;
        }
    }
    grad
}

/// Projects a 6-vector network output onto deviatoric tensors.
pub fn deviatoric_output<S: Scalar>(y: &[S]) -> SymTensor<S> {
    SymTensor::new([y[0], y[1], y[2], y[3], y[4], y[5]]).dev()
}

/// Upper bound on the Lipschitz constant of `t -> y` (tanh is 1-Lipschitz,
/// spectral norms are bounded by Frobenius norms).
pub fn lipschitz_bound(spec: &MlpSpec, theta: &[f64]) -> f64 {
    let mut off = 0;
    let mut l = 1.0;
    for (fi, fo) in spec.layers() {
        let fro: f64 = theta[off..off + fi * fo].iter().map(|w| w * w).sum::<f64>().sqrt();
        l *= fro;
        off += fi * fo + fo;
    }
    l
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn encode(v: &[f64]) -> String {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        B64.encode(bytes)
    }

    pub fn decode(s: &str) -> std::result::Result<Vec<f64>, String> {
        let bytes = B64.decode(s).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err(format!("payload length {} is not a multiple of 8", bytes.len()));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let s = String::deserialize(d)?;
        decode(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetState {
    pub spec: MlpSpec,
    #[serde(with = "b64")]
    pub theta: Vec<f64>,
}

/// Trained state: networks, physical material parameters and the scaling
/// of the dataset they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub model_kind: ModelKind,
    pub gamma: NetState,
    pub beta: Option<NetState>,
    pub params: MaterialParams,
    pub trainable: Vec<ParamName>,
    pub scaling: ScalingFactors,
    pub config_digest: String,
    pub payload_sha256: String,
}

impl Checkpoint {
    pub fn new(
        model_kind: ModelKind,
        gamma: NetState,
        beta: Option<NetState>,
        params: MaterialParams,
        trainable: Vec<ParamName>,
        scaling: ScalingFactors,
        config_digest: String,
    ) -> Self {
        let mut c = Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            model_kind,
            gamma,
            beta,
            params,
            trainable,
            scaling,
            config_digest,
            payload_sha256: String::new(),
        };
        c.payload_sha256 = c.payload_digest();
        c
    }

    fn payload_digest(&self) -> String {
        let mut h = Sha256::new();
        for net in std::iter::once(&self.gamma).chain(self.beta.as_ref()) {
            for x in &net.theta {
                h.update(x.to_le_bytes());
            }
        }
        for x in self.params.values() {
            h.update(x.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let js = serde_json::to_string_pretty(self)?;
        std::fs::write(path, js).map_err(|e| Error::io(path, e))
    }

    /// Loads and verifies integrity and, if given, the expected network shape.
    pub fn load(path: &Path, expect_gamma: Option<&MlpSpec>) -> Result<Checkpoint> {
        let js = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: serde_json::Value =
            serde_json::from_str(&js).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let schema = raw.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
        if schema != CHECKPOINT_SCHEMA {
            return Err(Error::SchemaVersionMismatch {
                expected: CHECKPOINT_SCHEMA.into(),
                found: schema.into(),
            });
        }
        let c: Checkpoint =
            serde_json::from_value(raw).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        for net in std::iter::once(&c.gamma).chain(c.beta.as_ref()) {
            if net.theta.len() != net.spec.num_params() {
                return Err(Error::CorruptCheckpoint(format!(
                    "network has {} parameters, its spec needs {}",
                    net.theta.len(),
                    net.spec.num_params()
                )));
            }
        }
        if c.payload_digest() != c.payload_sha256 {
            return Err(Error::CorruptCheckpoint("payload digest mismatch".into()));
        }
        if let Some(spec) = expect_gamma {
            c.check_spec(spec)?;
        }
        Ok(c)
    }

    pub fn check_spec(&self, spec: &MlpSpec) -> Result<()> {
        if &self.gamma.spec != spec {
            return Err(Error::SpecMismatch(format!(
                "checkpoint network {}x{} (out {}), expected {}x{} (out {})",
                self.gamma.spec.hidden_layers,
                self.gamma.spec.width,
                self.gamma.spec.output_dim,
                spec.hidden_layers,
                spec.width,
                spec.output_dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn glorot_bounds_and_determinism() {
        let spec = MlpSpec::new(8, 20, 1);
        let a = init_mlp(&spec, 3);
        assert_eq!(a, init_mlp(&spec, 3));
        assert_ne!(a, init_mlp(&spec, 4));
        assert_eq!(a.len(), spec.num_params());
        assert_eq!(spec.num_params(), 20 + 20 + 7 * (400 + 20) + 21);
        let mut off = 0;
        for (fi, fo) in spec.layers() {
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            assert!(a[off..off + fi * fo].iter().all(|w| w.abs() <= bound));
            assert!(a[off + fi * fo..off + fi * fo + fo].iter().all(|b| *b == 0.0));
            off += fi * fo + fo;
        }
    }

    #[test]
    fn zero_network_is_zero() {
        let spec = MlpSpec::new(2, 3, 1);
        let theta = vec![0.0; spec.num_params()];
        let (y, dy) = eval_mlp(&spec, &theta, 0.7);
        assert_eq!((y[0], dy[0]), (0.0, 0.0));
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let spec = MlpSpec::new(3, 5, 2);
        let theta = init_mlp(&spec, 11);
        let tape = Tape::new();
        let th = tape.vars(&theta);
        for t in [0.0, 0.3, 1.0] {
            let (y, dy) = forward_with_tderiv(&spec, &th, t);
            let (y0, dy0) = eval_mlp(&spec, &theta, t);
            for k in 0..2 {
                assert!((y[k].value() - y0[k]).abs() < 1e-14);
                assert!((dy[k].value() - dy0[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tderiv_matches_time_differences() {
        let spec = MlpSpec::new(8, 20, 1);
        for seed in 0..20 {
            let theta = init_mlp(&spec, seed);
            let t = (seed as f64 * 0.37) % 1.0;
            let h = 1e-6;
            let (_, dy) = eval_mlp(&spec, &theta, t);
            let fd = (eval_mlp(&spec, &theta, t + h).0[0] - eval_mlp(&spec, &theta, t - h).0[0])
                / (2.0 * h);
            assert!(
                (dy[0] - fd).abs() <= 1e-6 * dy[0].abs().max(1e-3),
                "seed {seed}: {} vs {fd}",
                dy[0]
            );
        }
    }

    #[test]
    fn tderiv_gradient_matches_finite_differences() {
        let spec = MlpSpec::new(3, 4, 1);
        let theta = init_mlp(&spec, 5);
        let f = |th: &[Expr]| {
            let (y, dy) = forward_with_tderiv(&spec, th, 0.4);
            y[0] * 0.3 + dy[0] * dy[0]
        };
        let err = crate::autodiff::grad_check(f, &theta, 1e-6).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn batch_passes_match_the_tape() {
        let spec = MlpSpec::new(3, 6, 2);
        let theta = init_mlp(&spec, 9);
        let ts = [0.0, 0.25, 0.6, 1.0];
        let gy = [0.3, -1.0, 0.2, 0.5, -0.7, 0.1, 1.5, 0.0];
        let gdy = [0.0, 0.4, -0.3, 0.9, 0.2, 0.2, -1.0, 0.6];
        let fwd = forward_batch(&spec, &theta, &ts);
        let grad = backward_batch(&spec, &theta, &fwd, &gy, &gdy);

        let tape = Tape::new();
        let th = tape.vars(&theta);
        let mut terms = Vec::new();
        for (i, &t) in ts.iter().enumerate() {
            let (y, dy) = forward_with_tderiv(&spec, &th, t);
            let (y0, dy0) = eval_mlp(&spec, &theta, t);
            for k in 0..2 {
                assert!((fwd.y[i * 2 + k] - y0[k]).abs() < 1e-15);
                assert!((fwd.dy[i * 2 + k] - dy0[k]).abs() < 1e-15);
                terms.push(y[k] * gy[i * 2 + k] + dy[k] * gdy[i * 2 + k]);
            }
        }
        let total = Expr::sum(&terms);
        let reference = tape.backward(total, &th).unwrap();
        for (a, b) in grad.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn lipschitz_bound_holds() {
        let spec = MlpSpec::new(4, 6, 1);
        let theta = init_mlp(&spec, 2);
        let l = lipschitz_bound(&spec, &theta);
        for k in 0..50 {
            let t1 = k as f64 / 50.0;
            let t2 = (k as f64 + 0.7) / 50.0;
            let d = (eval_mlp(&spec, &theta, t1).0[0] - eval_mlp(&spec, &theta, t2).0[0]).abs();
            assert!(d <= l * (t1 - t2).abs() + 1e-15);
        }
    }

    #[test]
    fn single_linear_layer_derivative() {
        let spec = MlpSpec::new(1, 1, 1);
        let theta = vec![0.5, 0.0, 2.0, 0.1];
        let (y, dy) = eval_mlp(&spec, &theta, 0.2);
        let h = (0.5f64 * 0.2).tanh();
        assert!((y[0] - (2.0 * h + 0.1)).abs() < 1e-15);
        assert!((dy[0] - 2.0 * (1.0 - h * h) * 0.5).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let spec = MlpSpec::new(8, 20, 1);
        let theta = init_mlp(&spec, 1);
        let ck = Checkpoint::new(
            ModelKind::Vmih,
            NetState { spec: spec.clone(), theta: theta.clone() },
            None,
            MaterialParams::vmih(),
            ModelKind::Vmih.default_trainable(),
            ScalingFactors::identity(),
            "abc".into(),
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p, Some(&spec)).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.gamma.theta, theta);
        assert!(matches!(
            Checkpoint::load(&p, Some(&MlpSpec::new(8, 10, 1))),
            Err(Error::SpecMismatch(_))
        ));

        let text = std::fs::read_to_string(&p).unwrap();
        let tampered = text.replacen("\"kappa\": 111110.0", "\"kappa\": 1.0", 1);
        assert_ne!(tampered, text);
        std::fs::write(&p, tampered).unwrap();
        assert!(matches!(Checkpoint::load(&p, None), Err(Error::CorruptCheckpoint(_))));
    }

    proptest::proptest! {
        #[test]
        fn checkpoint_params_survive_save_and_load(
            v in proptest::collection::vec(1e-6f64..1e6, 4),
        ) {
            let spec = MlpSpec::new(1, 2, 1);
            let mut params = MaterialParams::vmih();
            params.kappa = v[0];
            params.mu = v[1];
            params.sigma_y0 = v[2];
            params.kbar = v[3];
            let ck = Checkpoint::new(
                ModelKind::Vmih,
                NetState { spec: spec.clone(), theta: init_mlp(&spec, 0) },
                None,
                params,
                ModelKind::Vmih.default_trainable(),
                ScalingFactors::identity(),
                String::new(),
            );
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("ck.json");
            ck.save(&p).unwrap();
            proptest::prop_assert_eq!(Checkpoint::load(&p, None).unwrap(), ck);
        }
    }
}
