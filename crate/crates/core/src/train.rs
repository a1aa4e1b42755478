//! Full-batch Adam training of the multiplier networks and the trainable
//! material parameters.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Expr, Tape};
use crate::constitutive::{MaterialParams, ModelKind, ParamName};
use crate::error::{Error, Result};
use crate::forward::{Dataset, ScalingFactors};
use crate::network::{
    backward_batch, deviatoric_output, eval_mlp, forward_batch, forward_with_tderiv, init_mlp,
    Checkpoint, MlpSpec, NetState,
};
use crate::pinn::{
    assemble_losses, composite_loss, LossConfig, LossTerm, NetSample, ResidualContext, TermName,
};
use crate::scalar::Scalar;

pub const REPORT_SCHEMA: &str = "rep-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Scratch,
    Transfer,
    Discovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub max_epochs: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub seed: u64,
    /// `None` selects the model kind's default set.
    pub trainable: Option<Vec<ParamName>>,
    pub loss: LossConfig,
    pub network: MlpSpec,
    pub adam: AdamConfig,
    /// Dimensionless starting value of every trainable parameter (scratch).
    pub init_value: f64,
    pub log_every: usize,
    /// Abort when the loss exceeds this multiple of the initial loss.
    pub diverge_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Scratch,
            max_epochs: 50_000,
            lr_initial: 1e-3,
            lr_final: 5e-5,
            early_stop_patience: 2000,
            early_stop_min_delta: 1e-8,
            seed: 0,
            trainable: None,
            loss: LossConfig::default(),
            network: MlpSpec::new(8, 20, 1),
            adam: AdamConfig::default(),
            init_value: 0.5,
            log_every: 50,
            diverge_factor: 1e6,
        }
    }
}

impl TrainConfig {
    /// Defaults for a mode and model kind: kinematic scratch runs use more
    /// epochs at a smaller rate; transfer runs 1000 epochs, discovery 5000.
    pub fn for_mode(mode: TrainMode, kind: ModelKind) -> Self {
        let mut c = TrainConfig {
            mode,
            ..Self::default()
        };
        match mode {
            TrainMode::Scratch => {
                if kind.kinematic_on() {
                    c.max_epochs = 100_000;
                    c.lr_initial = 5e-4;
                }
            }
            TrainMode::Transfer => c.max_epochs = 1000,
            TrainMode::Discovery => c.max_epochs = 5000,
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if !(self.lr_final > 0.0 && self.lr_initial >= self.lr_final) {
            return Err(Error::Config(format!(
                "need lr_initial >= lr_final > 0, got {} and {}",
                self.lr_initial, self.lr_final
            )));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        if !(self.adam.beta1 >= 0.0 && self.adam.beta1 < 1.0)
            || !(self.adam.beta2 >= 0.0 && self.adam.beta2 < 1.0)
            || !(self.adam.eps > 0.0)
        {
            return Err(Error::Config(format!("invalid Adam settings {:?}", self.adam)));
        }
        if self.network.output_dim != 1 {
            return Err(Error::Config("the multiplier network has one output".into()));
        }
        self.network.validate()?;
        self.loss.validate()
    }

    pub fn trainable_for(&self, kind: ModelKind) -> Vec<ParamName> {
        let mut v = self.trainable.clone().unwrap_or_else(|| kind.default_trainable());
        v.sort();
        v.dedup();
        v
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let js = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(js))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic per-purpose seed derived from a run seed.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// `lr_initial (lr_final/lr_initial)^(epoch/max_epochs)`, held at
/// `lr_final` afterwards.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let frac = (epoch as f64 / cfg.max_epochs as f64).min(1.0);
    cfg.lr_initial * (cfg.lr_final / cfg.lr_initial).powf(frac)
}

/// Adam moments for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected update. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64, epoch: usize) -> Result<()> {
        if x.len() != grad.len() || x.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: grad.len(),
            });
        }
        if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                epoch,
                terms: format!("gradient coordinate {k} is {}", grad[k]),
            });
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

/// Flat layout `[theta_gamma | theta_beta | trainable params]`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub gamma: MlpSpec,
    pub beta: Option<MlpSpec>,
    pub trainable: Vec<ParamName>,
}

impl Layout {
    pub fn new(kind: ModelKind, spec: &MlpSpec, trainable: Vec<ParamName>) -> Self {
        let beta = kind.kinematic_on().then(|| MlpSpec {
            output_dim: 6,
            ..spec.clone()
        });
        Layout {
            gamma: spec.clone(),
            beta,
            trainable,
        }
    }

    pub fn n_gamma(&self) -> usize {
        self.gamma.num_params()
    }

    pub fn n_beta(&self) -> usize {
        self.beta.as_ref().map_or(0, |b| b.num_params())
    }

    pub fn len(&self) -> usize {
        self.n_gamma() + self.n_beta() + self.trainable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split<'x, T>(&self, x: &'x [T]) -> (&'x [T], &'x [T], &'x [T]) {
        let (g, rest) = x.split_at(self.n_gamma());
        let (b, p) = rest.split_at(self.n_beta());
        (g, b, p)
    }
}

/// The composite loss as a function of the flat vector.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub data: &'a Dataset,
    pub kind: ModelKind,
    pub loss: LossConfig,
    pub layout: Layout,
    /// Dimensionless values used for parameters that are not trained.
    pub base: MaterialParams,
}

impl<'a> Problem<'a> {
    pub fn new(
        data: &'a Dataset,
        kind: ModelKind,
        loss: LossConfig,
        layout: Layout,
        base: MaterialParams,
    ) -> Result<Self> {
        if !data.scaled {
            return Err(Error::IncompleteContext(
                "training needs a dimensionless dataset".into(),
            ));
        }
        Ok(Problem {
            data,
            kind,
            loss,
            layout,
            base,
        })
    }

    pub fn params<S: Scalar>(&self, x: &[S]) -> MaterialParams<S> {
        let (_, _, p) = self.layout.split(x);
        let mut out = self.base.lift::<S>();
        for (name, v) in self.layout.trainable.iter().zip(p) {
            out.set(*name, *v);
        }
        out
    }

    fn beta_samples<S: Scalar>(
        &self,
        beta: Option<(Vec<S>, Vec<S>)>,
    ) -> Option<(crate::tensor::SymTensor<S>, crate::tensor::SymTensor<S>)> {
        beta.map(|(y, dy)| (deviatoric_output(&y), deviatoric_output(&dy)))
    }

    /// Network outputs on the tape.
    pub fn net_samples(&self, x: &[Expr]) -> Vec<NetSample<Expr>> {
        let (tg, tb, _) = self.layout.split(x);
        self.data
            .t
            .iter()
            .map(|&t| {
                let (y, dy) = forward_with_tderiv(&self.layout.gamma, tg, t);
                let beta = self
                    .layout
                    .beta
                    .as_ref()
                    .map(|spec| forward_with_tderiv(spec, tb, t));
                NetSample {
                    gamma: y[0],
                    gamma_dot: dy[0],
                    beta: self.beta_samples(beta),
                }
            })
            .collect()
    }

    /// Network outputs in plain floats.
    pub fn net_samples_f64(&self, x: &[f64]) -> Vec<NetSample<f64>> {
        let (tg, tb, _) = self.layout.split(x);
        self.data
            .t
            .iter()
            .map(|&t| {
                let (y, dy) = eval_mlp(&self.layout.gamma, tg, t);
                let beta = self.layout.beta.as_ref().map(|spec| eval_mlp(spec, tb, t));
                NetSample {
                    gamma: y[0],
                    gamma_dot: dy[0],
                    beta: self.beta_samples(beta),
                }
            })
            .collect()
    }

    pub fn terms(&self, x: &[Expr]) -> Result<Vec<LossTerm<Expr>>> {
        let ctx = ResidualContext {
            data: self.data,
            net: self.net_samples(x),
            params: self.params(x),
        };
        assemble_losses(&ctx, self.kind, &self.loss)
    }

    pub fn terms_f64(&self, x: &[f64]) -> Result<Vec<LossTerm<f64>>> {
        let ctx = ResidualContext {
            data: self.data,
            net: self.net_samples_f64(x),
            params: self.params(x),
        };
        assemble_losses(&ctx, self.kind, &self.loss)
    }

    /// Composite loss on the tape; for gradient checks.
    pub fn loss_expr(&self, x: &[Expr]) -> Result<Expr> {
        Ok(composite_loss(&self.terms(x)?))
    }

    /// Loss terms and gradient at `x`. The networks run as batched dense
    /// passes outside the tape; only the residuals are recorded, with the
    /// network outputs as leaves, and their adjoints are pulled back through
    /// the networks by hand.
    pub fn gradient(&self, x: &[f64]) -> Result<(Vec<LossTerm<f64>>, f64, Vec<f64>)> {
        let (tg, tb, tp) = self.layout.split(x);
        let ts = &self.data.t;
        let fg = forward_batch(&self.layout.gamma, tg, ts);
        let fb = self
            .layout
            .beta
            .as_ref()
            .map(|spec| forward_batch(spec, tb, ts));

        let tape = Tape::new();
        let g = tape.vars(&fg.y);
        let gd = tape.vars(&fg.dy);
        let bv = fb.as_ref().map(|f| (tape.vars(&f.y), tape.vars(&f.dy)));
        let pv = tape.vars(tp);
        let mut params = self.base.lift::<Expr>();
        for (name, v) in self.layout.trainable.iter().zip(&pv) {
            params.set(*name, *v);
        }
        let net = (0..ts.len())
            .map(|i| NetSample {
                gamma: g[i],
                gamma_dot: gd[i],
                beta: bv.as_ref().map(|(b, bd)| {
                    (
                        deviatoric_output(&b[6 * i..6 * i + 6]),
                        deviatoric_output(&bd[6 * i..6 * i + 6]),
                    )
                }),
            })
            .collect();
        let ctx = ResidualContext {
            data: self.data,
            net,
            params,
        };
        let terms = assemble_losses(&ctx, self.kind, &self.loss)?;
        let total = composite_loss(&terms);
        let adj = tape.adjoints(total)?;
        let pull = |v: &[Expr]| v.iter().map(|e| adj.get(*e)).collect::<Vec<f64>>();

        let mut grad = backward_batch(&self.layout.gamma, tg, &fg, &pull(&g), &pull(&gd));
        if let (Some(spec), Some(f), Some((b, bd))) = (&self.layout.beta, &fb, &bv) {
            grad.extend(backward_batch(spec, tb, f, &pull(b), &pull(bd)));
        }
        grad.extend(pull(&pv));
        let values = terms
            .iter()
            .map(|t| LossTerm {
                name: t.name,
                weight: t.weight,
                value: t.value.value(),
            })
            .collect();
        Ok((values, total.value(), grad))
    }

    /// Gradient recorded entirely on the tape; reference for
    /// [`Problem::gradient`].
    pub fn gradient_taped(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let tape = Tape::new();
        let xs = tape.vars(x);
        let total = self.loss_expr(&xs)?;
        let adj = tape.adjoints(total)?;
        Ok((total.value(), xs.iter().map(|e| adj.get(*e)).collect()))
    }

    /// Complementarity health of the state `x` on the training samples.
    pub fn kkt(&self, x: &[f64]) -> Result<KktDiagnostics> {
        let net = self.net_samples_f64(x);
        let ctx = ResidualContext {
            data: self.data,
            net,
            params: self.params(x),
        };
        let terms = assemble_losses(&ctx, self.kind, &self.loss)?;
        let get = |n: TermName| terms.iter().find(|t| t.name == n).map_or(0.0, |t| t.value);
        let n = self.data.len() as f64;
        let mut fg = 0.0;
        for i in 0..self.data.len() {
            let st = ctx.sample(i, self.kind);
            fg += (st.f * ctx.net[i].gamma_dot).abs();
        }
        let gam: Vec<f64> = ctx.net.iter().map(|s| s.gamma).collect();
        let mut peak = f64::NEG_INFINITY;
        let mut drop: f64 = 0.0;
        for &g in &gam {
            peak = peak.max(g);
            drop = drop.max(peak - g);
        }
        let last = *gam.last().unwrap_or(&0.0);
        Ok(KktDiagnostics {
            mean_abs_f_gdot: fg / n,
            f_violation: get(TermName::FNonpos),
            gdot_violation: get(TermName::GdotNonneg),
            gamma_max_drop: drop,
            gamma_final: last,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktDiagnostics {
    /// `mean |F gamma_dot|`.
    pub mean_abs_f_gdot: f64,
    /// Gated mean squared violation of `F <= 0`.
    pub f_violation: f64,
    /// Gated mean squared violation of `gamma_dot >= 0`.
    pub gdot_violation: f64,
    /// Largest decrease of `gamma` below its running maximum.
    pub gamma_max_drop: f64,
    pub gamma_final: f64,
}

impl KktDiagnostics {
    pub fn satisfied(&self, tol: f64, monotone_rel: f64) -> bool {
        self.mean_abs_f_gdot < tol
            && self.f_violation < tol
            && self.gdot_violation < tol
            && self.gamma_max_drop <= monotone_rel * self.gamma_final.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub terms: BTreeMap<TermName, f64>,
    /// Physical values of the trainable parameters.
    pub params: BTreeMap<ParamName, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema: String,
    pub model_kind: ModelKind,
    pub mode: TrainMode,
    pub trainable: Vec<ParamName>,
    pub final_losses: BTreeMap<TermName, f64>,
    pub final_total: f64,
    pub trajectories: Vec<TrajectoryPoint>,
    pub recovered: MaterialParams,
    pub truth: Option<MaterialParams>,
    pub relative_errors: Option<BTreeMap<ParamName, f64>>,
    pub kkt: KktDiagnostics,
    pub scaling: ScalingFactors,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
    pub config_digest: String,
}

impl TrainReport {
    pub fn max_relative_error(&self) -> Option<f64> {
        self.relative_errors
            .as_ref()
            .map(|m| m.values().fold(0.0_f64, |a, &b| a.max(b)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let js = serde_json::to_string_pretty(self)?;
        std::fs::write(path, js).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainReport> {
        let js = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: serde_json::Value = serde_json::from_str(&js)?;
        let schema = raw.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
        if schema != REPORT_SCHEMA {
            return Err(Error::SchemaVersionMismatch {
                expected: REPORT_SCHEMA.into(),
                found: schema.into(),
            });
        }
        Ok(serde_json::from_value(raw)?)
    }

    /// Training log: epoch, total, per-term losses, lr, trainable parameters.
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let term_names: Vec<TermName> = self.final_losses.keys().copied().collect();
        let mut header = vec!["epoch".to_string(), "total".to_string()];
        header.extend(term_names.iter().map(|t| t.as_str().to_string()));
        header.push("lr".into());
        header.extend(self.trainable.iter().map(|p| p.as_str().to_string()));
        w.write_record(&header).map_err(io)?;
        for tp in &self.trajectories {
            let mut row = vec![tp.epoch.to_string(), fmt17(tp.total)];
            row.extend(term_names.iter().map(|t| fmt17(tp.terms.get(t).copied().unwrap_or(0.0))));
            row.push(fmt17(tp.lr));
            row.extend(self.trainable.iter().map(|p| fmt17(tp.params[p])));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Fixed 17-significant-digit formatting for reproducible CSV output.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `|est - true|/|true|` per parameter; for a zero truth, `|est|/scale`.
pub fn relative_errors(
    estimated: &MaterialParams,
    truth: &MaterialParams,
    scales: &MaterialParams,
    names: &[ParamName],
) -> BTreeMap<ParamName, f64> {
    names
        .iter()
        .map(|&p| {
            let (e, t) = (estimated.get(p), truth.get(p));
            let err = if t == 0.0 {
                e.abs() / scales.get(p)
            } else {
                (e - t).abs() / t.abs()
            };
            (p, err)
        })
        .collect()
}

/// Scale factor of each parameter for a dataset scaling.
pub fn param_scales(s: &ScalingFactors) -> MaterialParams {
    MaterialParams::<f64>::default().map(|p, _| p.scale(s.sigma_star, s.eps_star))
}

/// Dimensionless starting parameters for scratch training: trainable
/// entries at `init_value`; the rest at neutral values.
fn scratch_base(trainable: &[ParamName], init_value: f64) -> MaterialParams {
    let mut p = MaterialParams {
        kappa: init_value,
        mu: init_value,
        sigma_y0: init_value,
        kbar: 0.0,
        kbar2: 0.0,
        hbar: 0.0,
        m: 0.0,
        alpha_s: 1.0,
        r: 1.0,
    };
    for &name in trainable {
        p.set(name, init_value);
    }
    p
}

/// Trains from scratch, or from `basis` for transfer and discovery runs.
pub fn fit(
    data: &Dataset,
    kind: ModelKind,
    cfg: &TrainConfig,
    basis: Option<&Checkpoint>,
) -> Result<(Checkpoint, TrainReport)> {
    fit_observed(data, kind, cfg, basis, &mut |_| {})
}

/// [`fit`] with a callback receiving every logged trajectory point.
pub fn fit_observed(
    data: &Dataset,
    kind: ModelKind,
    cfg: &TrainConfig,
    basis: Option<&Checkpoint>,
    observer: &mut dyn FnMut(&TrajectoryPoint),
) -> Result<(Checkpoint, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let trainable = cfg.trainable_for(kind);
    let layout = Layout::new(kind, &cfg.network, trainable.clone());
    let s = data.scaling;

    let (theta_g, theta_b, base) = match (cfg.mode, basis) {
        (TrainMode::Scratch, _) => (
            init_mlp(&layout.gamma, derive_seed(cfg.seed, "init-gamma")),
            layout
                .beta
                .as_ref()
                .map(|b| init_mlp(b, derive_seed(cfg.seed, "init-beta"))),
            scratch_base(&trainable, cfg.init_value),
        ),
        (_, None) => {
            return Err(Error::Config(
                "transfer and discovery runs need a basis checkpoint".into(),
            ))
        }
        (_, Some(ck)) => {
            ck.check_spec(&layout.gamma)?;
            let beta = match (&layout.beta, &ck.beta) {
                (Some(spec), Some(net)) => {
                    if &net.spec != spec {
                        return Err(Error::SpecMismatch(
                            "checkpoint beta network shape differs".into(),
                        ));
                    }
                    Some(net.theta.clone())
                }
                (Some(spec), None) => Some(init_mlp(spec, derive_seed(cfg.seed, "init-beta"))),
                (None, _) => None,
            };
            let base = ck.params.to_dimensionless(s.sigma_star, s.eps_star);
            (ck.gamma.theta.clone(), beta, base)
        }
    };
    let problem = Problem::new(data, kind, cfg.loss.clone(), layout, base)?;

    let mut x = theta_g;
    if let Some(b) = theta_b {
        x.extend(b);
    }
    x.extend(trainable.iter().map(|&p| base.get(p)));

    let to_phys = |x: &[f64]| problem.params(x).from_dimensionless(s.sigma_star, s.eps_star);
    let mut adam = Adam::new(x.len(), cfg.adam);
    let mut trajectories = Vec::new();
    let mut best = (f64::INFINITY, x.clone(), 0usize);
    let mut since_best = 0usize;
    let mut initial = None;
    let mut stop = StopReason::MaxEpochs;
    let mut epochs_run = 0;

    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(epoch, cfg);
        let (terms, total, grad) = problem.gradient(&x)?;
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let desc: Vec<String> = terms
                .iter()
                .map(|t| format!("{}={:e}", t.name, t.value))
                .collect();
            return Err(Error::NonFiniteGradient {
                epoch,
                terms: desc.join(", "),
            });
        }
        let initial = *initial.get_or_insert(total);
        if total > cfg.diverge_factor * initial {
            return Err(Error::Diverged {
                epoch,
                loss: total,
                initial,
            });
        }
        epochs_run = epoch + 1;
        if epoch % cfg.log_every == 0 || epoch + 1 == cfg.max_epochs {
            let phys = to_phys(&x);
            let point = TrajectoryPoint {
                epoch,
                lr,
                total,
                terms: terms.iter().map(|t| (t.name, t.value)).collect(),
                params: trainable.iter().map(|&p| (p, phys.get(p))).collect(),
            };
            observer(&point);
            trajectories.push(point);
        }
        if total < best.0 - cfg.early_stop_min_delta {
            best = (total, x.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                stop = StopReason::EarlyStop;
                break;
            }
        }
        adam.step(&mut x, &grad, lr, epoch)?;
    }

    let (_, xb, best_epoch) = best;
    let final_terms = problem.terms_f64(&xb)?;
    let recovered = to_phys(&xb);
    let truth = data.meta.true_params;
    let relative_errors =
        truth.map(|t| relative_errors(&recovered, &t, &param_scales(&s), &trainable));
    let kkt = problem.kkt(&xb)?;
    let (tg, tb, _) = problem.layout.split(&xb);
    let digest = cfg.digest();
    let ck = Checkpoint::new(
        kind,
        NetState {
            spec: problem.layout.gamma.clone(),
            theta: tg.to_vec(),
        },
        problem.layout.beta.as_ref().map(|spec| NetState {
            spec: spec.clone(),
            theta: tb.to_vec(),
        }),
        recovered,
        trainable.clone(),
        s,
        digest.clone(),
    );
    let report = TrainReport {
        schema: REPORT_SCHEMA.into(),
        model_kind: kind,
        mode: cfg.mode,
        trainable,
        final_total: composite_loss(&final_terms),
        final_losses: final_terms.iter().map(|t| (t.name, t.value)).collect(),
        trajectories,
        recovered,
        truth,
        relative_errors,
        kkt,
        scaling: s,
        epochs_run,
        best_epoch,
        stop_reason: stop,
        wall_time_s: started.elapsed().as_secs_f64(),
        config_digest: digest,
    };
    Ok((ck, report))
}

/// Recalibrates a trained checkpoint on a new dataset: networks and
/// parameters start from the checkpoint, parameters rescaled to the new
/// data's dimensionless space.
pub fn transfer_calibrate(
    basis: &Checkpoint,
    data: &Dataset,
    kind: ModelKind,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainReport)> {
    let mut c = cfg.clone();
    if c.mode == TrainMode::Scratch {
        c.mode = TrainMode::Transfer;
    }
    fit(data, kind, &c, Some(basis))
}
