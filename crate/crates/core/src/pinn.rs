//! Constraint residuals of rate-form elastoplasticity, assembled into a
//! differentiable composite loss.
//!
//! Stress, strain and their rates are fixed data signals. The networks
//! supply `gamma(t)` (and `beta(t)` for kinematic models); everything else
//! is derived. All quantities are dimensionless.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constitutive::{
    active_params, damage_omega, flow_and_normal_effective, multiplier_denominator,
    yield_f_effective, HardeningState, MaterialParams, ModelKind, TOL_ETA_REL,
};
use crate::error::{Error, Result};
use crate::forward::Dataset;
use crate::scalar::Scalar;
use crate::tensor::SymTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    /// Sharpness of the logistic gate. `f64::INFINITY` gives a hard step.
    pub delta: f64,
    /// Evaluate gates on values only, so no gradient flows through them.
    pub detach_gates: bool,
    /// Unloading is gated on `n:sigma_dot < 0` (the stated condition)
    /// instead of the literal sign of the implementation column.
    pub strict_text_gates: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            delta: 200.0,
            detach_gates: false,
            strict_text_gates: true,
        }
    }
}

impl GateConfig {
    pub fn with_delta(delta: f64) -> Self {
        GateConfig {
            delta,
            ..Self::default()
        }
    }

    pub fn hard() -> Self {
        Self::with_delta(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("gate delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// `S(x; delta) = 1/(1 + exp(-delta x))`.
pub fn sigmoid_gate<S: Scalar>(x: S, g: &GateConfig) -> S {
    if g.delta.is_infinite() {
        let v = x.value();
        return S::constant(if v > 0.0 {
            1.0
        } else if v < 0.0 {
            0.0
        } else {
            0.5
        });
    }
    if g.detach_gates {
        S::constant(x.value()).sigmoid(g.delta)
    } else {
        x.sigmoid(g.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TermName {
    #[serde(rename = "F_nonpos")]
    FNonpos,
    #[serde(rename = "gdot_nonneg")]
    GdotNonneg,
    #[serde(rename = "kkt")]
    Kkt,
    #[serde(rename = "elastic_unload")]
    ElasticUnload,
    #[serde(rename = "elastic_load")]
    ElasticLoad,
    #[serde(rename = "ep_stress")]
    EpStress,
    #[serde(rename = "ep_multiplier")]
    EpMultiplier,
    #[serde(rename = "kin_hardening")]
    KinHardening,
    #[serde(rename = "omega_nonneg")]
    OmegaNonneg,
    #[serde(rename = "omega_le_one")]
    OmegaLeOne,
    #[serde(rename = "pin_gamma0")]
    PinGamma0,
}

impl TermName {
    pub const ALL: [TermName; 11] = [
        TermName::FNonpos,
        TermName::GdotNonneg,
        TermName::Kkt,
        TermName::ElasticUnload,
        TermName::ElasticLoad,
        TermName::EpStress,
        TermName::EpMultiplier,
        TermName::KinHardening,
        TermName::OmegaNonneg,
        TermName::OmegaLeOne,
        TermName::PinGamma0,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TermName::FNonpos => "F_nonpos",
            TermName::GdotNonneg => "gdot_nonneg",
            TermName::Kkt => "kkt",
            TermName::ElasticUnload => "elastic_unload",
            TermName::ElasticLoad => "elastic_load",
            TermName::EpStress => "ep_stress",
            TermName::EpMultiplier => "ep_multiplier",
            TermName::KinHardening => "kin_hardening",
            TermName::OmegaNonneg => "omega_nonneg",
            TermName::OmegaLeOne => "omega_le_one",
            TermName::PinGamma0 => "pin_gamma0",
        }
    }

    pub fn parse(s: &str) -> Option<TermName> {
        TermName::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Terms assembled for a model kind.
    pub fn for_kind(kind: ModelKind, pin_gamma0: bool) -> Vec<TermName> {
        use TermName::*;
        let mut v = vec![FNonpos, GdotNonneg, Kkt, ElasticUnload, ElasticLoad, EpStress, EpMultiplier];
        if kind.kinematic_on() {
            v.push(KinHardening);
        }
        if kind.damage_on() {
            v.extend([OmegaNonneg, OmegaLeOne]);
        }
        if pin_gamma0 {
            v.push(PinGamma0);
        }
        v
    }
}

impl fmt::Display for TermName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerm<S> {
    pub name: TermName,
    pub weight: f64,
    pub value: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub gate: GateConfig,
    /// Adds `gamma(0)^2` (and `|beta(0)|^2`) as an equality term.
    pub pin_gamma0: bool,
    /// Per-term weight overrides; missing terms weigh 1.
    pub lambda: BTreeMap<TermName, f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gate: GateConfig::default(),
            pin_gamma0: true,
            lambda: BTreeMap::new(),
        }
    }
}

impl LossConfig {
    pub fn weight(&self, t: TermName) -> f64 {
        self.lambda.get(&t).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        for (t, w) in &self.lambda {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Config(format!("lambda for {t} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

fn mean<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    S::sum_all(xs) * (1.0 / xs.len() as f64)
}

/// `(1/N) sum (f_n - F_n)^2`.
pub fn mse_eq<S: Scalar>(f: &[S], targets: &[f64]) -> Result<S> {
    check_len(f.len(), targets.len())?;
    let sq: Vec<S> = f.iter().zip(targets).map(|(&x, &y)| (x - y).square()).collect();
    Ok(mean(&sq))
}

/// `(1/N) sum (S(f_n - F_n) (f_n - F_n))^2`, penalizing `f > F`.
pub fn mse_le<S: Scalar>(f: &[S], targets: &[f64], g: &GateConfig) -> Result<S> {
    check_len(f.len(), targets.len())?;
    let sq: Vec<S> = f
        .iter()
        .zip(targets)
        .map(|(&x, &y)| {
            let d = x - y;
            (sigmoid_gate(d, g) * d).square()
        })
        .collect();
    Ok(mean(&sq))
}

/// `(1/N) sum (S(-(f_n - F_n)) (f_n - F_n))^2`, penalizing `f < F`.
pub fn mse_ge<S: Scalar>(f: &[S], targets: &[f64], g: &GateConfig) -> Result<S> {
    check_len(f.len(), targets.len())?;
    let sq: Vec<S> = f
        .iter()
        .zip(targets)
        .map(|(&x, &y)| {
            let d = x - y;
            (sigmoid_gate(-d, g) * d).square()
        })
        .collect();
    Ok(mean(&sq))
}

/// Network outputs at one sample.
#[derive(Debug, Clone, Copy)]
pub struct NetSample<S> {
    pub gamma: S,
    pub gamma_dot: S,
    /// `(beta, beta_dot)` for kinematic models.
    pub beta: Option<(SymTensor<S>, SymTensor<S>)>,
}

/// Everything the residuals need at each sample, in dimensionless form.
#[derive(Debug, Clone)]
pub struct ResidualContext<'a, S> {
    pub data: &'a Dataset,
    pub net: Vec<NetSample<S>>,
    /// Full parameter set in dimensionless form; frozen entries are constants.
    pub params: MaterialParams<S>,
}

/// Per-sample derived quantities.
#[derive(Debug, Clone, Copy)]
pub struct SampleState<S> {
    pub f: S,
    pub r: SymTensor<S>,
    pub n: SymTensor<S>,
    /// Regime indicator: `n:sigma_dot` (effective), or the trial rate
    /// `n:C:eps_dot` for damage models.
    pub indicator: S,
    pub sigma_dot: SymTensor<S>,
    /// Raw damage `alpha/alpha_s` (unclamped), zero without damage.
    pub omega: S,
}

impl<S: Scalar> ResidualContext<'_, S> {
    fn check(&self, kind: ModelKind) -> Result<()> {
        if !self.data.scaled {
            return Err(Error::IncompleteContext("dataset must be dimensionless".into()));
        }
        check_len(self.net.len(), self.data.len())?;
        if kind.kinematic_on() && self.net.iter().any(|s| s.beta.is_none()) {
            return Err(Error::IncompleteContext(
                "kinematic model needs beta network outputs".into(),
            ));
        }
        Ok(())
    }

    /// Yield value, flow directions, indicator and effective stress rate at
    /// sample `i`.
    pub fn sample(&self, i: usize, kind: ModelKind) -> SampleState<S> {
        let p = &self.params;
        let d = self.data;
        let ns = &self.net[i];
        let sig = SymTensor::<S>::from_f64(&d.sig[i]);
        let sig_dot = SymTensor::<S>::from_f64(&d.sig_dot[i]);
        let alpha = ns.gamma * p.r;
        let beta = ns.beta.map(|b| b.0).unwrap_or_else(SymTensor::zero);

        let (omega_raw, s_eff, sd_eff) = if kind.damage_on() {
            let raw = alpha / p.alpha_s;
            let (omega, domega) = damage_omega(alpha, p);
            let omega_dot = domega * ns.gamma_dot * p.r;
            let inv = S::constant(1.0) / (S::constant(1.0) - omega);
            let s_eff = sig.scale(inv);
            // d/dt [sigma/(1-w)] = sigma_dot/(1-w) + sigma w_dot/(1-w)^2
            let sd_eff = sig_dot.scale(inv) + sig.scale(omega_dot * inv * inv);
            (raw, s_eff, sd_eff)
        } else {
            (S::zero(), sig, sig_dot)
        };

        let state = HardeningState { alpha, beta };
        let f = yield_f_effective(&s_eff, &state, p, kind);
        let tol = TOL_ETA_REL * (1.0 + s_eff.values().max_abs());
        let (r, n) = match flow_and_normal_effective(&s_eff, &state, p, kind, tol) {
            Ok(rn) => rn,
            // no deviatoric stress: no flow direction
            Err(_) => {
                let q = active_params(p, kind);
                (SymTensor::zero(), SymTensor::identity(q.m / 3.0))
            }
        };
        let indicator = if kind.damage_on() {
            let eps_dot = SymTensor::<S>::from_f64(&d.eps_dot[i]);
            p.stiffness().contract(&n, &eps_dot)
        } else {
            n.double_contract(&sd_eff)
        };
        SampleState {
            f,
            r,
            n,
            indicator,
            sigma_dot: sd_eff,
            omega: omega_raw,
        }
    }
}

fn sq_norm<S: Scalar>(x: &SymTensor<S>) -> S {
    let v = x.v;
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3] + v[4] * v[4] + v[5] * v[5]
}

/// One loss term per applicable constraint row. Tensor residuals are
/// summed over their six Voigt components before averaging over samples.
pub fn assemble_losses<S: Scalar>(
    ctx: &ResidualContext<'_, S>,
    kind: ModelKind,
    cfg: &LossConfig,
) -> Result<Vec<LossTerm<S>>> {
    ctx.check(kind)?;
    let g = &cfg.gate;
    let p = active_params(&ctx.params, kind);
    let c = p.stiffness();
    let n_s = ctx.data.len();

    let mut f_vals = Vec::with_capacity(n_s);
    let mut gd_vals = Vec::with_capacity(n_s);
    let mut kkt = Vec::with_capacity(n_s);
    let mut unload = Vec::with_capacity(n_s);
    let mut load = Vec::with_capacity(n_s);
    let mut ep_s = Vec::with_capacity(n_s);
    let mut ep_m = Vec::with_capacity(n_s);
    let mut kin = Vec::new();
    let mut omegas = Vec::new();

    // gate orientation: loading is `indicator > 0`
    let sgn = if g.strict_text_gates { 1.0 } else { -1.0 };
    for i in 0..n_s {
        let st = ctx.sample(i, kind);
        let ns = &ctx.net[i];
        let gd = ns.gamma_dot;
        let eps_dot = SymTensor::<S>::from_f64(&ctx.data.eps_dot[i]);
        let ce = c.apply(&eps_dot);
        let cr = c.apply(&st.r);

        let g_load = sigmoid_gate(st.indicator * sgn, g);
        let g_unload = sigmoid_gate(st.indicator * (-sgn), g);
        let g_yield = sigmoid_gate(st.f, g);
        let g_inside = sigmoid_gate(-st.f, g);

        let res_el = st.sigma_dot - ce;
        let res_ep = res_el + cr.scale(gd);

        f_vals.push(st.f);
        gd_vals.push(gd);
        kkt.push((st.f * gd).square());
        unload.push(sq_norm(&res_el) * g_unload.square());
        load.push(sq_norm(&res_el) * (g_load * g_inside).square());
        let g_ep = g_load * g_yield;
        ep_s.push(sq_norm(&res_ep) * g_ep.square());

        let den = multiplier_denominator(&st.r, &st.n, ns.gamma * p.r, &p, kind);
        if den.value() > 0.0 {
            let target = c.contract(&st.n, &eps_dot) / den;
            ep_m.push((g_ep * (gd - target)).square());
        } else {
            ep_m.push(S::zero());
        }

        if kind.kinematic_on() {
            let (_, beta_dot) = ns.beta.expect("checked");
            let res = beta_dot - st.r.scale(p.hbar * gd * (2.0 / 3.0));
            kin.push(sq_norm(&res));
        }
        if kind.damage_on() {
            omegas.push(st.omega);
        }
    }

    let zeros = vec![0.0; n_s];
    let mut values: Vec<(TermName, S)> = vec![
        (TermName::FNonpos, mse_le(&f_vals, &zeros, g)?),
        (TermName::GdotNonneg, mse_ge(&gd_vals, &zeros, g)?),
        (TermName::Kkt, mean(&kkt)),
        (TermName::ElasticUnload, mean(&unload)),
        (TermName::ElasticLoad, mean(&load)),
        (TermName::EpStress, mean(&ep_s)),
        (TermName::EpMultiplier, mean(&ep_m)),
    ];
    if kind.kinematic_on() {
        values.push((TermName::KinHardening, mean(&kin)));
    }
    if kind.damage_on() {
        values.push((TermName::OmegaNonneg, mse_ge(&omegas, &zeros, g)?));
        values.push((TermName::OmegaLeOne, mse_le(&omegas, &vec![1.0; n_s], g)?));
    }
    if cfg.pin_gamma0 {
        let first = &ctx.net[0];
        let mut v = first.gamma.square();
        if let Some((b, _)) = first.beta {
            v = v + sq_norm(&b);
        }
        values.push((TermName::PinGamma0, v));
    }
    Ok(values
        .into_iter()
        .map(|(name, value)| LossTerm {
            name,
            weight: cfg.weight(name),
            value,
        })
        .collect())
}

/// `sum lambda_i L_i`.
pub fn composite_loss<S: Scalar>(terms: &[LossTerm<S>]) -> S {
    let weighted: Vec<S> = terms.iter().map(|t| t.value * t.weight).collect();
    S::sum_all(&weighted)
}
