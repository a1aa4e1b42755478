//! Yield surface, flow rule, hardening and damage for the generalized
//! von Mises / Drucker-Prager family with shape factor 1.
//!
//! The functions are generic over [`Scalar`], so the same formulas drive the
//! forward integrator (`f64`) and the loss assembly (tape expressions).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{invariants, Stiffness, SymTensor};

/// Largest damage value before saturation.
pub const OMEGA_CAP: f64 = 1.0 - 1e-6;

/// Relative threshold on `|eta|` below which the flow direction is undefined.
pub const TOL_ETA_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct MaterialParams<S = f64> {
    pub kappa: S,
    pub mu: S,
    pub sigma_y0: S,
    pub kbar: S,
    pub kbar2: S,
    pub hbar: S,
    pub m: S,
    pub alpha_s: S,
    pub r: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Kappa,
    Mu,
    SigmaY0,
    Kbar,
    Kbar2,
    Hbar,
    M,
    AlphaS,
    R,
}

impl ParamName {
    pub const ALL: [ParamName; 9] = [
        ParamName::Kappa,
        ParamName::Mu,
        ParamName::SigmaY0,
        ParamName::Kbar,
        ParamName::Kbar2,
        ParamName::Hbar,
        ParamName::M,
        ParamName::AlphaS,
        ParamName::R,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Kappa => "kappa",
            ParamName::Mu => "mu",
            ParamName::SigmaY0 => "sigma_y0",
            ParamName::Kbar => "kbar",
            ParamName::Kbar2 => "kbar2",
            ParamName::Hbar => "hbar",
            ParamName::M => "m",
            ParamName::AlphaS => "alpha_s",
            ParamName::R => "r",
        }
    }

    pub fn parse(s: &str) -> Option<ParamName> {
        ParamName::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Physical units per dimensionless unit, given stress and strain scales.
    ///
    /// Moduli scale with `sigma*/eps*`, stresses with `sigma*`, the quadratic
    /// hardening coefficient with `sigma*/eps*^2`; ratios are unscaled.
    pub fn scale(self, sigma_star: f64, eps_star: f64) -> f64 {
        match self {
            ParamName::Kappa | ParamName::Mu | ParamName::Kbar | ParamName::Hbar => {
                sigma_star / eps_star
            }
            ParamName::SigmaY0 => sigma_star,
            ParamName::Kbar2 => sigma_star / (eps_star * eps_star),
            // alpha_s compares against the multiplier, which scales with strain
            ParamName::AlphaS => eps_star,
            ParamName::M | ParamName::R => 1.0,
        }
    }
}

impl std::fmt::Display for ParamName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl<S: Copy> MaterialParams<S> {
    pub fn get(&self, p: ParamName) -> S {
        match p {
            ParamName::Kappa => self.kappa,
            ParamName::Mu => self.mu,
            ParamName::SigmaY0 => self.sigma_y0,
            ParamName::Kbar => self.kbar,
            ParamName::Kbar2 => self.kbar2,
            ParamName::Hbar => self.hbar,
            ParamName::M => self.m,
            ParamName::AlphaS => self.alpha_s,
            ParamName::R => self.r,
        }
    }

    pub fn set(&mut self, p: ParamName, v: S) {
        match p {
            ParamName::Kappa => self.kappa = v,
            ParamName::Mu => self.mu = v,
            ParamName::SigmaY0 => self.sigma_y0 = v,
            ParamName::Kbar => self.kbar = v,
            ParamName::Kbar2 => self.kbar2 = v,
            ParamName::Hbar => self.hbar = v,
            ParamName::M => self.m = v,
            ParamName::AlphaS => self.alpha_s = v,
            ParamName::R => self.r = v,
        }
    }

    pub fn map<T>(&self, mut f: impl FnMut(ParamName, S) -> T) -> MaterialParams<T> {
        MaterialParams {
            kappa: f(ParamName::Kappa, self.kappa),
            mu: f(ParamName::Mu, self.mu),
            sigma_y0: f(ParamName::SigmaY0, self.sigma_y0),
            kbar: f(ParamName::Kbar, self.kbar),
            kbar2: f(ParamName::Kbar2, self.kbar2),
            hbar: f(ParamName::Hbar, self.hbar),
            m: f(ParamName::M, self.m),
            alpha_s: f(ParamName::AlphaS, self.alpha_s),
            r: f(ParamName::R, self.r),
        }
    }
}

impl MaterialParams<f64> {
    /// Elastic constants only; everything else zero, shape factor 1.
    pub fn elastic(kappa: f64, mu: f64) -> Self {
        MaterialParams {
            kappa,
            mu,
            sigma_y0: 0.0,
            kbar: 0.0,
            kbar2: 0.0,
            hbar: 0.0,
            m: 0.0,
            alpha_s: 0.0,
            r: 1.0,
        }
    }

    /// Isotropic hardening steel-like set (MPa): E = 200 GPa, nu = 0.2.
    pub fn vmih() -> Self {
        MaterialParams {
            sigma_y0: 200.0,
            kbar: 10e3,
            ..Self::elastic(111.11e3, 83.33e3)
        }
    }

    /// Kinematic hardening counterpart of [`MaterialParams::vmih`].
    pub fn vmkh() -> Self {
        MaterialParams {
            sigma_y0: 200.0,
            hbar: 10e3,
            ..Self::elastic(111.11e3, 83.33e3)
        }
    }

    /// Perfectly plastic von Mises with linear damage (MPa).
    pub fn vmd() -> Self {
        MaterialParams {
            sigma_y0: 663.0,
            alpha_s: 0.276,
            ..Self::elastic(50.2e3, 23.17e3)
        }
    }

    /// Silty soil, Drucker-Prager (kPa).
    pub fn silty_soil() -> Self {
        let kappa = 100e3;
        let nu = 0.25;
        let mu = 3.0 * kappa * (1.0 - 2.0 * nu) / (2.0 * (1.0 + nu));
        MaterialParams {
            sigma_y0: 100.0,
            m: 0.466,
            ..Self::elastic(kappa, mu)
        }
    }

    /// Converts to dimensionless values; `alpha_s` is divided by `eps_star`
    /// so that it compares directly against the dimensionless multiplier.
    pub fn to_dimensionless(&self, sigma_star: f64, eps_star: f64) -> Self {
        self.map(|p, v| v / p.scale(sigma_star, eps_star))
    }

    /// Inverse of [`MaterialParams::to_dimensionless`].
    pub fn from_dimensionless(&self, sigma_star: f64, eps_star: f64) -> Self {
        self.map(|p, v| v * p.scale(sigma_star, eps_star))
    }

    pub fn lift<S: Scalar>(&self) -> MaterialParams<S> {
        self.map(|_, v| S::constant(v))
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("material parameters: {what}")));
        if !(self.kappa > 0.0 && self.mu > 0.0) {
            return Err(Error::NonPositiveModulus {
                kappa: self.kappa,
                mu: self.mu,
            });
        }
        if !(self.sigma_y0 > 0.0) {
            return bad("sigma_y0 must be positive");
        }
        if kind.damage_on() && !(self.alpha_s > 0.0) {
            return bad("alpha_s must be positive for damage models");
        }
        if self.m < 0.0 {
            return bad("m must be nonnegative");
        }
        if self.r != 1.0 {
            return bad("only shape factor r = 1 is supported");
        }
        if self.values().iter().any(|v| !v.is_finite()) {
            return bad("non-finite value");
        }
        Ok(())
    }

    pub fn values(&self) -> [f64; 9] {
        ParamName::ALL.map(|p| self.get(p))
    }
}

impl<S: Scalar> MaterialParams<S> {
    pub fn values_of(&self) -> MaterialParams<f64> {
        self.map(|_, v| v.value())
    }

    pub fn stiffness(&self) -> Stiffness<S> {
        Stiffness::new_unchecked(self.kappa, self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Vmih,
    Vmkh,
    VmMixed,
    DruckerPrager,
    VmDamage,
    DiscoveryGeneral,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Vmih,
        ModelKind::Vmkh,
        ModelKind::VmMixed,
        ModelKind::DruckerPrager,
        ModelKind::VmDamage,
        ModelKind::DiscoveryGeneral,
    ];

    pub fn kinematic_on(self) -> bool {
        matches!(self, ModelKind::Vmkh | ModelKind::VmMixed)
    }

    pub fn damage_on(self) -> bool {
        matches!(self, ModelKind::VmDamage)
    }

    pub fn pressure_on(self) -> bool {
        matches!(self, ModelKind::DruckerPrager | ModelKind::DiscoveryGeneral)
    }

    pub fn quadratic_hardening_on(self) -> bool {
        matches!(self, ModelKind::DiscoveryGeneral)
    }

    /// Parameters calibrated by default for this model.
    pub fn default_trainable(self) -> Vec<ParamName> {
        use ParamName::*;
        match self {
            ModelKind::Vmih => vec![Kappa, Mu, SigmaY0, Kbar],
            ModelKind::Vmkh => vec![Kappa, Mu, SigmaY0, Hbar],
            ModelKind::VmMixed => vec![Kappa, Mu, SigmaY0, Kbar, Hbar],
            ModelKind::DruckerPrager => vec![Kappa, Mu, SigmaY0, M],
            ModelKind::VmDamage => vec![Kappa, Mu, SigmaY0, AlphaS],
            ModelKind::DiscoveryGeneral => vec![Kappa, Mu, SigmaY0, Kbar, M, Kbar2],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Vmih => "VMIH",
            ModelKind::Vmkh => "VMKH",
            ModelKind::VmMixed => "VM_MIXED",
            ModelKind::DruckerPrager => "DRUCKER_PRAGER",
            ModelKind::VmDamage => "VM_DAMAGE",
            ModelKind::DiscoveryGeneral => "DISCOVERY_GENERAL",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Internal variables `q = [alpha, beta]`.
#[derive(Debug, Clone, Copy)]
pub struct HardeningState<S = f64> {
    pub alpha: S,
    pub beta: SymTensor<S>,
}

impl<S: Scalar> HardeningState<S> {
    pub fn virgin() -> Self {
        HardeningState {
            alpha: S::zero(),
            beta: SymTensor::zero(),
        }
    }
}

/// `K(alpha)` and its slope. The quadratic term only counts for models
/// with quadratic hardening; callers zero `kbar2` otherwise.
pub fn hardening_k<S: Scalar>(alpha: S, p: &MaterialParams<S>) -> (S, S) {
    let k = p.sigma_y0 + p.kbar * alpha + p.kbar2 * alpha * alpha;
    let kp = p.kbar + p.kbar2 * alpha * 2.0;
    (k, kp)
}

/// Linear damage ramp `omega = alpha / alpha_s`, clamped to `[0, OMEGA_CAP]`.
pub fn damage_omega<S: Scalar>(alpha: S, p: &MaterialParams<S>) -> (S, S) {
    let raw = alpha / p.alpha_s;
    let inside = raw.value() > 0.0 && raw.value() < OMEGA_CAP;
    let omega = raw.clamp_to(0.0, OMEGA_CAP);
    let d = if inside {
        S::constant(1.0) / p.alpha_s
    } else {
        S::zero()
    };
    (omega, d)
}

/// `sigma / (1 - omega)`.
pub fn effective_stress<S: Scalar>(sigma: &SymTensor<S>, omega: S) -> Result<SymTensor<S>> {
    if omega.value() >= OMEGA_CAP {
        return Err(Error::DamageSaturated {
            omega: omega.value(),
        });
    }
    Ok(sigma.scale(S::constant(1.0) / (S::constant(1.0) - omega)))
}

/// Stress used by the yield function: Cauchy stress, or effective stress
/// for damage models.
fn yield_stress<S: Scalar>(
    sigma: &SymTensor<S>,
    state: &HardeningState<S>,
    p: &MaterialParams<S>,
    kind: ModelKind,
) -> Result<SymTensor<S>> {
    if kind.damage_on() {
        let (omega, _) = damage_omega(state.alpha, p);
        effective_stress(sigma, omega)
    } else {
        Ok(*sigma)
    }
}

/// Parameters with the switches of `kind` applied: pressure, kinematic and
/// quadratic terms zeroed when the model does not carry them.
pub fn active_params<S: Scalar>(p: &MaterialParams<S>, kind: ModelKind) -> MaterialParams<S> {
    let mut q = *p;
    if !kind.pressure_on() {
        q.m = S::zero();
    }
    if !kind.kinematic_on() {
        q.hbar = S::zero();
    }
    if !kind.quadratic_hardening_on() {
        q.kbar2 = S::zero();
    }
    q
}

/// Yield function in (effective) stress space.
pub fn yield_f_effective<S: Scalar>(
    sigma_eff: &SymTensor<S>,
    state: &HardeningState<S>,
    p: &MaterialParams<S>,
    kind: ModelKind,
) -> S {
    let q = active_params(p, kind);
    let inv = invariants(sigma_eff, &state.beta);
    let (k, _) = hardening_k(state.alpha, &q);
    q.r * inv.tau - q.m * inv.p - k
}

/// `F = R tau - M p - K(alpha)`, evaluated on the effective stress when
/// damage is on.
pub fn yield_f<S: Scalar>(
    sigma: &SymTensor<S>,
    state: &HardeningState<S>,
    p: &MaterialParams<S>,
    kind: ModelKind,
) -> Result<S> {
    let s = yield_stress(sigma, state, p, kind)?;
    Ok(yield_f_effective(&s, state, p, kind))
}

/// Flow direction `r` and yield normal `n` from an (effective) stress.
///
/// `n` is the stress gradient of `F`; with `p = -tr(sigma)/3` the pressure
/// term contributes `+M/3 1`.
pub fn flow_and_normal_effective<S: Scalar>(
    sigma_eff: &SymTensor<S>,
    state: &HardeningState<S>,
    p: &MaterialParams<S>,
    kind: ModelKind,
    tol_eta: f64,
) -> Result<(SymTensor<S>, SymTensor<S>)> {
    let q = active_params(p, kind);
    let inv = invariants(sigma_eff, &state.beta);
    let norm = inv.eta.norm();
    if norm.value() <= tol_eta {
        return Err(Error::DegenerateStressState {
            norm: norm.value(),
            tol: tol_eta,
        });
    }
    let r = inv.eta.scale(q.r * 1.5_f64.sqrt() / norm);
    let n = r + SymTensor::identity(q.m / 3.0);
    Ok((r, n))
}

/// `r = R sqrt(3/2) eta/|eta|`, `n = dF/dsigma = r + (M/3) 1`.
pub fn flow_and_normal<S: Scalar>(
    sigma: &SymTensor<S>,
    state: &HardeningState<S>,
    p: &MaterialParams<S>,
    kind: ModelKind,
    tol_eta: f64,
) -> Result<(SymTensor<S>, SymTensor<S>)> {
    let s = yield_stress(sigma, state, p, kind)?;
    flow_and_normal_effective(&s, state, p, kind, tol_eta)
}

/// `alpha_dot = gamma_dot sqrt(2/3 r:r)`, `beta_dot = 2/3 Hbar gamma_dot r`.
pub fn hardening_rates<S: Scalar>(
    gamma_dot: S,
    r: &SymTensor<S>,
    p: &MaterialParams<S>,
) -> (S, SymTensor<S>) {
    let alpha_dot = gamma_dot * safe_sqrt(r.double_contract(r) * (2.0 / 3.0));
    let beta_dot = r.scale(p.hbar * gamma_dot * (2.0 / 3.0));
    (alpha_dot, beta_dot)
}

/// Denominator of the consistency condition:
/// `n:C:r + sqrt(2/3 r:r) K'(alpha) + (2/3 r:r) H'`.
pub fn multiplier_denominator<S: Scalar>(
    r: &SymTensor<S>,
    n: &SymTensor<S>,
    alpha: S,
    p: &MaterialParams<S>,
    kind: ModelKind,
) -> S {
    let q = active_params(p, kind);
    let c = q.stiffness();
    let rr = r.double_contract(r) * (2.0 / 3.0);
    let (_, kp) = hardening_k(alpha, &q);
    c.contract(n, r) + safe_sqrt(rr) * kp + rr * q.hbar
}

/// `sqrt` that maps a zero argument (degenerate flow direction) to zero.
fn safe_sqrt<S: Scalar>(x: S) -> S {
    if x.value() > 0.0 {
        x.sqrt()
    } else {
        S::zero()
    }
}

/// Plastic multiplier rate from the consistency condition, evaluated in
/// effective stress space for damage models.
pub fn plastic_multiplier_rate<S: Scalar>(
    sigma: &SymTensor<S>,
    state: &HardeningState<S>,
    eps_dot: &SymTensor<S>,
    p: &MaterialParams<S>,
    kind: ModelKind,
    tol_eta: f64,
) -> Result<S> {
    let (r, n) = flow_and_normal(sigma, state, p, kind, tol_eta)?;
    let num = p.stiffness().contract(&n, eps_dot);
    let den = multiplier_denominator(&r, &n, state.alpha, p, kind);
    if den.value() <= 0.0 {
        return Err(Error::NonPositiveDenominator { value: den.value() });
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uni(s: f64) -> SymTensor {
        SymTensor::diag(s, 0.0, 0.0)
    }

    #[test]
    fn hardening_values() {
        let p = MaterialParams::vmih();
        assert_eq!(hardening_k(0.0, &p), (200.0, 10e3));
        let (k, kp) = hardening_k(0.01, &p);
        assert!((k - 300.0).abs() < 1e-12);
        assert_eq!(kp, 10e3);
    }

    #[test]
    fn damage_ramp() {
        let p = MaterialParams::vmd();
        assert_eq!(damage_omega(0.0, &p).0, 0.0);
        let (w, d) = damage_omega(0.138, &p);
        assert!((w - 0.5).abs() < 1e-15);
        assert!((d - 1.0 / 0.276).abs() < 1e-12);
        let (w, d) = damage_omega(0.5, &p);
        assert_eq!((w, d), (OMEGA_CAP, 0.0));
    }

    #[test]
    fn effective_stress_cases() {
        let s = uni(100.0);
        assert_eq!(effective_stress(&s, 0.0).unwrap(), s);
        assert!((effective_stress(&s, 0.5).unwrap()[0] - 200.0).abs() < 1e-12);
        assert!(matches!(
            effective_stress(&s, 1.0),
            Err(Error::DamageSaturated { .. })
        ));
    }

    #[test]
    fn yield_examples() {
        let p = MaterialParams::vmih();
        let st = HardeningState::virgin();
        let f = yield_f(&SymTensor::zero(), &st, &p, ModelKind::Vmih).unwrap();
        assert_eq!(f, -200.0);
        let f = yield_f(&uni(200.0), &st, &p, ModelKind::Vmih).unwrap();
        assert!(f.abs() < 1e-12);

        let dp = MaterialParams::silty_soil();
        let f = yield_f(&SymTensor::identity(-100.0), &st, &dp, ModelKind::DruckerPrager).unwrap();
        assert!((f + 146.6).abs() < 1e-10, "F = {f}");
    }

    #[test]
    fn flow_direction_uniaxial() {
        let p = MaterialParams::vmih();
        let st = HardeningState::virgin();
        let (r, n) = flow_and_normal(&uni(50.0), &st, &p, ModelKind::Vmih, 1e-9).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
        assert!((r[1] + 0.5).abs() < 1e-15);
        assert_eq!(r, n);
        assert!(matches!(
            flow_and_normal(&SymTensor::identity(3.0), &st, &p, ModelKind::Vmih, 1e-9),
            Err(Error::DegenerateStressState { .. })
        ));
    }

    #[test]
    fn hardening_rate_examples() {
        let p = MaterialParams::vmkh();
        let r = SymTensor::new([1.0, -0.5, -0.5, 0.0, 0.0, 0.0]);
        let (a, b) = hardening_rates(0.0, &r, &p);
        assert_eq!(a, 0.0);
        assert_eq!(b.max_abs(), 0.0);
        let (a, _) = hardening_rates(2.5, &r, &p);
        assert!((a - 2.5).abs() < 1e-15);
        let (_, b) = hardening_rates(2.5, &r, &MaterialParams::vmih());
        assert_eq!(b.max_abs(), 0.0);
    }

    #[test]
    fn multiplier_rate_uniaxial_stress() {
        // Lateral strain rates chosen so that lateral stress rates vanish:
        // elastic part -nu eps_a, plastic part -1/2 of the plastic axial rate.
        let p = MaterialParams::vmih();
        let st = HardeningState::virgin();
        let (e, nu) = crate::tensor::convert_moduli(p.kappa, p.mu);
        let rate = 1.0;
        let g = rate * e / (e + p.kbar);
        let lat = -nu * (rate - g) - 0.5 * g;
        let eps_dot = SymTensor::diag(rate, lat, lat);
        let gd =
            plastic_multiplier_rate(&uni(200.0), &st, &eps_dot, &p, ModelKind::Vmih, 1e-9).unwrap();
        assert!((gd - g).abs() < 1e-12 * g, "{gd} vs {g}");
        assert!((g - 0.952_380_952_380_952_4).abs() < 1e-5);

        let neutral = SymTensor::diag(0.0, 1.0, -1.0);
        let gd =
            plastic_multiplier_rate(&uni(200.0), &st, &neutral, &p, ModelKind::Vmih, 1e-9).unwrap();
        assert_eq!(gd, 0.0);

        let mut soft = p;
        soft.kbar = -1e6;
        assert!(matches!(
            plastic_multiplier_rate(&uni(200.0), &st, &eps_dot, &soft, ModelKind::Vmih, 1e-9),
            Err(Error::NonPositiveDenominator { .. })
        ));
    }

    #[test]
    fn serde_field_names() {
        let v = serde_json::to_value(MaterialParams::vmih()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        let mut want = vec![
            "kappa", "mu", "sigma_y0", "kbar", "kbar2", "hbar", "m", "alpha_s", "r",
        ];
        want.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, want);
        let k: ModelKind = serde_json::from_str("\"DRUCKER_PRAGER\"").unwrap();
        assert_eq!(k, ModelKind::DruckerPrager);
    }

    fn state_strategy() -> impl Strategy<Value = (SymTensor, SymTensor, f64)> {
        (
            prop::array::uniform6(-500.0..500.0f64),
            prop::array::uniform6(-50.0..50.0f64),
            0.0..0.2f64,
        )
            .prop_map(|(s, b, a)| (SymTensor::new(s), SymTensor::new(b).dev(), a))
    }

    fn general_params() -> MaterialParams {
        MaterialParams {
            kbar2: 5e4,
            hbar: 3e3,
            m: 0.3,
            alpha_s: 0.3,
            ..MaterialParams::vmih()
        }
    }

    proptest! {
        #[test]
        fn flow_is_deviatoric_and_homogeneous((s, b, a) in state_strategy(), c in 0.1..10.0f64) {
            let p = general_params();
            let st = HardeningState { alpha: a, beta: b };
            if let Ok((r, _)) = flow_and_normal(&s, &st, &p, ModelKind::DiscoveryGeneral, 1e-9) {
                prop_assert!(r.trace().abs() < 1e-12);
                prop_assert!((r.norm() - 1.5_f64.sqrt()).abs() < 1e-12);
                let st2 = HardeningState { alpha: a, beta: b.scale(c) };
                let (r2, _) = flow_and_normal(&s.scale(c), &st2, &p, ModelKind::DiscoveryGeneral, 1e-9).unwrap();
                for k in 0..6 {
                    prop_assert!((r2[k] - r[k]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn damage_yield_identity((s, b, a) in state_strategy()) {
            let p = general_params();
            let st = HardeningState { alpha: a, beta: b };
            let fd = yield_f(&s, &st, &p, ModelKind::VmDamage).unwrap();
            let (w, _) = damage_omega(a, &p);
            let seff = s.scale(1.0 / (1.0 - w));
            let f0 = yield_f(&seff, &st, &p, ModelKind::Vmih).unwrap();
            prop_assert!((fd - f0).abs() <= 1e-12 * (1.0 + fd.abs()) * 10.0);
        }

        #[test]
        fn normal_is_gradient_of_f((s, b, a) in state_strategy()) {
            let p = general_params();
            let kind = ModelKind::DiscoveryGeneral;
            let st = HardeningState { alpha: a, beta: b };
            let eta = s.dev() - b;
            prop_assume!(eta.norm() > 1.0);
            let (_, n) = flow_and_normal(&s, &st, &p, kind, 1e-9).unwrap();
            let h = 1e-7 * 500.0;
            for k in 0..6 {
                let mut sp = s;
                let mut sm = s;
                sp.v[k] += h;
                sm.v[k] -= h;
                let d = (yield_f(&sp, &st, &p, kind).unwrap() - yield_f(&sm, &st, &p, kind).unwrap())
                    / (2.0 * h);
                // dF/dsigma_k in Voigt storage equals n_k times the contraction weight
                let want = n[k] * crate::tensor::VOIGT_WEIGHTS[k];
                prop_assert!((d - want).abs() <= 1e-5 * (1.0 + want.abs()), "k={} fd={} n={}", k, d, want);
            }
        }
    }
}
