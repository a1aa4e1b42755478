//! Adaptive Dormand-Prince integration of the rate-form constitutive
//! equations under mixed strain/stress control.
//!
//! State layout (19 components): total strain (6), plastic strain (6),
//! equivalent plastic strain, back stress (6). Stress is algebraic:
//! `sigma = (1 - omega) (sigma0 + C : (eps - eps_p))`.

use crate::constitutive::{
    damage_omega, flow_and_normal_effective, hardening_rates, multiplier_denominator,
    yield_f_effective, HardeningState, MaterialParams, ModelKind, TOL_ETA_REL,
};
use crate::error::{Error, Result};
use crate::loading::{ChannelSample, ControlSample, LoadingProgram};
use crate::tensor::{Stiffness, SymTensor};

pub const NY: usize = 19;
pub type State = [f64; NY];

const EVENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Yield tolerance relative to `sigma_y0`.
    pub tol_f_rel: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rtol: 1e-8,
            atol: 1e-10,
            tol_f_rel: 1e-8,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Elastic,
    Plastic,
}

/// One accepted step with endpoint values and slopes for Hermite
/// interpolation.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t0: f64,
    pub t1: f64,
    pub y0: State,
    pub y1: State,
    pub f0: State,
    pub f1: State,
    pub regime: Regime,
}

/// Dense output of one integration.
#[derive(Debug, Clone)]
pub struct RawPath {
    pub steps: Vec<StepRecord>,
    pub params: MaterialParams,
    pub kind: ModelKind,
    pub initial_stress: SymTensor,
    pub program: LoadingProgram,
}

/// Point values reconstructed from the state vector.
#[derive(Debug, Clone, Copy)]
pub struct PathPoint {
    pub t: f64,
    pub eps: SymTensor,
    pub eps_p: SymTensor,
    pub sigma: SymTensor,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: SymTensor,
    pub omega: f64,
}

fn tensor_at(y: &State, off: usize) -> SymTensor {
    let mut v = [0.0; 6];
    v.copy_from_slice(&y[off..off + 6]);
    SymTensor::new(v)
}

struct Model<'a> {
    p: &'a MaterialParams,
    kind: ModelKind,
    c: Stiffness,
    sigma0: SymTensor,
    tol_eta: f64,
}

/// Quantities derived from a state.
struct Derived {
    sigma_eff: SymTensor,
    omega: f64,
    domega: f64,
    hs: HardeningState,
}

/// Rates for one candidate strain rate.
struct Response {
    sigma_dot: SymTensor,
    y_dot: State,
}

impl Model<'_> {
    fn derived(&self, y: &State) -> Derived {
        let eps = tensor_at(y, 0);
        let eps_p = tensor_at(y, 6);
        let alpha = y[12];
        let sigma_eff = self.sigma0 + self.c.apply(&(eps - eps_p));
        let (omega, domega) = if self.kind.damage_on() {
            damage_omega(alpha, self.p)
        } else {
            (0.0, 0.0)
        };
        Derived {
            sigma_eff,
            omega,
            domega,
            hs: HardeningState {
                alpha,
                beta: tensor_at(y, 13),
            },
        }
    }

    fn yield_value(&self, d: &Derived) -> f64 {
        yield_f_effective(&d.sigma_eff, &d.hs, self.p, self.kind)
    }

    fn response(&self, d: &Derived, eps_dot: &SymTensor, regime: Regime) -> Result<Response> {
        let mut y_dot = [0.0; NY];
        y_dot[..6].copy_from_slice(&eps_dot.v);
        let sigma_dot = match regime {
            Regime::Elastic => self.c.apply(eps_dot) * (1.0 - d.omega),
            Regime::Plastic => {
                let (r, n) =
                    flow_and_normal_effective(&d.sigma_eff, &d.hs, self.p, self.kind, self.tol_eta)?;
                let den = multiplier_denominator(&r, &n, d.hs.alpha, self.p, self.kind);
                if den <= 0.0 {
                    return Err(Error::NonPositiveDenominator { value: den });
                }
                let gd = self.c.contract(&n, eps_dot) / den;
                let (alpha_dot, beta_dot) = hardening_rates(gd, &r, self.p);
                y_dot[6..12].copy_from_slice(&(r * gd).v);
                y_dot[12] = alpha_dot;
                y_dot[13..].copy_from_slice(&beta_dot.v);
                let omega_dot = d.domega * alpha_dot;
                let sd = self.c.apply(&(*eps_dot - r * gd)) * (1.0 - d.omega)
                    - d.sigma_eff * omega_dot;
                sd
            }
        };
        Ok(Response { sigma_dot, y_dot })
    }

    /// Solves for the strain rates of stress-held channels so that their
    /// stress rates vanish; the map is affine for a fixed regime, so the
    /// finite-difference Jacobian is exact up to rounding and damped Newton
    /// converges in one or two iterations.
    fn solve_control(
        &self,
        t: f64,
        d: &Derived,
        ctrl: &ControlSample,
        regime: Regime,
    ) -> Result<(SymTensor, Response)> {
        let mut eps_dot = SymTensor::zero();
        let mut held = Vec::new();
        for (i, c) in ctrl.channels.iter().enumerate() {
            match c {
                ChannelSample::StrainRate(r) => eps_dot.v[i] = *r,
                ChannelSample::Stress(_) => held.push(i),
            }
        }
        let resp = self.response(d, &eps_dot, regime)?;
        if held.is_empty() {
            return Ok((eps_dot, resp));
        }
        let m = held.len();
        let residual = |r: &Response| -> Vec<f64> { held.iter().map(|&i| r.sigma_dot.v[i]).collect() };
        let scale = self.c.c1111() * eps_dot.max_abs().max(1e-300);
        let mut res = residual(&resp);
        let mut cur = resp;
        for _ in 0..8 {
            let norm = res.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            if norm <= 1e-13 * scale {
                return Ok((eps_dot, cur));
            }
            let h = eps_dot.max_abs().max(1e-12);
            let mut jac = vec![vec![0.0; m]; m];
            for (col, &j) in held.iter().enumerate() {
                let mut e2 = eps_dot;
                e2.v[j] += h;
                let r2 = residual(&self.response(d, &e2, regime)?);
                for row in 0..m {
                    jac[row][col] = (r2[row] - res[row]) / h;
                }
            }
            let step = solve_linear(jac, res.iter().map(|x| -x).collect()).ok_or(
                Error::ControlSolveFailure {
                    t,
                    residual: norm,
                },
            )?;
            let mut lambda = 1.0;
            loop {
                let mut trial = eps_dot;
                for (k, &j) in held.iter().enumerate() {
                    trial.v[j] += lambda * step[k];
                }
                let r = self.response(d, &trial, regime)?;
                let rr = residual(&r);
                let n2 = rr.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
                if n2 < norm || lambda < 1e-3 {
                    eps_dot = trial;
                    res = rr;
                    cur = r;
                    break;
                }
                lambda *= 0.5;
            }
        }
        let norm = res.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        if norm <= 1e-9 * scale {
            Ok((eps_dot, cur))
        } else {
            Err(Error::ControlSolveFailure { t, residual: norm })
        }
    }

    /// Trial loading indicator `n : C : eps_dot` with the elastic solution
    /// of the mixed control; `None` where the flow direction is undefined.
    fn indicator(&self, t: f64, d: &Derived, ctrl: &ControlSample) -> Result<Option<f64>> {
        let (_, n) = match flow_and_normal_effective(
            &d.sigma_eff,
            &d.hs,
            self.p,
            self.kind,
            self.tol_eta,
        ) {
            Ok(v) => v,
            Err(Error::DegenerateStressState { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let (eps_dot, _) = self.solve_control(t, d, ctrl, Regime::Elastic)?;
        Ok(Some(self.c.contract(&n, &eps_dot)))
    }

    fn rhs(
        &self,
        prog: &LoadingProgram,
        seg: usize,
        t: f64,
        y: &State,
        regime: Regime,
    ) -> Result<State> {
        let d = self.derived(y);
        let ctrl = prog.sample_segment(seg, t);
        let (_, r) = self.solve_control(t, &d, &ctrl, regime)?;
        Ok(r.y_dot)
    }

    /// Pulls a plastic state back onto the yield surface along the flow
    /// direction (removes integration drift of the consistency condition).
    fn project(&self, y: &mut State) -> Result<()> {
        for _ in 0..3 {
            let d = self.derived(y);
            let f = self.yield_value(&d);
            let (r, n) =
                flow_and_normal_effective(&d.sigma_eff, &d.hs, self.p, self.kind, self.tol_eta)?;
            let den = multiplier_denominator(&r, &n, d.hs.alpha, self.p, self.kind);
            if den <= 0.0 {
                return Err(Error::NonPositiveDenominator { value: den });
            }
            let dg = f / den;
            let (da, db) = hardening_rates(dg, &r, self.p);
            for k in 0..6 {
                y[6 + k] += dg * r.v[k];
                y[13 + k] += db.v[k];
            }
            y[12] += da;
            if dg.abs() <= 1e-16 * (1.0 + d.hs.alpha.abs()) {
                break;
            }
        }
        Ok(())
    }
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Trial {
    y1: State,
    f1: State,
    err: f64,
}

#[allow(clippy::too_many_arguments)]
fn dp_step(
    model: &Model,
    prog: &LoadingProgram,
    seg: usize,
    t: f64,
    y: &State,
    f0: &State,
    h: f64,
    regime: Regime,
    opts: &SolverOptions,
) -> Result<Trial> {
    let mut k = [[0.0; NY]; 7];
    k[0] = *f0;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..NY {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = model.rhs(prog, seg, t + C[s] * h, &ys, regime)?;
    }
    let mut y1 = *y;
    let mut err: f64 = 0.0;
    for i in 0..NY {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += B5[s] * k[s][i];
            d4 += B4[s] * k[s][i];
        }
        y1[i] += h * d5;
        let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
        err = err.max((h * (d5 - d4)).abs() / sc);
    }
    Ok(Trial { y1, f1: k[6], err })
}

/// Integrates the constitutive equations along `program`.
pub fn integrate(
    program: &LoadingProgram,
    params: &MaterialParams,
    kind: ModelKind,
    opts: &SolverOptions,
) -> Result<RawPath> {
    params.validate(kind)?;
    let stress_scale = params
        .sigma_y0
        .max(program.initial_stress.max_abs())
        .max(1e-300);
    let model = Model {
        p: params,
        kind,
        c: Stiffness::new_unchecked(params.kappa, params.mu),
        sigma0: program.initial_stress,
        tol_eta: TOL_ETA_REL * stress_scale,
    };
    let tol_f = opts.tol_f_rel * params.sigma_y0;
    let bounds = program.boundaries();
    let mut y: State = [0.0; NY];
    let mut steps = Vec::new();
    let f_start = model.yield_value(&model.derived(&y));
    if f_start > tol_f {
        return Err(Error::InvalidStressState {
            t: 0.0,
            f: f_start,
            tol: tol_f,
        });
    }
    let mut at_yield = false;
    let mut n_steps = 0usize;

    for seg in 0..program.segments.len() {
        let (ts, te) = (bounds[seg], bounds[seg + 1]);
        let mut t = ts;
        let mut h = (te - ts) * 1e-2;
        while t < te {
            n_steps += 1;
            if n_steps > opts.max_steps {
                return Err(Error::StepUnderflow { t, h });
            }
            let d = model.derived(&y);
            let ctrl = program.sample_segment(seg, t);
            let f = model.yield_value(&d);
            let regime = if f >= -tol_f || at_yield {
                match model.indicator(t, &d, &ctrl)? {
                    Some(ind) if ind > 0.0 => Regime::Plastic,
                    _ => Regime::Elastic,
                }
            } else {
                Regime::Elastic
            };
            at_yield = false;
            let f0 = model.rhs(program, seg, t, &y, regime)?;
            h = h.min(te - t);
            let trial = loop {
                if h <= 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::StepUnderflow { t, h });
                }
                let tr = dp_step(&model, program, seg, t, &y, &f0, h, regime, opts)?;
                if tr.err <= 1.0 {
                    break tr;
                }
                h *= (0.9 * tr.err.powf(-0.2)).clamp(0.2, 1.0);
            };
            let mut trial = trial;
            let mut h_acc = h;

            // regime switches inside the step
            let f_thr = f.max(0.0);
            let event = match regime {
                Regime::Elastic => model.yield_value(&model.derived(&trial.y1)) > f_thr,
                Regime::Plastic => {
                    let d1 = model.derived(&trial.y1);
                    let c1 = program.sample_segment(seg, (t + h).min(te));
                    matches!(model.indicator(t + h, &d1, &c1)?, Some(ind) if ind <= 0.0)
                }
            };
            if event {
                let crossed = |tr: &Trial, s: f64| -> Result<bool> {
                    Ok(match regime {
                        Regime::Elastic => model.yield_value(&model.derived(&tr.y1)) > f_thr,
                        Regime::Plastic => {
                            let d1 = model.derived(&tr.y1);
                            let c1 = program.sample_segment(seg, t + s);
                            matches!(model.indicator(t + s, &d1, &c1)?, Some(ind) if ind <= 0.0)
                        }
                    })
                };
                let (mut lo, mut hi) = (0.0, h);
                let mut best = trial;
                while hi - lo > EVENT_TOL {
                    let mid = 0.5 * (lo + hi);
                    let tr = dp_step(&model, program, seg, t, &y, &f0, mid, regime, opts)?;
                    if crossed(&tr, mid)? {
                        hi = mid;
                        best = tr;
                    } else {
                        lo = mid;
                    }
                }
                if hi < h {
                    trial = best;
                } else {
                    trial = dp_step(&model, program, seg, t, &y, &f0, hi, regime, opts)?;
                }
                h_acc = hi;
                at_yield = regime == Regime::Elastic;
            }

            let t1 = if (t + h_acc - te).abs() <= 1e-12 * te.abs().max(1.0) {
                te
            } else {
                t + h_acc
            };
            let mut y1 = trial.y1;
            let mut f1 = trial.f1;
            if regime == Regime::Plastic || at_yield {
                let d1 = model.derived(&y1);
                if model.yield_value(&d1) > -tol_f {
                    model.project(&mut y1)?;
                }
                if regime == Regime::Plastic {
                    f1 = model.rhs(program, seg, t1.min(te), &y1, regime)?;
                }
            }
            let d1 = model.derived(&y1);
            let f_end = model.yield_value(&d1);
            if f_end > tol_f {
                return Err(Error::InvalidStressState {
                    t: t1,
                    f: f_end,
                    tol: tol_f,
                });
            }
            if kind.damage_on() && d1.omega >= crate::constitutive::OMEGA_CAP {
                return Err(Error::DamageSaturated { omega: d1.omega });
            }
            steps.push(StepRecord {
                t0: t,
                t1,
                y0: y,
                y1,
                f0,
                f1,
                regime,
            });
            y = y1;
            t = t1;
            if !event {
                let grow = if trial.err > 0.0 {
                    (0.9 * trial.err.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                h = h_acc * grow;
            } else {
                h = h_acc.max((te - ts) * 1e-6);
            }
        }
    }
    Ok(RawPath {
        steps,
        params: *params,
        kind,
        initial_stress: program.initial_stress,
        program: program.clone(),
    })
}

impl RawPath {
    pub fn t_end(&self) -> f64 {
        self.steps.last().map(|s| s.t1).unwrap_or(0.0)
    }

    /// Cubic Hermite interpolation of the state at `t`.
    pub fn state_at(&self, t: f64) -> State {
        if self.steps.is_empty() {
            return [0.0; NY];
        }
        let k = self
            .steps
            .partition_point(|s| s.t1 < t)
            .min(self.steps.len() - 1);
        let s = &self.steps[k];
        let h = s.t1 - s.t0;
        if h <= 0.0 {
            return s.y1;
        }
        let u = ((t - s.t0) / h).clamp(0.0, 1.0);
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let mut y = [0.0; NY];
        for i in 0..NY {
            y[i] = h00 * s.y0[i] + h10 * h * s.f0[i] + h01 * s.y1[i] + h11 * h * s.f1[i];
        }
        y
    }

    /// Time derivative of the interpolated state at `t`.
    pub fn rate_at(&self, t: f64) -> State {
        if self.steps.is_empty() {
            return [0.0; NY];
        }
        let k = self
            .steps
            .partition_point(|s| s.t1 < t)
            .min(self.steps.len() - 1);
        let s = &self.steps[k];
        let h = s.t1 - s.t0;
        if h <= 0.0 {
            return s.f1;
        }
        let u = ((t - s.t0) / h).clamp(0.0, 1.0);
        let u2 = u * u;
        let d00 = (6.0 * u2 - 6.0 * u) / h;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * u2 - 2.0 * u;
        let mut y = [0.0; NY];
        for i in 0..NY {
            y[i] = d00 * s.y0[i] + d10 * s.f0[i] + d01 * s.y1[i] + d11 * s.f1[i];
        }
        y
    }

    pub fn point_from_state(&self, t: f64, y: &State) -> PathPoint {
        let c = Stiffness::new_unchecked(self.params.kappa, self.params.mu);
        let eps = tensor_at(y, 0);
        let eps_p = tensor_at(y, 6);
        let alpha = y[12];
        let omega = if self.kind.damage_on() {
            damage_omega(alpha, &self.params).0
        } else {
            0.0
        };
        let sigma = (self.initial_stress + c.apply(&(eps - eps_p))) * (1.0 - omega);
        PathPoint {
            t,
            eps,
            eps_p,
            sigma,
            gamma: alpha / self.params.r,
            alpha,
            beta: tensor_at(y, 13),
            omega,
        }
    }

    pub fn point_at(&self, t: f64) -> PathPoint {
        let y = self.state_at(t);
        self.point_from_state(t, &y)
    }

    /// Points at every accepted step end, starting with the initial state.
    pub fn step_points(&self) -> Vec<PathPoint> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        if let Some(first) = self.steps.first() {
            out.push(self.point_from_state(first.t0, &first.y0));
        }
        for s in &self.steps {
            out.push(self.point_from_state(s.t1, &s.y1));
        }
        out
    }

    /// Yield function at a state.
    pub fn yield_at(&self, y: &State) -> f64 {
        let pt = self.point_from_state(0.0, y);
        let seff = if self.kind.damage_on() {
            pt.sigma * (1.0 / (1.0 - pt.omega))
        } else {
            pt.sigma
        };
        let hs = HardeningState {
            alpha: pt.alpha,
            beta: pt.beta,
        };
        yield_f_effective(&seff, &hs, &self.params, self.kind)
    }

    /// Plastic multiplier rate recorded at the start of each step.
    pub fn gamma_dot_at_steps(&self) -> Vec<(f64, f64)> {
        self.steps
            .iter()
            .map(|s| (s.t0, s.f0[12] / self.params.r))
            .collect()
    }
}
