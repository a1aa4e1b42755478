#![allow(dead_code)]

use cpinn::loading::LoadingProgram;

/// Exact 1D uniaxial-stress response with linear isotropic (`kbar`) and
/// kinematic (`hbar`) hardening, evaluated by return mapping on a strain
/// history that includes every reversal point. For linear hardening the
/// 1D return map is exact on monotone pieces.
pub struct Uniaxial1d {
    pub e: f64,
    pub sy: f64,
    pub kbar: f64,
    pub hbar: f64,
    eps_p: f64,
    alpha: f64,
    back: f64,
}

impl Uniaxial1d {
    pub fn new(e: f64, sy: f64, kbar: f64, hbar: f64) -> Self {
        Uniaxial1d { e, sy, kbar, hbar, eps_p: 0.0, alpha: 0.0, back: 0.0 }
    }

    /// Advances to total axial strain `eps`; returns (stress, alpha).
    pub fn advance(&mut self, eps: f64) -> (f64, f64) {
        let trial = self.e * (eps - self.eps_p);
        let xi = trial - self.back;
        let f = xi.abs() - (self.sy + self.kbar * self.alpha);
        if f > 0.0 {
            let dg = f / (self.e + self.kbar + self.hbar);
            let s = xi.signum();
            self.eps_p += dg * s;
            self.alpha += dg;
            self.back += self.hbar * dg * s;
        }
        (self.e * (eps - self.eps_p), self.alpha)
    }
}

/// Axial strain of a constant-rate uniaxial program at time `t`, and the
/// program vertex times.
pub fn axial_strain(p: &LoadingProgram, t: f64) -> f64 {
    let mut acc = 0.0;
    let mut t0 = 0.0;
    for s in &p.segments {
        let rate = match s.controls[0] {
            cpinn::loading::ChannelControl::StrainRate { rate } => rate.at(t0),
            _ => panic!("axial channel must be strain driven"),
        };
        let dt = (t - t0).min(s.duration);
        if dt <= 0.0 {
            break;
        }
        acc += rate * dt;
        t0 += s.duration;
    }
    acc
}

/// Oracle stresses at the requested times (sorted ascending).
pub fn oracle_stress(p: &LoadingProgram, times: &[f64], e: f64, sy: f64, kbar: f64, hbar: f64) -> Vec<(f64, f64)> {
    let mut events: Vec<(f64, Option<usize>)> = p.boundaries().into_iter().map(|b| (b, None)).collect();
    events.extend(times.iter().enumerate().map(|(i, t)| (*t, Some(i))));
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut m = Uniaxial1d::new(e, sy, kbar, hbar);
    let mut out = vec![(0.0, 0.0); times.len()];
    for (t, idx) in events {
        let r = m.advance(axial_strain(p, t));
        if let Some(i) = idx {
            out[i] = r;
        }
    }
    out
}
