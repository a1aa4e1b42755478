//! Random parameter sets for exploration sweeps.

use cpinn::constitutive::{MaterialParams, ModelKind};
use cpinn::tensor::moduli_from_e_nu;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Rows of the uniform parameter table (moduli in GPa, stresses in MPa).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distribution {
    #[serde(rename = "i")]
    Isotropic,
    #[serde(rename = "ii")]
    Kinematic,
    #[serde(rename = "iii")]
    Damage,
}

impl Distribution {
    pub fn label(self) -> &'static str {
        match self {
            Distribution::Isotropic => "i",
            Distribution::Kinematic => "ii",
            Distribution::Damage => "iii",
        }
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Distribution::Isotropic => ModelKind::Vmih,
            Distribution::Kinematic => ModelKind::Vmkh,
            Distribution::Damage => ModelKind::VmDamage,
        }
    }

    /// `(E [GPa], nu, sigma_y0 [MPa], hardening or alpha_s)` ranges.
    pub fn ranges(self) -> [(f64, f64); 4] {
        match self {
            Distribution::Isotropic | Distribution::Kinematic => {
                [(100.0, 400.0), (0.1, 0.4), (100.0, 400.0), (1.0, 100.0)]
            }
            Distribution::Damage => [(40.0, 100.0), (0.2, 0.4), (400.0, 800.0), (0.2, 0.4)]
        }
    }

    /// One draw, returned in MPa.
    pub fn draw<R: Rng>(self, rng: &mut R) -> MaterialParams {
        let [e, nu, sy, h] = self.ranges().map(|(a, b)| rng.random_range(a..b));
        let (kappa, mu) = moduli_from_e_nu(e * 1e3, nu);
        let mut p = MaterialParams::elastic(kappa, mu);
        p.sigma_y0 = sy;
        match self {
            Distribution::Isotropic => p.kbar = h * 1e3,
            Distribution::Kinematic => p.hbar = h * 1e3,
            Distribution::Damage => p.alpha_s = h,
        }
        p
    }

    pub fn draw_n(self, n: usize, seed: u64) -> Vec<MaterialParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cpinn::tensor::convert_moduli;
    use proptest::prelude::*;

    #[test]
    fn draws_are_seeded() {
        let a = Distribution::Isotropic.draw_n(5, 3);
        assert_eq!(a, Distribution::Isotropic.draw_n(5, 3));
        assert_ne!(a, Distribution::Isotropic.draw_n(5, 4));
    }

    proptest! {
        #[test]
        fn draws_stay_in_their_ranges(seed in any::<u64>(), row in 0usize..3) {
            let row = [Distribution::Isotropic, Distribution::Kinematic, Distribution::Damage][row];
            let r = row.ranges();
            for p in row.draw_n(4, seed) {
                let (e, nu) = convert_moduli(p.kappa, p.mu);
                let inside = |x: f64, (a, b): (f64, f64)| x >= a * (1.0 - 1e-12) && x <= b * (1.0 + 1e-12);
                prop_assert!(inside(e / 1e3, r[0]));
                prop_assert!(inside(nu, r[1]));
                prop_assert!(inside(p.sigma_y0, r[2]));
                let h = match row {
                    Distribution::Isotropic => p.kbar / 1e3,
                    Distribution::Kinematic => p.hbar / 1e3,
                    Distribution::Damage => p.alpha_s,
                };
                prop_assert!(inside(h, r[3]));
                prop_assert!(p.validate(row.model_kind()).is_ok());
            }
        }
    }
}
