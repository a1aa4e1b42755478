//! Symmetric second-order tensors in Voigt form and the isotropic elastic
//! stiffness.
//!
//! Components are stored in the order (11, 22, 33, 12, 13, 23) as true tensor
//! components. Shear terms are doubled only inside contractions.

use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Voigt weights for the double contraction.
pub const VOIGT_WEIGHTS: [f64; 6] = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];

/// Voigt index to (row, column) of the 3x3 matrix.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

pub const CHANNEL_NAMES: [&str; 6] = ["11", "22", "33", "12", "13", "23"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymTensor<S = f64> {
    pub v: [S; 6],
}

impl<S: Scalar> SymTensor<S> {
    pub fn new(v: [S; 6]) -> Self {
        SymTensor { v }
    }

    pub fn zero() -> Self {
        SymTensor { v: [S::zero(); 6] }
    }

    /// `c * 1`
    pub fn identity(c: S) -> Self {
        let z = S::zero();
        SymTensor {
            v: [c, c, c, z, z, z],
        }
    }

    pub fn diag(a: S, b: S, c: S) -> Self {
        let z = S::zero();
        SymTensor {
            v: [a, b, c, z, z, z],
        }
    }

    pub fn from_f64(x: &SymTensor<f64>) -> Self {
        SymTensor {
            v: x.v.map(S::constant),
        }
    }

    pub fn values(&self) -> SymTensor<f64> {
        SymTensor {
            v: self.v.map(|s| s.value()),
        }
    }

    pub fn trace(&self) -> S {
        self.v[0] + self.v[1] + self.v[2]
    }

    pub fn dev(&self) -> Self {
        let m = self.trace() / 3.0;
        let mut v = self.v;
        for x in &mut v[..3] {
            *x = *x - m;
        }
        SymTensor { v }
    }

    /// `a : b`, shear terms counted twice.
    pub fn double_contract(&self, other: &Self) -> S {
        let a = &self.v;
        let b = &other.v;
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + (a[3] * b[3] + a[4] * b[4] + a[5] * b[5]) * 2.0
    }

    /// Frobenius norm `sqrt(a : a)`. The zero tensor gets a zero gradient.
    pub fn norm(&self) -> S {
        let sq = self.double_contract(self);
        if sq.value() > 0.0 {
            sq.sqrt()
        } else {
            S::zero()
        }
    }

    pub fn scale(&self, c: S) -> Self {
        SymTensor {
            v: self.v.map(|x| x * c),
        }
    }

    pub fn scale_f64(&self, c: f64) -> Self {
        SymTensor {
            v: self.v.map(|x| x * c),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        SymTensor { v: self.v.map(f) }
    }
}

impl SymTensor<f64> {
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (k, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            m[i][j] = self.v[k];
            m[j][i] = self.v[k];
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl<S> Index<usize> for SymTensor<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.v[i]
    }
}

impl<S: Scalar> Add for SymTensor<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut v = self.v;
        for (x, y) in v.iter_mut().zip(o.v) {
            *x = *x + y;
        }
        SymTensor { v }
    }
}

impl<S: Scalar> Sub for SymTensor<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut v = self.v;
        for (x, y) in v.iter_mut().zip(o.v) {
            *x = *x - y;
        }
        SymTensor { v }
    }
}

impl<S: Scalar> Neg for SymTensor<S> {
    type Output = Self;
    fn neg(self) -> Self {
        SymTensor { v: self.v.map(|x| -x) }
    }
}

impl<S: Scalar> Mul<f64> for SymTensor<S> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.scale_f64(c)
    }
}

/// Mean pressure (compression positive), equivalent shear stress and
/// relative deviatoric stress.
#[derive(Debug, Clone, Copy)]
pub struct Invariants<S> {
    pub p: S,
    pub tau: S,
    pub eta: SymTensor<S>,
}

/// `p = -tr(sigma)/3`, `eta = dev(sigma) - beta`, `tau = sqrt(3/2) |eta|`.
pub fn invariants<S: Scalar>(sigma: &SymTensor<S>, beta: &SymTensor<S>) -> Invariants<S> {
    let eta = sigma.dev() - *beta;
    Invariants {
        p: -sigma.trace() / 3.0,
        tau: eta.norm() * 1.5_f64.sqrt(),
        eta,
    }
}

/// Isotropic stiffness `C = kappa 1 (x) 1 + 2 mu (I - 1/3 1 (x) 1)`.
#[derive(Debug, Clone, Copy)]
pub struct Stiffness<S = f64> {
    pub kappa: S,
    pub mu: S,
}

pub fn elastic_stiffness<S: Scalar>(kappa: S, mu: S) -> Result<Stiffness<S>> {
    let (k, m) = (kappa.value(), mu.value());
    if !(k > 0.0 && m > 0.0) {
        return Err(Error::NonPositiveModulus { kappa: k, mu: m });
    }
    Ok(Stiffness { kappa, mu })
}

impl<S: Scalar> Stiffness<S> {
    /// Unchecked constructor for training iterates, which may leave the
    /// admissible range transiently.
    pub fn new_unchecked(kappa: S, mu: S) -> Self {
        Stiffness { kappa, mu }
    }

    /// `C : eps`
    pub fn apply(&self, eps: &SymTensor<S>) -> SymTensor<S> {
        let lam_tr = (self.kappa - self.mu * (2.0 / 3.0)) * eps.trace();
        let two_mu = self.mu * 2.0;
        let e = &eps.v;
        SymTensor {
            v: [
                lam_tr + two_mu * e[0],
                lam_tr + two_mu * e[1],
                lam_tr + two_mu * e[2],
                two_mu * e[3],
                two_mu * e[4],
                two_mu * e[5],
            ],
        }
    }

    /// `C^-1 : sigma = tr(sigma)/(9 kappa) 1 + dev(sigma)/(2 mu)`
    pub fn apply_inverse(&self, sigma: &SymTensor<S>) -> SymTensor<S> {
        let vol = sigma.trace() / (self.kappa * 9.0);
        let d = sigma.dev().scale(S::constant(1.0) / (self.mu * 2.0));
        d + SymTensor::identity(vol)
    }

    /// `a : C : b`
    pub fn contract(&self, a: &SymTensor<S>, b: &SymTensor<S>) -> S {
        a.double_contract(&self.apply(b))
    }

    /// C1111
    pub fn c1111(&self) -> S {
        self.kappa + self.mu * (4.0 / 3.0)
    }
}

impl Stiffness<f64> {
    /// 6x6 matrix acting on Voigt vectors with engineering shear strains.
    pub fn to_matrix(&self) -> [[f64; 6]; 6] {
        let lam = self.kappa - 2.0 * self.mu / 3.0;
        let mut m = [[0.0; 6]; 6];
        for (i, row) in m.iter_mut().enumerate().take(3) {
            row[..3].fill(lam);
            row[i] += 2.0 * self.mu;
        }
        for (i, row) in m.iter_mut().enumerate().skip(3) {
            row[i] = self.mu;
        }
        m
    }
}

/// `(kappa, mu) -> (E, nu)`
pub fn convert_moduli<S: Scalar>(kappa: S, mu: S) -> (S, S) {
    let denom = kappa * 3.0 + mu;
    let e = kappa * mu * 9.0 / denom;
    let nu = (kappa * 3.0 - mu * 2.0) / (denom * 2.0);
    (e, nu)
}

/// `(E, nu) -> (kappa, mu)`
pub fn moduli_from_e_nu(e: f64, nu: f64) -> (f64, f64) {
    (e / (3.0 * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn dev_of_uniaxial() {
        let s = 3.0;
        let d = SymTensor::diag(s, 0.0, 0.0).dev();
        assert!(close(d[0], 2.0, 1e-15));
        assert!(close(d[1], -1.0, 1e-15));
        assert!(close(d[2], -1.0, 1e-15));
        assert_eq!(SymTensor::identity(7.0).dev().max_abs(), 0.0);
    }

    #[test]
    fn invariants_uniaxial_and_hydrostatic() {
        let s = -250.0;
        let inv = invariants(&SymTensor::diag(s, 0.0, 0.0), &SymTensor::zero());
        assert!(close(inv.tau, s.abs(), 1e-14));
        assert!(close(inv.p, -s / 3.0, 1e-14));

        let inv = invariants(&SymTensor::identity(-100.0), &SymTensor::zero());
        assert!(close(inv.p, 100.0, 1e-14));
        assert_eq!(inv.tau, 0.0);

        let inv = invariants(&SymTensor::<f64>::zero(), &SymTensor::zero());
        assert_eq!((inv.p, inv.tau), (0.0, 0.0));
    }

    #[test]
    fn stiffness_components() {
        let c = elastic_stiffness(111.11e3, 83.33e3).unwrap();
        let s = c.apply(&SymTensor::diag(1.0, 0.0, 0.0));
        assert!(close(s[0], 111.11e3 + 4.0 * 83.33e3 / 3.0, 1e-14));
        assert!(close(c.c1111(), 222.216_666_666_666_67e3, 1e-14));

        let ev = 1e-3;
        let s = c.apply(&SymTensor::identity(ev / 3.0));
        assert!(close(s[0], 111.11e3 * ev, 1e-13));
        assert!(s.v[3..].iter().all(|x| *x == 0.0));

        let e = SymTensor::new([1e-3, -1e-3, 0.0, 2e-4, 0.0, -3e-4]);
        let s = c.apply(&e);
        for k in 0..6 {
            assert!(close(s[k], 2.0 * 83.33e3 * e[k], 1e-13) || e[k] == 0.0);
        }
        assert!(elastic_stiffness(0.0, 1.0).is_err());
        assert!(elastic_stiffness(1.0, -1.0).is_err());
    }

    #[test]
    fn moduli_conversion() {
        let (e, nu) = convert_moduli(111.11, 83.33);
        assert!((e - 200.0).abs() < 0.01, "E = {e}");
        assert!((nu - 0.2).abs() < 1e-4, "nu = {nu}");
        let (_, nu) = convert_moduli(5.0, 5.0);
        assert!(close(nu, 0.125, 1e-15));
    }

    fn tensor() -> impl Strategy<Value = SymTensor> {
        prop::array::uniform6(-1e3..1e3f64).prop_map(SymTensor::new)
    }

    fn full_contract(a: &SymTensor, b: &SymTensor) -> f64 {
        let (ma, mb) = (a.to_matrix(), b.to_matrix());
        (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| ma[i][j] * mb[i][j])
            .sum()
    }

    proptest! {
        #[test]
        fn dev_is_traceless(x in tensor()) {
            let d = x.dev();
            prop_assert!(d.trace().abs() <= 1e-12 * x.norm().max(1e-300));
            let dd = d.dev();
            for k in 0..6 {
                prop_assert!((dd[k] - d[k]).abs() <= 1e-12 * x.norm());
            }
        }

        #[test]
        fn contraction_matches_matrix_form(a in tensor(), b in tensor()) {
            let v = a.double_contract(&b);
            let m = full_contract(&a, &b);
            prop_assert!((v - m).abs() <= 1e-12 * a.norm() * b.norm() + 1e-300);
            prop_assert_eq!(v, b.double_contract(&a));
        }

        #[test]
        fn stiffness_symmetric_and_positive(
            a in tensor(), b in tensor(), kappa in 1.0..1e3f64, mu in 1.0..1e3f64
        ) {
            let c = elastic_stiffness(kappa, mu).unwrap();
            let ab = c.contract(&a, &b);
            let ba = c.contract(&b, &a);
            prop_assert!((ab - ba).abs() <= 1e-12 * (kappa + mu) * a.norm() * b.norm());
            if a.norm() > 0.0 {
                prop_assert!(c.contract(&a, &a) > 0.0);
            }
            let back = c.apply_inverse(&c.apply(&a));
            for k in 0..6 {
                prop_assert!((back[k] - a[k]).abs() <= 1e-10 * a.norm());
            }
        }

        #[test]
        fn tau_is_homogeneous(x in tensor(), c in -10.0..10.0f64) {
            let z = SymTensor::zero();
            let t1 = invariants(&x.scale(c), &z).tau;
            let t0 = invariants(&x, &z).tau;
            prop_assert!((t1 - c.abs() * t0).abs() <= 1e-12 * (1.0 + t1.abs()));
        }

        #[test]
        fn moduli_round_trip(e in 1.0..1e3f64, nu in -0.9..0.49f64) {
            let (k, m) = moduli_from_e_nu(e, nu);
            let (e2, nu2) = convert_moduli(k, m);
            prop_assert!((e2 - e).abs() <= 1e-12 * e);
            prop_assert!((nu2 - nu).abs() <= 1e-12 * (1.0 + nu.abs()) * 10.0);
        }
    }
}
