//! Target cavity states and initial product states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::functional::TargetSpec;
use crate::model::SystemParams;
use crate::state::StateVector;
#[allow(unused_imports)]
use num_traits::Float;

/// Fock levels kept free above a target's support.
pub const HEADROOM: usize = 2;

/// Tail mass of a cat state allowed beyond `n_max − HEADROOM`.
pub const CAT_TAIL: f64 = 1e-10;

fn check_headroom(n: usize, n_max: usize) -> Result<()> {
    if n + HEADROOM > n_max {
        return Err(Error::InvalidParameter(format!(
            "target needs Fock level {n} but n_max = {n_max} leaves fewer than {HEADROOM} levels of headroom"
        )));
    }
    Ok(())
}

/// `|n⟩`.
pub fn fock_target(n: usize, n_max: usize) -> Result<TargetSpec> {
    check_headroom(n, n_max)?;
    let mut v = vec![C64::new(0.0, 0.0); n + 1];
    v[n] = C64::new(1.0, 0.0);
    TargetSpec::new(v)
}

/// `(|0⟩ + |n⟩)/√2`, defined for `n > 1`.
pub fn fock_superposition_target(n: usize, n_max: usize) -> Result<TargetSpec> {
    if n <= 1 {
        return Err(Error::InvalidParameter(format!(
            "superposition (|0> + |n>)/sqrt(2) requires n > 1, got n = {n}"
        )));
    }
    check_headroom(n, n_max)?;
    let mut v = vec![C64::new(0.0, 0.0); n + 1];
    v[0] = C64::new(FRAC_1_SQRT_2, 0.0);
    v[n] = C64::new(FRAC_1_SQRT_2, 0.0);
    TargetSpec::new(v)
}

/// Unnormalized even-cat amplitudes `2 e^{-|α|²/2} α^n/√n!` for even `n`, zero for odd `n`.
fn cat_amplitudes(alpha: C64, len: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(len);
    let mut coherent = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..len {
        if n > 0 {
            coherent *= alpha / (n as f64).sqrt();
        }
        out.push(if n % 2 == 0 { coherent * 2.0 } else { C64::new(0.0, 0.0) });
    }
    out
}

/// Population of the even cat state above Fock level `n`.
pub fn cat_tail_mass(alpha: C64, n: usize) -> f64 {
    let norm = 2.0 * (1.0 + (-2.0 * alpha.norm_sqr()).exp());
    let kept: f64 = cat_amplitudes(alpha, n + 1).iter().map(|a| a.norm_sqr()).sum::<f64>() / norm;
    (1.0 - kept).max(0.0)
}

/// Smallest truncation keeping the cat tail above `n_max − HEADROOM` below [`CAT_TAIL`]; at least 20.
pub fn cat_truncation(alpha: C64) -> usize {
    let mut n = 0;
    while cat_tail_mass(alpha, n) >= CAT_TAIL {
        n += 1;
    }
    (n + HEADROOM).max(20)
}

/// `(|α⟩ + |−α⟩)/√(2(1 + e^{-2|α|²}))` truncated at `n_max`.
pub fn even_cat_target(alpha: C64, n_max: usize) -> Result<TargetSpec> {
    let support = n_max.saturating_sub(HEADROOM);
    let tail = cat_tail_mass(alpha, support);
    if tail >= CAT_TAIL || n_max < HEADROOM {
        return Err(Error::InvalidParameter(format!(
            "cat state with alpha = {alpha} leaves {tail:.2e} population above n = {support}; increase n_max"
        )));
    }
    let mut v = cat_amplitudes(alpha, support + 1);
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    TargetSpec::new(v)
}

/// Initial atom state `cos θ|g⟩ + e^{iφ} sin θ|e⟩` and a Fock state of the cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSpec {
    pub theta: f64,
    pub phi: f64,
    pub fock: usize,
}

impl InitialSpec {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi, fock: 0 }
    }

    pub fn ground() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn excited() -> Self {
        Self::new(core::f64::consts::FRAC_PI_2, 0.0)
    }

    /// `(|g⟩ + e^{iφ}|e⟩)/√2`.
    pub fn balanced(phi: f64) -> Self {
        Self::new(core::f64::consts::FRAC_PI_4, phi)
    }

    pub fn atom_coefficients(&self) -> [C64; 2] {
        [
            C64::new(self.theta.cos(), 0.0),
            C64::from_polar(self.theta.sin(), self.phi),
        ]
    }
}

pub fn initial_state(spec: &InitialSpec, params: &SystemParams) -> Result<StateVector> {
    params.validate()?;
    if spec.fock > params.n_max {
        return Err(Error::InvalidParameter(format!(
            "initial Fock level {} exceeds n_max = {}",
            spec.fock, params.n_max
        )));
    }
    if !spec.theta.is_finite() || !spec.phi.is_finite() {
        return Err(Error::InvalidParameter("initial angles must be finite".into()));
    }
    let mut cavity = vec![C64::new(0.0, 0.0); spec.fock + 1];
    cavity[spec.fock] = C64::new(1.0, 0.0);
    StateVector::product(spec.atom_coefficients(), &cavity, params.n_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Atom;

    fn mean_and_var(t: &TargetSpec) -> (f64, f64) {
        let p: Vec<f64> = t.cavity().iter().map(|a| a.norm_sqr()).collect();
        let m: f64 = p.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let m2: f64 = p.iter().enumerate().map(|(n, p)| (n * n) as f64 * p).sum();
        (m, m2 - m * m)
    }

    #[test]
    fn fock_examples() {
        let vac = fock_target(0, 10).unwrap();
        assert_eq!(vac.cavity(), &[C64::new(1.0, 0.0)]);
        let four = fock_target(4, 10).unwrap();
        let (m, v) = mean_and_var(&four);
        assert_eq!((m, v), (4.0, 0.0));
        let three = fock_target(3, 10).unwrap();
        let overlap: C64 = four
            .cavity()
            .iter()
            .zip(three.cavity())
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert_eq!(overlap.norm(), 0.0);
        assert!(fock_target(9, 10).is_err());
    }

    #[test]
    fn superposition_examples() {
        let t = fock_superposition_target(2, 10).unwrap();
        let (m, v) = mean_and_var(&t);
        assert!((m - 1.0).abs() < 1e-15 && (v.sqrt() - 1.0).abs() < 1e-15);
        let (m, _) = mean_and_var(&fock_superposition_target(4, 10).unwrap());
        assert!((m - 2.0).abs() < 1e-15);
        let err = fock_superposition_target(1, 10).unwrap_err();
        assert!(alloc::format!("{err}").contains("n > 1"));
    }

    #[test]
    fn cat_examples() {
        let alpha = C64::new(1.0, 1.0);
        let t = even_cat_target(alpha, cat_truncation(alpha)).unwrap();
        assert!(t.cavity().iter().skip(1).step_by(2).all(|a| *a == C64::new(0.0, 0.0)));
        let vac = even_cat_target(C64::new(0.0, 0.0), 20).unwrap();
        assert!((vac.cavity()[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(vac.cavity()[1..].iter().all(|a| a.norm() == 0.0));
        assert!(even_cat_target(C64::new(3.0, 0.0), 10).is_err());
        assert_eq!(cat_truncation(alpha), 20);
    }

    #[test]
    fn initial_examples() {
        let p = SystemParams::paper_default(5);
        let g = initial_state(&InitialSpec::ground(), &p).unwrap();
        assert_eq!(g, StateVector::basis(Atom::Ground, 0, 5).unwrap());
        let e = initial_state(&InitialSpec::excited(), &p).unwrap();
        assert!((e.amplitude(Atom::Excited, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(e.amplitude(Atom::Ground, 0).norm() < 1e-16);
        let s = initial_state(&InitialSpec::balanced(core::f64::consts::FRAC_PI_2), &p).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((s.amplitude(Atom::Ground, 0) - C64::new(h, 0.0)).norm() < 1e-15);
        assert!((s.amplitude(Atom::Excited, 0) - C64::new(0.0, h)).norm() < 1e-15);
    }
}
