//! State vectors over the atom ⊗ Fock product basis.
//!
//! Ordering is atom-major: indices `0..=n_max` hold `|g,n⟩`, indices
//! `n_max+1..2(n_max+1)` hold `|e,n⟩`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Default leakage ceiling for the two highest Fock levels.
pub const LEAKAGE_LIMIT: f64 = 1e-8;

/// Internal level of the two-level system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Ground,
    Excited,
}

impl Atom {
    pub const BOTH: [Atom; 2] = [Atom::Ground, Atom::Excited];
}

/// Position of `|atom, n⟩` in the product basis.
#[inline]
pub fn basis_index(atom: Atom, n: usize, n_max: usize) -> usize {
    debug_assert!(n <= n_max);
    match atom {
        Atom::Ground => n,
        Atom::Excited => n_max + 1 + n,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_max: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn zeros(n_max: usize) -> Self {
        Self {
            n_max,
            amplitudes: vec![C64::new(0.0, 0.0); 2 * (n_max + 1)],
        }
    }

    pub fn basis(atom: Atom, n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(Error::InvalidParameter(alloc::format!(
                "Fock index {n} exceeds n_max = {n_max}"
            )));
        }
        let mut s = Self::zeros(n_max);
        s.amplitudes[basis_index(atom, n, n_max)] = C64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(n_max: usize, amplitudes: Vec<C64>) -> Result<Self> {
        let expected = 2 * (n_max + 1);
        if amplitudes.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: amplitudes.len(),
            });
        }
        Ok(Self { n_max, amplitudes })
    }

    /// `(c_g|g⟩ + c_e|e⟩) ⊗ Σ_n cavity[n]|n⟩`; `cavity` may be shorter than `n_max+1`.
    pub fn product(atom: [C64; 2], cavity: &[C64], n_max: usize) -> Result<Self> {
        if cavity.len() > n_max + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_max + 1,
                found: cavity.len(),
            });
        }
        let mut s = Self::zeros(n_max);
        for (n, &c) in cavity.iter().enumerate() {
            s.amplitudes[basis_index(Atom::Ground, n, n_max)] = atom[0] * c;
            s.amplitudes[basis_index(Atom::Excited, n, n_max)] = atom[1] * c;
        }
        Ok(s)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn amplitude(&self, atom: Atom, n: usize) -> C64 {
        self.amplitudes[basis_index(atom, n, self.n_max)]
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        for a in &mut self.amplitudes {
            *a /= n;
        }
        Ok(self)
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap_sqr(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn atom_population(&self, atom: Atom) -> f64 {
        let off = basis_index(atom, 0, self.n_max);
        norm_sqr(&self.amplitudes[off..off + self.n_max + 1])
    }

    /// Photon-number distribution with the atom traced out.
    pub fn photon_distribution(&self) -> Vec<f64> {
        photon_distribution(&self.amplitudes, self.n_max)
    }

    /// Combined population of the two highest Fock levels.
    pub fn top_levels_population(&self) -> f64 {
        top_levels_population(&self.amplitudes, self.n_max)
    }

    pub fn check_leakage(&self, limit: f64) -> Result<()> {
        check_leakage(&self.amplitudes, self.n_max, limit)
    }

    pub fn scale(&mut self, factor: C64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }
}

#[inline]
pub(crate) fn inner(bra: &[C64], ket: &[C64]) -> C64 {
    bra.iter()
        .zip(ket)
        .fold(C64::new(0.0, 0.0), |acc, (b, k)| acc + b.conj() * k)
}

#[inline]
pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

pub(crate) fn photon_distribution(v: &[C64], n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|n| v[n].norm_sqr() + v[n_max + 1 + n].norm_sqr())
        .collect()
}

pub(crate) fn top_levels_population(v: &[C64], n_max: usize) -> f64 {
    let lo = n_max.saturating_sub(1);
    (lo..=n_max)
        .map(|n| v[n].norm_sqr() + v[n_max + 1 + n].norm_sqr())
        .sum()
}

pub(crate) fn check_leakage(v: &[C64], n_max: usize, limit: f64) -> Result<()> {
    let population = top_levels_population(v, n_max) / norm_sqr(v).max(f64::MIN_POSITIVE);
    if population >= limit {
        return Err(Error::Truncation {
            population,
            limit,
            n_max,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_layout_is_atom_major() {
        assert_eq!(basis_index(Atom::Ground, 3, 5), 3);
        assert_eq!(basis_index(Atom::Excited, 0, 5), 6);
        assert_eq!(basis_index(Atom::Excited, 5, 5), 11);
    }

    #[test]
    fn product_state_populations() {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let s = StateVector::product([C64::new(h, 0.0), C64::new(0.0, h)], &[C64::new(1.0, 0.0)], 4).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!((s.atom_population(Atom::Ground) - 0.5).abs() < 1e-15);
        assert!((s.atom_population(Atom::Excited) - 0.5).abs() < 1e-15);
        assert!((s.photon_distribution()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn leakage_flags_top_levels() {
        let s = StateVector::basis(Atom::Excited, 3, 4).unwrap();
        assert!(matches!(s.check_leakage(LEAKAGE_LIMIT), Err(Error::Truncation { .. })));
        let s = StateVector::basis(Atom::Excited, 2, 4).unwrap();
        assert!(s.check_leakage(LEAKAGE_LIMIT).is_ok());
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        assert!(StateVector::zeros(2).normalized().is_err());
    }
}
