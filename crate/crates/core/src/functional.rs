//! Final-time infidelity, running cost and the adjoint boundary condition.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::controls::{Channel, ControlSet};
use crate::error::{Error, Result};
use crate::model::KHZ;
use crate::propagation::TimeGrid;
use crate::state::{self, Atom, StateVector};
#[allow(unused_imports)]
use num_traits::Float;

/// Desired cavity state; the atom is left unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    cavity: Vec<C64>,
}

impl TargetSpec {
    /// `cavity` holds Fock amplitudes starting at `|0⟩`; must have unit norm.
    pub fn new(cavity: Vec<C64>) -> Result<Self> {
        let norm = state::norm_sqr(&cavity).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("target norm is {norm}, expected 1")));
        }
        Ok(Self { cavity })
    }

    pub fn cavity(&self) -> &[C64] {
        &self.cavity
    }

    /// `|atom⟩ ⊗ |Φ⟩` in a space truncated at `n_max`.
    pub fn with_atom(&self, atom: Atom, n_max: usize) -> Result<StateVector> {
        let coeffs = match atom {
            Atom::Ground => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            Atom::Excited => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        };
        StateVector::product(coeffs, &self.cavity, n_max)
    }

    /// `⟨a, Φ|ψ⟩` for both atomic levels.
    #[inline]
    pub(crate) fn overlaps(&self, psi: &[C64], n_max: usize) -> [C64; 2] {
        let mut out = [C64::new(0.0, 0.0); 2];
        for (n, t) in self.cavity.iter().enumerate().take(n_max + 1) {
            let t = t.conj();
            out[0] += t * psi[n];
            out[1] += t * psi[n_max + 1 + n];
        }
        out
    }

    #[inline]
    pub(crate) fn infidelity(&self, psi: &[C64], n_max: usize) -> f64 {
        let [g, e] = self.overlaps(psi, n_max);
        (1.0 - g.norm_sqr() - e.norm_sqr()).clamp(0.0, 1.0)
    }

    pub(crate) fn project(&self, psi: &[C64], n_max: usize) -> Vec<C64> {
        let [g, e] = self.overlaps(psi, n_max);
        let mut out = alloc::vec![C64::new(0.0, 0.0); psi.len()];
        for (n, t) in self.cavity.iter().enumerate().take(n_max + 1) {
            out[n] = g * t;
            out[n_max + 1 + n] = e * t;
        }
        out
    }
}

/// Shape function S(t) bounding the update of a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `sin²(πt/τ)`.
    SinSquared,
    /// Constant value in [0, 1]; 0 freezes the channel.
    Constant(f64),
}

impl Shape {
    pub fn value(&self, t: f64, duration: f64) -> f64 {
        match *self {
            Shape::SinSquared => {
                let s = (PI * t / duration).sin();
                s * s
            }
            Shape::Constant(c) => c,
        }
    }
}

/// Step-size weights λ and shape functions per channel (atom, cavity, Stark).
///
/// λ weighs control changes measured as angular frequencies (rad/μs), so a
/// difference of `δ` kHz contributes `λ (2π·10⁻³ δ)² dt / S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalWeights {
    pub lambda: [f64; 3],
    pub shape: [Shape; 3],
}

impl Default for FunctionalWeights {
    fn default() -> Self {
        Self::uniform(1.0, Shape::SinSquared)
    }
}

impl FunctionalWeights {
    pub fn uniform(lambda: f64, shape: Shape) -> Self {
        Self {
            lambda: [lambda; 3],
            shape: [shape; 3],
        }
    }

    pub fn lambda(&self, channel: Channel) -> f64 {
        self.lambda[channel.index()]
    }

    /// λ converted to act on control differences in kHz.
    #[inline]
    pub(crate) fn kernel(&self, channel: Channel) -> f64 {
        self.lambda[channel.index()] * KHZ * KHZ
    }

    pub fn shape(&self, channel: Channel) -> Shape {
        self.shape[channel.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for ch in Channel::ALL {
            let l = self.lambda(ch);
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "lambda for {} must be positive, got {l}",
                    ch.name()
                )));
            }
            if let Shape::Constant(c) = self.shape(ch) {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidParameter(format!(
                        "constant shape for {} must lie in [0, 1]",
                        ch.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `1 − Σ_a |⟨a ⊗ Φ|ψ⟩|²`.
pub fn final_time_infidelity(final_state: &StateVector, target: &TargetSpec) -> f64 {
    target.infidelity(final_state.amplitudes(), final_state.n_max())
}

/// `Σ_a |a,Φ⟩⟨a,Φ|ψ⟩`, the terminal condition of the adjoint state.
pub fn adjoint_boundary(final_state: &StateVector, target: &TargetSpec) -> StateVector {
    let n_max = final_state.n_max();
    StateVector::from_amplitudes(n_max, target.project(final_state.amplitudes(), n_max))
        .expect("projection keeps the dimension")
}

/// `Σ_c Σ_j (λ_c / S_c(t_j)) |u_c(t_j) − u_c,ref(t_j)|² dt` over the control midpoints,
/// with differences in rad/μs.
pub fn running_cost(
    controls: &ControlSet,
    reference: &ControlSet,
    weights: &FunctionalWeights,
    grid: &TimeGrid,
) -> Result<f64> {
    let n = grid.n_steps();
    for c in [controls, reference] {
        if c.n_steps() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.n_steps(),
            });
        }
    }
    let dt = grid.dt();
    let mut total = 0.0;
    for ch in Channel::ALL {
        let lambda = weights.kernel(ch);
        let shape = weights.shape(ch);
        let (a, b) = (controls.samples(ch), reference.samples(ch));
        for j in 0..n {
            let diff = (a[j] - b[j]).norm_sqr();
            if diff == 0.0 {
                continue;
            }
            let s = shape.value(grid.control_time(j), grid.duration());
            if s <= 0.0 {
                return Err(Error::ShapeDivision { index: j });
            }
            total += lambda / s * diff * dt;
        }
    }
    Ok(total)
}
