//! Truncated Jaynes-Cummings model in the frame rotating with the cavity.
//!
//! Frequencies in [`SystemParams`] and control envelopes are cyclic
//! frequencies in kHz (a value of 50 is the angular frequency 2π×50 kHz).
//! Operators are angular, in rad/μs, so `exp(-i H t)` with `t` in μs is the
//! propagator. [`KHZ`] converts between the two.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
use core::fmt;
use core::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::state::{basis_index, Atom, StateVector};
#[allow(unused_imports)]
use num_traits::Float;

/// One cyclic kHz expressed as an angular frequency in rad/μs.
pub const KHZ: f64 = TAU * 1e-3;

/// Physical constants of the coupled atom-cavity system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Vacuum Rabi frequency, kHz.
    pub g: f64,
    /// Atom-cavity detuning ω_a − ω_f, kHz.
    pub detuning: f64,
    /// Fock-space truncation.
    pub n_max: usize,
    /// Shift of the cavity frequency, kHz; enters the σ_z term as −offset.
    pub cavity_freq_offset: f64,
}

impl SystemParams {
    pub fn new(g: f64, detuning: f64, n_max: usize) -> Result<Self> {
        let p = Self {
            g,
            detuning,
            n_max,
            cavity_freq_offset: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Resonant system with g = 50 kHz.
    pub fn paper_default(n_max: usize) -> Self {
        Self {
            g: 50.0,
            detuning: 0.0,
            n_max,
            cavity_freq_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::InvalidParameter(format!("g must be positive, got {}", self.g)));
        }
        if !self.detuning.is_finite() || !self.cavity_freq_offset.is_finite() {
            return Err(Error::InvalidParameter("detuning must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    /// Detuning seen by the σ_z term, kHz.
    pub fn effective_detuning(&self) -> f64 {
        self.detuning - self.cavity_freq_offset
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }
}

/// Dense operator over the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
    hermitian: bool,
}

/// Tolerance used to classify an operator as hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

impl Operator {
    pub fn new(matrix: DMatrix<C64>) -> Self {
        let hermitian = matrix.is_square() && linalg::hermitian_deviation(&matrix) < HERMITIAN_TOL;
        Self { matrix, hermitian }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Operator {
        Operator::new(self.matrix.adjoint())
    }

    pub fn product(&self, other: &Operator) -> Operator {
        Operator::new(&self.matrix * &other.matrix)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator::new(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    pub fn scaled(&self, factor: C64) -> Operator {
        Operator::new(self.matrix.map(|x| x * factor))
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        let n_max = state.n_max();
        let amps = state.amplitudes();
        let out: Vec<C64> = (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.matrix[(r, c)] * amps[c]).sum())
            .collect();
        StateVector::from_amplitudes(n_max, out).expect("operator and state dimensions agree")
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, state: &StateVector) -> C64 {
        state.inner(&self.apply(state))
    }

    pub fn hermitian_deviation(&self) -> f64 {
        linalg::hermitian_deviation(&self.matrix)
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator::new(self.matrix + rhs.matrix)
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator::new(&self.matrix + &rhs.matrix)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scaled(C64::new(rhs, 0.0))
    }
}

fn from_entries(n_max: usize, entries: impl Iterator<Item = (usize, usize, C64)>) -> Operator {
    let dim = 2 * (n_max + 1);
    let mut m = DMatrix::zeros(dim, dim);
    for (r, c, v) in entries {
        m[(r, c)] += v;
    }
    Operator::new(m)
}

/// Cavity annihilation operator `a ⊗ 1`.
pub fn annihilation(n_max: usize) -> Operator {
    from_entries(
        n_max,
        Atom::BOTH.into_iter().flat_map(move |atom| {
            (1..=n_max).map(move |n| {
                (
                    basis_index(atom, n - 1, n_max),
                    basis_index(atom, n, n_max),
                    C64::new((n as f64).sqrt(), 0.0),
                )
            })
        }),
    )
}

/// Atomic lowering operator `σ = |g⟩⟨e|`.
pub fn sigma_minus(n_max: usize) -> Operator {
    from_entries(
        n_max,
        (0..=n_max).map(move |n| {
            (
                basis_index(Atom::Ground, n, n_max),
                basis_index(Atom::Excited, n, n_max),
                C64::new(1.0, 0.0),
            )
        }),
    )
}

/// `σ_z = |e⟩⟨e| − |g⟩⟨g|`.
pub fn sigma_z(n_max: usize) -> Operator {
    from_entries(
        n_max,
        Atom::BOTH.into_iter().flat_map(move |atom| {
            let sign = if atom == Atom::Excited { 1.0 } else { -1.0 };
            (0..=n_max).map(move |n| {
                let i = basis_index(atom, n, n_max);
                (i, i, C64::new(sign, 0.0))
            })
        }),
    )
}

/// Photon number `a†a`.
pub fn number(n_max: usize) -> Operator {
    from_entries(
        n_max,
        Atom::BOTH.into_iter().flat_map(move |atom| {
            (0..=n_max).map(move |n| {
                let i = basis_index(atom, n, n_max);
                (i, i, C64::new(n as f64, 0.0))
            })
        }),
    )
}

/// Total excitation number `a†a + |e⟩⟨e|`.
pub fn excitation_number(n_max: usize) -> Operator {
    from_entries(
        n_max,
        Atom::BOTH.into_iter().flat_map(move |atom| {
            let extra = if atom == Atom::Excited { 1.0 } else { 0.0 };
            (0..=n_max).map(move |n| {
                let i = basis_index(atom, n, n_max);
                (i, i, C64::new(n as f64 + extra, 0.0))
            })
        }),
    )
}

/// The two pieces of the drift: `σ_z/2` and the exchange term `(a†σ + σ†a)/2`, both dimensionless.
pub(crate) fn drift_parts(n_max: usize) -> (Operator, Operator) {
    let a = annihilation(n_max);
    let s = sigma_minus(n_max);
    let exchange = a.adjoint().product(&s) + s.adjoint().product(&a);
    (&sigma_z(n_max) * 0.5, &exchange * 0.5)
}

/// Drift Hamiltonian `Δ σ_z/2 + (g/2)(a†σ + σ†a)` in rad/μs.
pub fn build_drift(params: &SystemParams) -> Operator {
    let (sz_half, exchange_half) = drift_parts(params.n_max);
    &(&sz_half * (KHZ * params.effective_detuning())) + &(&exchange_half * (KHZ * params.g))
}

/// Operators multiplying the real control channels, in rad/μs per kHz of control.
///
/// `H(t) = H₀ + Re Ω̃·atom[0] + Im Ω̃·atom[1] + Re η̃·cavity[0] + Im η̃·cavity[1] + Δ·stark`.
#[derive(Debug, Clone)]
pub struct ControlTerms {
    pub atom: [Operator; 2],
    pub cavity: [Operator; 2],
    pub stark: Operator,
}

fn quadratures(lowering: &Operator) -> [Operator; 2] {
    let raising = lowering.adjoint();
    let re = &(&raising + lowering) * (0.5 * KHZ);
    let im = (&raising + &(lowering * -1.0)).scaled(C64::new(0.0, 0.5 * KHZ));
    [re, im]
}

pub fn build_control_terms(params: &SystemParams) -> ControlTerms {
    ControlTerms {
        atom: quadratures(&sigma_minus(params.n_max)),
        cavity: quadratures(&annihilation(params.n_max)),
        stark: &sigma_z(params.n_max) * (0.5 * KHZ),
    }
}

/// Dressed-state label at resonance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DressedLabel {
    /// `|g,0⟩`.
    Vacuum,
    /// `(|g,n+1⟩ + |e,n⟩)/√2`.
    Plus(usize),
    /// `(|g,n+1⟩ − |e,n⟩)/√2`.
    Minus(usize),
}

impl fmt::Display for DressedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DressedLabel::Vacuum => write!(f, "|g,0>"),
            DressedLabel::Plus(n) => write!(f, "|+,{n}>"),
            DressedLabel::Minus(n) => write!(f, "|-,{n}>"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DressedLevel {
    /// Energy in rad/μs.
    pub energy: f64,
    pub vector: StateVector,
    /// Total excitation number of the manifold the level belongs to.
    pub manifold: usize,
    pub label: Option<DressedLabel>,
}

/// A transition between levels of adjacent excitation manifolds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedTransition {
    pub lower: DressedLabel,
    pub upper: DressedLabel,
    /// `|E_upper − E_lower|` in rad/μs.
    pub frequency: f64,
    /// `E_upper − E_lower` in rad/μs.
    pub gap: f64,
}

impl DressedTransition {
    /// Envelope frequency (rad/μs) that drives the transition upward; drive
    /// terms enter as `(ε σ⁺ + ε* σ⁻)/2`, so a component `e^{iωt}` is resonant at `ω = −gap`.
    pub fn drive_frequency(&self) -> f64 {
        -self.gap
    }
}

impl fmt::Display for DressedTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.lower, self.upper)
    }
}

#[derive(Debug, Clone)]
pub struct DressedSpectrum {
    pub levels: Vec<DressedLevel>,
}

impl DressedSpectrum {
    pub fn level(&self, label: DressedLabel) -> Option<&DressedLevel> {
        self.levels.iter().find(|l| l.label == Some(label))
    }

    /// All labeled transitions between adjacent excitation manifolds.
    pub fn transitions(&self) -> Vec<DressedTransition> {
        let mut out = Vec::new();
        for lo in &self.levels {
            for hi in &self.levels {
                if hi.manifold != lo.manifold + 1 {
                    continue;
                }
                if let (Some(l), Some(u)) = (lo.label, hi.label) {
                    out.push(DressedTransition {
                        lower: l,
                        upper: u,
                        frequency: (hi.energy - lo.energy).abs(),
                        gap: hi.energy - lo.energy,
                    });
                }
            }
        }
        out.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        out
    }
}

/// Diagonalizes the drift within each excitation-number manifold.
///
/// Levels are sorted by energy. At resonance every complete manifold is labeled
/// `|±,n⟩`; the truncated top level `|e,n_max⟩` stays unlabeled.
pub fn dressed_spectrum(params: &SystemParams) -> DressedSpectrum {
    let n_max = params.n_max;
    let h = build_drift(params);
    let resonant = params.effective_detuning() == 0.0;
    let mut levels = Vec::new();
    for manifold in 0..=n_max + 1 {
        let mut members = Vec::new();
        if manifold <= n_max {
            members.push(basis_index(Atom::Ground, manifold, n_max));
        }
        if manifold >= 1 {
            members.push(basis_index(Atom::Excited, manifold - 1, n_max));
        }
        let k = members.len();
        let block = DMatrix::from_fn(k, k, |r, c| h.element(members[r], members[c]));
        let (values, vectors) = linalg::hermitian_eigen(&block);
        for (col, &energy) in values.iter().enumerate() {
            let mut vector = StateVector::zeros(n_max);
            // fix the global phase so that the first nonzero component is real positive
            let pivot = (0..k)
                .find(|&r| vectors[(r, col)].norm() > 1e-12)
                .map(|r| vectors[(r, col)])
                .unwrap_or(C64::new(1.0, 0.0));
            let phase = pivot.conj() / pivot.norm();
            for r in 0..k {
                vector.amplitudes_mut()[members[r]] = vectors[(r, col)] * phase;
            }
            let label = if !resonant {
                None
            } else if manifold == 0 {
                Some(DressedLabel::Vacuum)
            } else if k == 2 {
                let n = manifold - 1;
                let ratio = vector.amplitude(Atom::Excited, n) / vector.amplitude(Atom::Ground, n + 1);
                Some(if ratio.re > 0.0 {
                    DressedLabel::Plus(n)
                } else {
                    DressedLabel::Minus(n)
                })
            } else {
                None
            };
            levels.push(DressedLevel {
                energy,
                vector,
                manifold,
                label,
            });
        }
    }
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.manifold.cmp(&b.manifold)));
    DressedSpectrum { levels }
}

/// Vacuum Rabi period `T_n = 2π/(g√(n+1))` of the manifold with `n` photons, μs (`g` in kHz).
pub fn rabi_period(g: f64, n: usize) -> f64 {
    TAU / (KHZ * g * ((n + 1) as f64).sqrt())
}

/// Sum of half Rabi periods `Σ_{j=0}^{n} T_j/2`, μs.
pub fn fock_speed_limit(g: f64, n: usize) -> f64 {
    (0..=n).map(|j| 0.5 * rabi_period(g, j)).sum()
}

/// Time for a single resonant `|e,n⟩ → |g,n+1⟩` swap, `T_n/2 = π/(g√(n+1))`, μs.
pub fn half_rabi_time(g: f64, n: usize) -> f64 {
    PI / (KHZ * g * ((n + 1) as f64).sqrt())
}
