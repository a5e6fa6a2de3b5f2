//! Piecewise-constant propagation on a uniform grid.
//!
//! States live on `t_j = j·dt`, controls on the midpoints `t_j + dt/2`. Each
//! step applies the exponential of the Hamiltonian frozen at the midpoint.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::controls::{ControlSet, Direction};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, Operator, SystemParams, KHZ};
use crate::state::{self, StateVector, LEAKAGE_LIMIT};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    duration: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// `duration` in μs split into `n_steps` intervals.
    pub fn new(duration: f64, n_steps: usize) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration must be positive, got {duration}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidParameter("a time grid needs at least 2 steps".into()));
        }
        Ok(Self { duration, n_steps })
    }

    /// Grid with step closest to `dt`.
    pub fn with_dt(duration: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let n = (duration / dt).round();
        Self::new(duration, n as usize)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.n_steps as f64
    }

    pub fn state_time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn control_time(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dt()
    }

    /// Same duration, half the step.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid {
            duration: self.duration,
            n_steps: 2 * self.n_steps,
        }
    }
}

/// Exponentiation scheme for a single step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    /// Power series of `exp(-iHdt)` applied to the state, summed to machine precision.
    #[default]
    Taylor,
    /// Dense hermitian eigendecomposition of every step Hamiltonian.
    Eigen,
}

/// Deviations of one system copy from the nominal model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perturbation {
    /// Coupling g per control step, kHz; replaces the constant `params.g`.
    pub coupling_profile: Option<Vec<f64>>,
    /// Cross-talk coefficient ξ: the atom envelope also drives the cavity with ξ·Ω̃.
    pub crosstalk: Option<f64>,
    /// Additive noise on the real part of the atom envelope, kHz per control step.
    pub atom_noise: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Modulated {
    values: Vec<C64>,
    coefficients: Vec<f64>,
}

/// A system copy compiled to a sparse time-dependent Hamiltonian on a grid.
///
/// `H_j = H_static + Σ_m c_m(j) A_m + Σ_d (u_d(j) + noise_d(j)) D_d`, with all
/// terms sharing one sparsity pattern.
#[derive(Debug, Clone)]
pub struct Dynamics {
    n_max: usize,
    grid: TimeGrid,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    static_values: Vec<C64>,
    modulated: Vec<Modulated>,
    directions: [Vec<C64>; 5],
    direction_active: [bool; 5],
    offsets: [Option<Vec<f64>>; 5],
    stepper: Stepper,
    leakage_limit: Option<f64>,
}

/// Scratch buffers for stepping.
#[derive(Debug, Clone)]
pub struct Workspace {
    h: Vec<C64>,
    term: Vec<C64>,
    next: Vec<C64>,
}

impl Workspace {
    pub fn new(dynamics: &Dynamics) -> Self {
        Self {
            h: vec![C64::new(0.0, 0.0); dynamics.cols.len()],
            term: vec![C64::new(0.0, 0.0); dynamics.dim()],
            next: vec![C64::new(0.0, 0.0); dynamics.dim()],
        }
    }
}

impl Dynamics {
    pub fn new(params: &SystemParams, grid: TimeGrid) -> Result<Self> {
        Self::with_perturbation(params, grid, &Perturbation::default())
    }

    pub fn with_perturbation(params: &SystemParams, grid: TimeGrid, perturbation: &Perturbation) -> Result<Self> {
        params.validate()?;
        let n = grid.n_steps();
        for (name, len) in [
            ("coupling profile", perturbation.coupling_profile.as_ref().map(Vec::len)),
            ("noise trace", perturbation.atom_noise.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != n {
                    return Err(Error::InvalidParameter(format!(
                        "{name} has {len} samples but the grid has {n} control steps"
                    )));
                }
            }
        }

        let n_max = params.n_max;
        let (sz_half, exchange_half) = model::drift_parts(n_max);
        let terms = model::build_control_terms(params);
        let sz = &sz_half * (KHZ * params.effective_detuning());
        let (static_op, modulated_op) = match &perturbation.coupling_profile {
            None => (&sz + &(&exchange_half * (KHZ * params.g)), None),
            Some(profile) => (sz, Some((&exchange_half * KHZ, profile.clone()))),
        };
        let xi = perturbation.crosstalk.unwrap_or(0.0);
        let atom_re = if xi != 0.0 {
            &terms.atom[0] + &(&terms.cavity[0] * xi)
        } else {
            terms.atom[0].clone()
        };
        let atom_im = if xi != 0.0 {
            &terms.atom[1] + &(&terms.cavity[1] * xi)
        } else {
            terms.atom[1].clone()
        };
        let direction_ops = [
            atom_re,
            atom_im,
            terms.cavity[0].clone(),
            terms.cavity[1].clone(),
            terms.stark.clone(),
        ];

        let mut all: Vec<&Operator> = vec![&static_op];
        if let Some((op, _)) = &modulated_op {
            all.push(op);
        }
        all.extend(direction_ops.iter());
        let (row_ptr, cols) = union_pattern(&all);
        let gather = |op: &Operator| -> Vec<C64> {
            let mut out = Vec::with_capacity(cols.len());
            for r in 0..row_ptr.len() - 1 {
                for p in row_ptr[r]..row_ptr[r + 1] {
                    out.push(op.element(r, cols[p]));
                }
            }
            out
        };
        let static_values = gather(&static_op);
        let modulated = modulated_op
            .map(|(op, coefficients)| {
                vec![Modulated {
                    values: gather(&op),
                    coefficients,
                }]
            })
            .unwrap_or_default();
        let directions = [
            gather(&direction_ops[0]),
            gather(&direction_ops[1]),
            gather(&direction_ops[2]),
            gather(&direction_ops[3]),
            gather(&direction_ops[4]),
        ];
        let direction_active = core::array::from_fn(|d| directions[d].iter().any(|v| *v != C64::new(0.0, 0.0)));
        let mut offsets: [Option<Vec<f64>>; 5] = Default::default();
        offsets[Direction::AtomRe.index()] = perturbation.atom_noise.clone();
        Ok(Self {
            n_max,
            grid,
            row_ptr,
            cols,
            static_values,
            modulated,
            directions,
            direction_active,
            offsets,
            stepper: Stepper::Taylor,
            leakage_limit: Some(LEAKAGE_LIMIT),
        })
    }

    pub fn with_stepper(mut self, stepper: Stepper) -> Self {
        self.stepper = stepper;
        self
    }

    /// Bound on the top-two-level population enforced during optimization and
    /// final-state propagation; `None` disables the check.
    pub fn with_leakage_limit(mut self, limit: Option<f64>) -> Self {
        self.leakage_limit = limit;
        self
    }

    pub fn leakage_limit(&self) -> Option<f64> {
        self.leakage_limit
    }

    /// Returns an error if `psi` exceeds the leakage bound.
    #[inline]
    pub fn check_leakage(&self, psi: &[C64]) -> Result<()> {
        match self.leakage_limit {
            Some(limit) => state::check_leakage(psi, self.n_max, limit),
            None => Ok(()),
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn check_controls(&self, controls: &ControlSet) -> Result<()> {
        if controls.n_steps() != self.grid.n_steps() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.n_steps(),
                found: controls.n_steps(),
            });
        }
        Ok(())
    }

    fn check_state(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// Fills `ws.h` with the Hamiltonian of step `j` for control values `u`.
    #[inline]
    fn assemble(&self, j: usize, u: &[f64; 5], ws: &mut Workspace) {
        ws.h.copy_from_slice(&self.static_values);
        for m in &self.modulated {
            let c = m.coefficients[j];
            for (h, v) in ws.h.iter_mut().zip(&m.values) {
                *h += v * c;
            }
        }
        for d in 0..5 {
            if !self.direction_active[d] {
                continue;
            }
            let mut c = u[d];
            if let Some(off) = &self.offsets[d] {
                c += off[j];
            }
            if c == 0.0 {
                continue;
            }
            for (h, v) in ws.h.iter_mut().zip(&self.directions[d]) {
                *h += v * c;
            }
        }
    }

    /// Dense step-`j` Hamiltonian (rad/μs) for control values `u`, noise included.
    pub fn hamiltonian(&self, j: usize, u: &[f64; 5]) -> Operator {
        let mut ws = Workspace::new(self);
        self.assemble(j, u, &mut ws);
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[p])] = ws.h[p];
            }
        }
        Operator::new(m)
    }

    /// Applies the step-`j` propagator (forward) or its inverse (backward) in place.
    #[inline]
    pub fn step(&self, j: usize, u: &[f64; 5], psi: &mut [C64], backward: bool, ws: &mut Workspace) {
        self.assemble(j, u, ws);
        let dt = self.grid.dt();
        let t = if backward { -dt } else { dt };
        match self.stepper {
            Stepper::Taylor => taylor_apply(&self.row_ptr, &self.cols, &ws.h, t, psi, &mut ws.term, &mut ws.next),
            Stepper::Eigen => {
                let dim = self.dim();
                let mut m = DMatrix::zeros(dim, dim);
                for r in 0..dim {
                    for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                        m[(r, self.cols[p])] = ws.h[p];
                    }
                }
                let u = linalg::expm_hermitian(&m, t);
                ws.term.copy_from_slice(psi);
                for r in 0..dim {
                    psi[r] = (0..dim).map(|c| u[(r, c)] * ws.term[c]).sum();
                }
            }
        }
    }

    /// `Im⟨χ|D_d|φ⟩` for the derivative operator of direction `d`.
    #[inline]
    pub fn gradient_term(&self, direction: Direction, chi: &[C64], phi: &[C64]) -> f64 {
        let vals = &self.directions[direction.index()];
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..chi.len() {
            let mut row = C64::new(0.0, 0.0);
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += vals[p] * phi[self.cols[p]];
            }
            acc += chi[r].conj() * row;
        }
        acc.im
    }

    /// Forward trajectory from `initial` under `controls`, without truncation checks.
    pub fn forward(&self, initial: &[C64], controls: &ControlSet) -> Result<Trajectory> {
        self.check_controls(controls)?;
        self.check_state(initial.len())?;
        let n = self.grid.n_steps();
        let mut traj = Trajectory::with_capacity(self.n_max, n + 1);
        let mut ws = Workspace::new(self);
        let mut psi = initial.to_vec();
        traj.push(&psi);
        for j in 0..n {
            self.step(j, &controls.values_at(j), &mut psi, false, &mut ws);
            traj.push(&psi);
        }
        Ok(traj)
    }

    /// Backward trajectory ending in `terminal`; `state(j)` is the state at `t_j`.
    pub fn backward(&self, terminal: &[C64], controls: &ControlSet) -> Result<Trajectory> {
        self.check_controls(controls)?;
        self.check_state(terminal.len())?;
        let n = self.grid.n_steps();
        let dim = self.dim();
        let mut data = vec![C64::new(0.0, 0.0); (n + 1) * dim];
        let mut ws = Workspace::new(self);
        let mut psi = terminal.to_vec();
        data[n * dim..].copy_from_slice(&psi);
        for j in (0..n).rev() {
            self.step(j, &controls.values_at(j), &mut psi, true, &mut ws);
            data[j * dim..(j + 1) * dim].copy_from_slice(&psi);
        }
        Ok(Trajectory {
            n_max: self.n_max,
            data,
        })
    }

    /// Final state only, checking the leakage bound at every step.
    pub fn final_state(&self, initial: &[C64], controls: &ControlSet) -> Result<Vec<C64>> {
        self.check_controls(controls)?;
        self.check_state(initial.len())?;
        let mut ws = Workspace::new(self);
        let mut psi = initial.to_vec();
        for j in 0..self.grid.n_steps() {
            self.step(j, &controls.values_at(j), &mut psi, false, &mut ws);
            self.check_leakage(&psi)?;
        }
        Ok(psi)
    }
}

/// Sorted union of the nonzero patterns of `ops`, as CSR row pointers and columns.
fn union_pattern(ops: &[&Operator]) -> (Vec<usize>, Vec<usize>) {
    let dim = ops[0].dim();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::new();
    row_ptr.push(0);
    for r in 0..dim {
        for c in 0..dim {
            if ops.iter().any(|op| op.element(r, c) != C64::new(0.0, 0.0)) {
                cols.push(c);
            }
        }
        row_ptr.push(cols.len());
    }
    (row_ptr, cols)
}

/// `psi ← exp(-i H t) psi` by a Taylor series summed until the terms drop below
/// machine precision. The step is subdivided so each piece has `‖H‖·|t| ≤ 1/2`.
fn taylor_apply(
    row_ptr: &[usize],
    cols: &[usize],
    h: &[C64],
    t: f64,
    psi: &mut [C64],
    term: &mut Vec<C64>,
    next: &mut Vec<C64>,
) {
    let dim = psi.len();
    let mut bound = 0.0f64;
    for r in 0..dim {
        let s: f64 = h[row_ptr[r]..row_ptr[r + 1]].iter().map(|v| v.norm()).sum();
        bound = bound.max(s);
    }
    let norm0 = state::norm_sqr(psi);
    if norm0 == 0.0 {
        return;
    }
    let scaled = bound * t.abs();
    let pieces = if scaled > 0.5 {
        (scaled / 0.5).ceil() as usize
    } else {
        1
    };
    let h_t = t / pieces as f64;
    let tol = 1e-34 * norm0;
    for _ in 0..pieces {
        term.copy_from_slice(psi);
        for k in 1..=64 {
            let factor = C64::new(0.0, -h_t / k as f64);
            let mut size = 0.0;
            for r in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for p in row_ptr[r]..row_ptr[r + 1] {
                    acc += h[p] * term[cols[p]];
                }
                let v = acc * factor;
                size += v.norm_sqr();
                next[r] = v;
            }
            core::mem::swap(term, next);
            for (p, t) in psi.iter_mut().zip(term.iter()) {
                *p += t;
            }
            if size <= tol {
                break;
            }
        }
    }
}

/// States at every grid time, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n_max: usize,
    data: Vec<C64>,
}

impl Trajectory {
    pub(crate) fn with_capacity(n_max: usize, n_states: usize) -> Self {
        Self {
            n_max,
            data: Vec::with_capacity(n_states * 2 * (n_max + 1)),
        }
    }

    pub(crate) fn push(&mut self, psi: &[C64]) {
        self.data.extend_from_slice(psi);
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    /// Number of stored states (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, j: usize) -> &[C64] {
        let d = self.dim();
        &self.data[j * d..(j + 1) * d]
    }

    pub fn state_vector(&self, j: usize) -> StateVector {
        StateVector::from_amplitudes(self.n_max, self.state(j).to_vec())
            .expect("stored states have the trajectory dimension")
    }

    pub fn initial(&self) -> StateVector {
        self.state_vector(0)
    }

    pub fn final_state(&self) -> StateVector {
        self.state_vector(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[C64]> {
        self.data.chunks_exact(self.dim())
    }

    /// Fails if any state puts at least `limit` population into the top two Fock levels.
    pub fn check_leakage(&self, limit: f64) -> Result<()> {
        self.states()
            .try_for_each(|s| state::check_leakage(s, self.n_max, limit))
    }
}

/// Forward propagation with the leakage invariant enforced along the trajectory.
pub fn propagate_forward(
    initial: &StateVector,
    controls: &ControlSet,
    params: &SystemParams,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    check_n_max(initial, params)?;
    let traj = Dynamics::new(params, *grid)?.forward(initial.amplitudes(), controls)?;
    traj.check_leakage(LEAKAGE_LIMIT)?;
    Ok(traj)
}

/// Integrates the Schrödinger equation from `τ` back to 0 starting at `terminal`.
pub fn propagate_backward(
    terminal: &StateVector,
    controls: &ControlSet,
    params: &SystemParams,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    check_n_max(terminal, params)?;
    Dynamics::new(params, *grid)?.backward(terminal.amplitudes(), controls)
}

fn check_n_max(state: &StateVector, params: &SystemParams) -> Result<()> {
    if state.n_max() != params.n_max {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: state.dim(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::{Channel, Complexity, GuessSpec};
    use crate::state::Atom;

    fn zero_controls(grid: &TimeGrid) -> ControlSet {
        ControlSet::zeros(grid.n_steps())
    }

    #[test]
    fn grid_geometry() {
        let g = TimeGrid::with_dt(40.0, 0.01).unwrap();
        assert_eq!(g.n_steps(), 4000);
        assert!((g.control_time(0) - 0.005).abs() < 1e-15);
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
    }

    #[test]
    fn vacuum_is_stationary() {
        let p = SystemParams::paper_default(4);
        let grid = TimeGrid::new(30.0, 300).unwrap();
        let psi = StateVector::basis(Atom::Ground, 0, 4).unwrap();
        let traj = propagate_forward(&psi, &zero_controls(&grid), &p, &grid).unwrap();
        for s in traj.states() {
            assert!((s[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn taylor_matches_dense_exponential() {
        let p = SystemParams::paper_default(6);
        let grid = TimeGrid::new(20.0, 200).unwrap();
        let controls = GuessSpec::cat().build(&grid).unwrap();
        let psi = StateVector::basis(Atom::Excited, 0, 6).unwrap();
        let d = Dynamics::new(&p, grid).unwrap();
        let a = d.forward(psi.amplitudes(), &controls).unwrap();
        let b = d
            .clone()
            .with_stepper(Stepper::Eigen)
            .forward(psi.amplitudes(), &controls)
            .unwrap();
        for (x, y) in a.states().zip(b.states()) {
            let diff: f64 = x.iter().zip(y).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
            assert!(diff < 1e-12, "diff {diff}");
        }
    }

    #[test]
    fn large_steps_are_subdivided() {
        // ‖H‖dt ≫ 1 forces several Taylor pieces; compare against the dense exponential.
        let p = SystemParams::paper_default(3);
        let grid = TimeGrid::new(40.0, 4).unwrap();
        let controls = ControlSet::zeros(4)
            .with_channel(Channel::Atom, Complexity::Real, vec![C64::new(300.0, 0.0); 4])
            .unwrap();
        let psi = StateVector::basis(Atom::Excited, 0, 3).unwrap();
        let d = Dynamics::new(&p, grid).unwrap();
        let a = d.forward(psi.amplitudes(), &controls).unwrap();
        let b = d
            .with_stepper(Stepper::Eigen)
            .forward(psi.amplitudes(), &controls)
            .unwrap();
        let diff: f64 = a
            .state(4)
            .iter()
            .zip(b.state(4))
            .map(|(u, v)| (u - v).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-11, "diff {diff}");
    }

    #[test]
    fn zero_terminal_gives_zero_trajectory() {
        let p = SystemParams::paper_default(3);
        let grid = TimeGrid::new(10.0, 50).unwrap();
        let controls = GuessSpec::sup02().build(&grid).unwrap();
        let traj = propagate_backward(&StateVector::zeros(3), &controls, &p, &grid).unwrap();
        assert!(traj.states().all(|s| s.iter().all(|a| *a == C64::new(0.0, 0.0))));
    }

    #[test]
    fn truncation_is_reported() {
        let p = SystemParams::paper_default(2);
        let grid = TimeGrid::new(10.0, 100).unwrap();
        let controls = ControlSet::zeros(100)
            .with_channel(Channel::Cavity, Complexity::Real, vec![C64::new(200.0, 0.0); 100])
            .unwrap();
        let psi = StateVector::basis(Atom::Ground, 0, 2).unwrap();
        let err = propagate_forward(&psi, &controls, &p, &grid).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let p = SystemParams::paper_default(3);
        let grid = TimeGrid::new(10.0, 50).unwrap();
        let psi = StateVector::basis(Atom::Ground, 0, 4).unwrap();
        assert!(propagate_forward(&psi, &zero_controls(&grid), &p, &grid).is_err());
        let psi = StateVector::basis(Atom::Ground, 0, 3).unwrap();
        assert!(propagate_forward(&psi, &ControlSet::zeros(49), &p, &grid).is_err());
        let bad = Perturbation {
            atom_noise: Some(vec![0.0; 10]),
            ..Perturbation::default()
        };
        assert!(Dynamics::with_perturbation(&p, grid, &bad).is_err());
    }
}
