//! Krotov's linear method: backward adjoint propagation under the old
//! controls, then a sequential forward sweep applying the update
//! `Δu(t) = (S(t)/λ) Im⟨χ(t)|∂H/∂u|φ_new(t)⟩` step by step.

use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::controls::{ControlSet, GuessSpec};
use crate::error::{Error, Result};
use crate::exec::{Executor, Monitor, Sequential};
use crate::functional::{running_cost, FunctionalWeights, TargetSpec};
use crate::model::SystemParams;
use crate::propagation::{Dynamics, TimeGrid, Trajectory, Workspace};
use crate::state::StateVector;

/// Allowed increase of J_τ between iterations before the run is declared non-monotonic.
pub const MONOTONIC_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationConfig {
    pub weights: FunctionalWeights,
    pub guess: ControlSet,
    pub max_iterations: usize,
    pub stop_infidelity: f64,
    pub stop_delta_j: f64,
    /// Control steps per digitalization block; 1 leaves every sample free.
    pub hold_steps: usize,
}

impl OptimizationConfig {
    pub fn new(weights: FunctionalWeights, guess: ControlSet) -> Self {
        Self {
            weights,
            guess,
            max_iterations: 1000,
            stop_infidelity: 1e-4,
            stop_delta_j: 1e-9,
            hold_steps: 1,
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        self.weights.validate()?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.stop_infidelity > 0.0) || !(self.stop_delta_j > 0.0) {
            return Err(Error::InvalidParameter("stopping thresholds must be positive".into()));
        }
        if self.hold_steps == 0 {
            return Err(Error::InvalidParameter("hold_steps must be at least 1".into()));
        }
        if self.guess.n_steps() != grid.n_steps() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_steps(),
                found: self.guess.n_steps(),
            });
        }
        Ok(())
    }
}

/// Initial state, target, model and grid of a single optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub initial: StateVector,
    pub target: TargetSpec,
    pub params: SystemParams,
    pub grid: TimeGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `J_τ + J_t`.
    pub j_total: f64,
    pub j_tau: f64,
    pub j_t: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// J_τ reached `stop_infidelity`.
    Converged,
    /// J_τ decreased by less than `stop_delta_j` in one iteration.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRecord {
    pub iterations: Vec<IterationRecord>,
    pub controls: ControlSet,
    /// Final J_τ of every system copy, in copy order.
    pub per_copy: Vec<f64>,
    pub stop_reason: StopReason,
    pub wall_ms: f64,
}

impl OptimizationRecord {
    pub fn final_infidelity(&self) -> f64 {
        self.iterations.last().map_or(1.0, |r| r.j_tau)
    }

    /// Number of completed update sweeps.
    pub fn iteration_count(&self) -> usize {
        self.iterations.last().map_or(0, |r| r.iteration)
    }

    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }
}

struct Member<'a> {
    dynamics: &'a Dynamics,
    phi: Vec<C64>,
    ws: Workspace,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_copies(copies: &[Dynamics], initial: &StateVector) -> Result<()> {
    let first = copies
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one system copy is required".into()))?;
    for d in copies {
        if d.grid() != first.grid() {
            return Err(Error::InvalidParameter(
                "all system copies must share one time grid".into(),
            ));
        }
        if d.dim() != initial.dim() {
            return Err(Error::DimensionMismatch {
                expected: d.dim(),
                found: initial.dim(),
            });
        }
    }
    Ok(())
}

/// Final states of every copy under `controls`, with the leakage check.
pub(crate) fn final_states<E: Executor>(
    copies: &[Dynamics],
    initial: &StateVector,
    controls: &ControlSet,
    exec: &E,
) -> Result<Vec<Vec<C64>>> {
    exec.map(copies, |_, d| d.final_state(initial.amplitudes(), controls))
        .into_iter()
        .collect()
}

/// One forward sweep for an ensemble of copies sharing the controls. The update
/// at each step is the mean of the per-copy terms, summed in copy order; with
/// `hold_steps > 1` it is computed at the start of each block and held across it.
fn sweep<E: Executor>(
    copies: &[Dynamics],
    adjoints: &[Trajectory],
    prev: &ControlSet,
    initial: &StateVector,
    weights: &FunctionalWeights,
    hold_steps: usize,
    exec: &E,
    mut record: Option<&mut Trajectory>,
) -> Result<(ControlSet, Vec<Vec<C64>>)> {
    let grid = *copies[0].grid();
    let n = grid.n_steps();
    let directions = prev.active_directions();
    let scale = 1.0 / copies.len() as f64;
    let mut members: Vec<Member> = copies
        .iter()
        .map(|d| Member {
            dynamics: d,
            phi: initial.amplitudes().to_vec(),
            ws: Workspace::new(d),
        })
        .collect();
    let mut controls = prev.clone();
    let mut delta = [0.0f64; 5];
    for j in 0..n {
        if j % hold_steps == 0 {
            let terms: Vec<[f64; 5]> = exec.map_mut(&mut members, |k, m| {
                let chi = adjoints[k].state(j);
                let mut g = [0.0; 5];
                for &d in &directions {
                    g[d.index()] = m.dynamics.gradient_term(d, chi, &m.phi);
                }
                g
            });
            let block = hold_steps.min(n - j);
            let t = grid.state_time(j) + 0.5 * block as f64 * grid.dt();
            delta = [0.0; 5];
            for &d in &directions {
                let ch = d.channel();
                let s = weights.shape(ch).value(t, grid.duration());
                let sum: f64 = terms.iter().map(|g| g[d.index()]).sum();
                let v = s / weights.kernel(ch) * (sum * scale);
                if !v.is_finite() {
                    return Err(Error::NonFiniteUpdate { index: j });
                }
                delta[d.index()] = v;
            }
        }
        for &d in &directions {
            controls.add_to_direction(d, j, delta[d.index()]);
        }
        let u = controls.values_at(j);
        let checks: Vec<Result<()>> = exec.map_mut(&mut members, |_, m| {
            m.dynamics.step(j, &u, &mut m.phi, false, &mut m.ws);
            m.dynamics.check_leakage(&m.phi)
        });
        checks.into_iter().collect::<Result<()>>()?;
        if let Some(traj) = record.as_deref_mut() {
            traj.push(&members[0].phi);
        }
    }
    Ok((controls, members.into_iter().map(|m| m.phi).collect()))
}

/// One Krotov update for a single system: sequentially computes the new controls
/// from `adjoint` (propagated backward under `prev_controls`) and the forward
/// state propagated under the new controls. Returns the new controls and trajectory.
pub fn krotov_update_sweep(
    prev_controls: &ControlSet,
    adjoint: &Trajectory,
    initial: &StateVector,
    dynamics: &Dynamics,
    weights: &FunctionalWeights,
) -> Result<(ControlSet, Trajectory)> {
    let copies = core::slice::from_ref(dynamics);
    check_copies(copies, initial)?;
    if prev_controls.n_steps() != dynamics.grid().n_steps() {
        return Err(Error::DimensionMismatch {
            expected: dynamics.grid().n_steps(),
            found: prev_controls.n_steps(),
        });
    }
    if adjoint.len() != dynamics.grid().n_steps() + 1 || adjoint.dim() != dynamics.dim() {
        return Err(Error::DimensionMismatch {
            expected: dynamics.grid().n_steps() + 1,
            found: adjoint.len(),
        });
    }
    let mut traj = Trajectory::with_capacity(dynamics.n_max(), dynamics.grid().n_steps() + 1);
    traj.push(initial.amplitudes());
    let (controls, _) = sweep(
        copies,
        core::slice::from_ref(adjoint),
        prev_controls,
        initial,
        weights,
        1,
        &Sequential,
        Some(&mut traj),
    )?;
    Ok((controls, traj))
}

/// Krotov iteration over one or more copies sharing the controls; J_τ is the
/// mean over copies.
pub fn optimize_copies<E: Executor, M: Monitor>(
    copies: &[Dynamics],
    initial: &StateVector,
    target: &TargetSpec,
    config: &OptimizationConfig,
    exec: &E,
    monitor: &mut M,
) -> Result<OptimizationRecord> {
    check_copies(copies, initial)?;
    let grid = *copies[0].grid();
    config.validate(&grid)?;
    let n_max = copies[0].n_max();
    let start = monitor.now_ms();

    let mut controls = config.guess.block_averaged(config.hold_steps);
    let mut finals = final_states(copies, initial, &controls, exec)?;
    let mut per_copy: Vec<f64> = finals.iter().map(|f| target.infidelity(f, n_max)).collect();
    let mut j_tau = mean(&per_copy);
    let mut iterations = Vec::new();
    let first = IterationRecord {
        iteration: 0,
        j_total: j_tau,
        j_t: 0.0,
        j_tau,
        wall_ms: monitor.now_ms() - start,
    };
    monitor.on_iteration(&first);
    iterations.push(first);

    let mut stop_reason = StopReason::MaxIterations;
    if j_tau <= config.stop_infidelity {
        stop_reason = StopReason::Converged;
    } else {
        for iteration in 1..=config.max_iterations {
            let adjoints: Vec<Trajectory> = exec
                .map(copies, |k, d| d.backward(&target.project(&finals[k], n_max), &controls))
                .into_iter()
                .collect::<Result<_>>()?;
            let (next, next_finals) = sweep(
                copies,
                &adjoints,
                &controls,
                initial,
                &config.weights,
                config.hold_steps,
                exec,
                None,
            )?;
            drop(adjoints);
            let next_per_copy: Vec<f64> = next_finals.iter().map(|f| target.infidelity(f, n_max)).collect();
            let next_j_tau = mean(&next_per_copy);
            if next_j_tau > j_tau + MONOTONIC_SLACK {
                return Err(Error::NonMonotonic {
                    iteration,
                    previous: j_tau,
                    current: next_j_tau,
                });
            }
            let j_t = running_cost(&next, &controls, &config.weights, &grid)?;
            let rec = IterationRecord {
                iteration,
                j_total: next_j_tau + j_t,
                j_tau: next_j_tau,
                j_t,
                wall_ms: monitor.now_ms() - start,
            };
            monitor.on_iteration(&rec);
            iterations.push(rec);
            let decrease = j_tau - next_j_tau;
            controls = next;
            finals = next_finals;
            per_copy = next_per_copy;
            j_tau = next_j_tau;
            if j_tau <= config.stop_infidelity {
                stop_reason = StopReason::Converged;
                break;
            }
            if decrease < config.stop_delta_j {
                stop_reason = StopReason::Stalled;
                break;
            }
        }
    }
    Ok(OptimizationRecord {
        iterations,
        controls,
        per_copy,
        stop_reason,
        wall_ms: monitor.now_ms() - start,
    })
}

/// Optimizes the controls of a single unperturbed system.
pub fn optimize<M: Monitor>(
    problem: &Problem,
    config: &OptimizationConfig,
    monitor: &mut M,
) -> Result<OptimizationRecord> {
    let dynamics = Dynamics::new(&problem.params, problem.grid)?;
    optimize_copies(
        core::slice::from_ref(&dynamics),
        &problem.initial,
        &problem.target,
        config,
        &Sequential,
        monitor,
    )
}

/// Everything but the duration of a speed-limit sweep; the grid for each
/// duration keeps `dt` and the guess is rebuilt from `guess`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTemplate {
    pub initial: StateVector,
    pub target: TargetSpec,
    pub params: SystemParams,
    pub dt: f64,
    pub guess: GuessSpec,
    pub weights: FunctionalWeights,
    pub max_iterations: usize,
    pub stop_infidelity: f64,
    pub stop_delta_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedLimitCurve {
    /// `(τ, final J_τ)` in ascending τ.
    pub points: Vec<(f64, f64)>,
    /// Smallest τ whose optimization reached `stop_infidelity`.
    pub threshold: Option<f64>,
}

/// Independent optimizations for every duration in `durations` (ascending).
pub fn speed_limit_sweep<E: Executor>(
    template: &SweepTemplate,
    durations: &[f64],
    exec: &E,
) -> Result<SpeedLimitCurve> {
    if durations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("durations must be strictly ascending".into()));
    }
    let results: Vec<Result<f64>> = exec.map(durations, |_, &tau| {
        let grid = TimeGrid::with_dt(tau, template.dt)?;
        let mut config = OptimizationConfig::new(template.weights, template.guess.build(&grid)?);
        config.max_iterations = template.max_iterations;
        config.stop_infidelity = template.stop_infidelity;
        config.stop_delta_j = template.stop_delta_j;
        let problem = Problem {
            initial: template.initial.clone(),
            target: template.target.clone(),
            params: template.params,
            grid,
        };
        Ok(optimize(&problem, &config, &mut ())?.final_infidelity())
    });
    let mut points = Vec::with_capacity(durations.len());
    for (&tau, r) in durations.iter().zip(results) {
        points.push((tau, r?));
    }
    let threshold = points
        .iter()
        .find(|(_, j)| *j <= template.stop_infidelity)
        .map(|(t, _)| *t);
    Ok(SpeedLimitCurve { points, threshold })
}
