//! Ensembles of perturbed system copies sharing one control set: position-
//! dependent coupling along the atom's flight, cross-talk of the atom drive
//! onto the cavity, cavity frequency offsets, and noisy digitized pulses.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controls::ControlSet;
use crate::error::{Error, Result};
use crate::exec::{Executor, Monitor};
use crate::functional::TargetSpec;
use crate::krotov::{final_states, optimize_copies, OptimizationConfig, OptimizationRecord};
use crate::model::SystemParams;
use crate::propagation::{Dynamics, Perturbation, TimeGrid};
use crate::state::StateVector;
#[allow(unused_imports)]
use num_traits::Float;

/// Cavity mode map `g(x,y,z) = g₀ exp(−((x−x₀)²+(y−y₀)²)/σ²) cos(2π(z−z₀)/λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeGeometry {
    /// Peak coupling, kHz.
    pub g0: f64,
    /// Mode waist σ, mm.
    pub waist: f64,
    /// Wavelength λ, mm.
    pub wavelength: f64,
    /// Cavity centre and closest antinode `(x₀, y₀, z₀)`, mm.
    pub center: [f64; 3],
    /// Atom velocity along x, mm/μs.
    pub velocity: f64,
}

impl Default for ModeGeometry {
    fn default() -> Self {
        Self {
            g0: 50.0,
            waist: 6.0,
            wavelength: 5.87,
            center: [0.0; 3],
            velocity: 0.06,
        }
    }
}

impl ModeGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.waist > 0.0) || !(self.wavelength > 0.0) || !(self.velocity > 0.0) || !(self.g0 > 0.0) {
            return Err(Error::InvalidParameter(
                "mode geometry needs positive g0, waist, wavelength and velocity".into(),
            ));
        }
        Ok(())
    }

    /// Coupling at every control midpoint for an atom crossing the mode centre at
    /// `τ/2`, displaced by `offset` (mm).
    pub fn coupling_profile(&self, offset: [f64; 3], grid: &TimeGrid) -> Vec<f64> {
        let mid = 0.5 * grid.duration();
        (0..grid.n_steps())
            .map(|j| {
                let x = self.center[0] + self.velocity * (grid.control_time(j) - mid) + offset[0];
                coupling_at(self, x, self.center[1] + offset[1], self.center[2] + offset[2])
            })
            .collect()
    }
}

/// Coupling in kHz at position `(x, y, z)` in mm.
pub fn coupling_at(geometry: &ModeGeometry, x: f64, y: f64, z: f64) -> f64 {
    let [x0, y0, z0] = geometry.center;
    let r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
    geometry.g0 * (-r2 / (geometry.waist * geometry.waist)).exp() * (2.0 * PI * (z - z0) / geometry.wavelength).cos()
}

/// Cross-talk coefficient ξ with a relative spread; the ensemble uses `ξ(1 ± spread)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTalk {
    pub mean: f64,
    pub spread: f64,
}

impl Default for CrossTalk {
    fn default() -> Self {
        Self { mean: 4.0, spread: 0.1 }
    }
}

impl CrossTalk {
    pub fn values(&self) -> Vec<f64> {
        vec![self.mean * (1.0 - self.spread), self.mean * (1.0 + self.spread)]
    }
}

/// Bounded white noise on the real part of the atom drive and the hold time of digitized pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Maximum noise amplitude, kHz.
    pub amplitude: f64,
    /// Digitization block, μs; noise is drawn once per block and controls are held across it.
    pub block: f64,
    pub seeds: Vec<u64>,
}

impl NoiseSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            amplitude: 1.0,
            block: 0.1,
            seeds: vec![seed, seed.wrapping_add(1)],
        }
    }
}

/// A seeded noise realization on the control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    pub seed: u64,
    /// kHz, one per control step.
    pub samples: Vec<f64>,
}

impl NoiseTrace {
    /// Samples uniform in `[−amplitude, amplitude]`, constant over `block_steps` steps.
    pub fn generate(seed: u64, amplitude: f64, block_steps: usize, n_steps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(n_steps);
        while samples.len() < n_steps {
            let v = if amplitude > 0.0 {
                rng.random_range(-amplitude..=amplitude)
            } else {
                0.0
            };
            for _ in 0..block_steps.max(1).min(n_steps - samples.len()) {
                samples.push(v);
            }
        }
        Self { seed, samples }
    }
}

/// The four classes of perturbation, one per row of the per-effect summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Effect {
    /// Position-dependent coupling and position uncertainty.
    Coupling,
    /// The atom drive also driving the cavity.
    CrossTalk,
    /// Cavity frequency offsets.
    CavityFrequency,
    /// Digitized, noisy atom drive.
    Digitization,
}

impl Effect {
    pub const ALL: [Effect; 4] = [
        Effect::Coupling,
        Effect::CrossTalk,
        Effect::CavityFrequency,
        Effect::Digitization,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Effect::Coupling => "(i)-(ii)",
            Effect::CrossTalk => "(iii)",
            Effect::CavityFrequency => "(iv)",
            Effect::Digitization => "(v)",
        }
    }
}

/// Discrete parameter values spanned by an ensemble; `None` disables an effect.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub geometry: ModeGeometry,
    /// Offsets applied independently along x, y and z, mm.
    pub positions: Option<Vec<f64>>,
    pub crosstalk: Option<Vec<f64>>,
    /// Shifts of the cavity frequency, kHz.
    pub frequency_offsets: Option<Vec<f64>>,
    pub noise: Option<NoiseSpec>,
}

impl EnsembleSpec {
    /// No perturbation: a single copy of the nominal system.
    pub fn nominal() -> Self {
        Self {
            geometry: ModeGeometry::default(),
            positions: None,
            crosstalk: None,
            frequency_offsets: None,
            noise: None,
        }
    }

    /// All four effects with their default ranges; 27·2·3·2 = 324 copies.
    pub fn all_effects(seed: u64) -> Self {
        Effect::ALL.iter().fold(Self::nominal(), |s, &e| s.with_effect(e, seed))
    }

    pub fn single_effect(effect: Effect, seed: u64) -> Self {
        Self::nominal().with_effect(effect, seed)
    }

    pub fn with_effect(mut self, effect: Effect, seed: u64) -> Self {
        match effect {
            Effect::Coupling => self.positions = Some(vec![-0.5, 0.0, 0.5]),
            Effect::CrossTalk => self.crosstalk = Some(CrossTalk::default().values()),
            Effect::CavityFrequency => self.frequency_offsets = Some(vec![-5.0, 0.0, 5.0]),
            Effect::Digitization => self.noise = Some(NoiseSpec::new(seed)),
        }
        self
    }

    pub fn effects(&self) -> Vec<Effect> {
        let on = [
            self.positions.is_some(),
            self.crosstalk.is_some(),
            self.frequency_offsets.is_some(),
            self.noise.is_some(),
        ];
        Effect::ALL
            .into_iter()
            .zip(on)
            .filter(|(_, on)| *on)
            .map(|(e, _)| e)
            .collect()
    }

    pub fn copy_count(&self) -> usize {
        self.positions.as_ref().map_or(1, |p| p.len().pow(3))
            * self.crosstalk.as_ref().map_or(1, Vec::len)
            * self.frequency_offsets.as_ref().map_or(1, Vec::len)
            * self.noise.as_ref().map_or(1, |n| n.seeds.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        for (name, v) in [
            ("positions", &self.positions),
            ("crosstalk", &self.crosstalk),
            ("frequency_offsets", &self.frequency_offsets),
        ] {
            if let Some(v) = v {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "ensemble {name} must be non-empty and finite"
                    )));
                }
            }
        }
        if let Some(xi) = &self.crosstalk {
            if xi.iter().any(|x| *x <= 0.0) {
                return Err(Error::InvalidParameter(
                    "cross-talk coefficients must be positive".into(),
                ));
            }
        }
        if let Some(n) = &self.noise {
            if n.seeds.is_empty() || !(n.amplitude >= 0.0) || !(n.block > 0.0) {
                return Err(Error::InvalidParameter(
                    "noise needs at least one seed, amplitude >= 0 and a positive block".into(),
                ));
            }
        }
        Ok(())
    }

    /// Control steps per digitization block (1 without the digitization effect).
    pub fn hold_steps(&self, grid: &TimeGrid) -> Result<usize> {
        let Some(noise) = &self.noise else { return Ok(1) };
        let ratio = noise.block / grid.dt();
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * ratio {
            return Err(Error::InvalidParameter(format!(
                "digitization block {} us is not a multiple of dt = {} us",
                noise.block,
                grid.dt()
            )));
        }
        Ok(steps as usize)
    }
}

/// Parameter tuple identifying one system copy; copies are ordered by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopyKey {
    pub position: Option<[f64; 3]>,
    pub crosstalk: Option<f64>,
    pub frequency_offset: Option<f64>,
    /// Index and seed of the noise trace.
    pub noise: Option<(usize, u64)>,
}

impl CopyKey {
    fn sort_key(&self) -> [f64; 6] {
        let p = self.position.unwrap_or([0.0; 3]);
        [
            p[0],
            p[1],
            p[2],
            self.crosstalk.unwrap_or(0.0),
            self.frequency_offset.unwrap_or(0.0),
            self.noise.map_or(-1.0, |(i, _)| i as f64),
        ]
    }

    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.sort_key()
            .iter()
            .zip(other.sort_key().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemCopy {
    pub key: CopyKey,
    pub params: SystemParams,
    pub perturbation: Perturbation,
}

impl SystemCopy {
    pub fn dynamics(&self, grid: TimeGrid) -> Result<Dynamics> {
        Dynamics::with_perturbation(&self.params, grid, &self.perturbation)
    }
}

/// Every combination of the enabled parameter values, in canonical key order.
pub fn build_ensemble(spec: &EnsembleSpec, base: &SystemParams, grid: &TimeGrid) -> Result<Vec<SystemCopy>> {
    spec.validate()?;
    base.validate()?;
    let hold = spec.hold_steps(grid)?;
    let positions: Vec<Option<[f64; 3]>> = match &spec.positions {
        None => vec![None],
        Some(v) => {
            let mut out = Vec::new();
            for &x in v {
                for &y in v {
                    for &z in v {
                        out.push(Some([x, y, z]));
                    }
                }
            }
            out
        }
    };
    let lift = |v: &Option<Vec<f64>>| -> Vec<Option<f64>> {
        v.as_ref().map_or(vec![None], |v| v.iter().copied().map(Some).collect())
    };
    let crosstalk = lift(&spec.crosstalk);
    let offsets = lift(&spec.frequency_offsets);
    let noises: Vec<Option<(usize, NoiseTrace)>> = match &spec.noise {
        None => vec![None],
        Some(n) => n
            .seeds
            .iter()
            .enumerate()
            .map(|(i, &s)| Some((i, NoiseTrace::generate(s, n.amplitude, hold, grid.n_steps()))))
            .collect(),
    };

    let mut copies = Vec::with_capacity(spec.copy_count());
    for p in &positions {
        let profile = p.map(|off| spec.geometry.coupling_profile(off, grid));
        for &xi in &crosstalk {
            for &df in &offsets {
                for noise in &noises {
                    let mut params = *base;
                    if let Some(df) = df {
                        params.cavity_freq_offset = base.cavity_freq_offset + df;
                    }
                    copies.push(SystemCopy {
                        key: CopyKey {
                            position: *p,
                            crosstalk: xi,
                            frequency_offset: df,
                            noise: noise.as_ref().map(|(i, t)| (*i, t.seed)),
                        },
                        params,
                        perturbation: Perturbation {
                            coupling_profile: profile.clone(),
                            crosstalk: xi,
                            atom_noise: noise.as_ref().map(|(_, t)| t.samples.clone()),
                        },
                    });
                }
            }
        }
    }
    copies.sort_by(|a, b| a.key.canonical_cmp(&b.key));
    Ok(copies)
}

/// Compiles every copy onto the grid, keeping the order of `copies`.
pub fn compile<E: Executor>(copies: &[SystemCopy], grid: TimeGrid, exec: &E) -> Result<Vec<Dynamics>> {
    exec.map(copies, |_, c| c.dynamics(grid)).into_iter().collect()
}

/// Mean and per-copy final-time infidelity under shared controls.
pub fn ensemble_infidelity<E: Executor>(
    controls: &ControlSet,
    copies: &[Dynamics],
    target: &TargetSpec,
    initial: &StateVector,
    exec: &E,
) -> Result<(f64, Vec<f64>)> {
    if copies.is_empty() {
        return Err(Error::InvalidParameter("ensemble has no copies".into()));
    }
    let n_max = copies[0].n_max();
    let finals = final_states(copies, initial, controls, exec)?;
    let per_copy: Vec<f64> = finals.iter().map(|f| target.infidelity(f, n_max)).collect();
    let mean = per_copy.iter().sum::<f64>() / per_copy.len() as f64;
    Ok((mean, per_copy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleProblem {
    pub initial: StateVector,
    pub target: TargetSpec,
    pub params: SystemParams,
    pub grid: TimeGrid,
    pub spec: EnsembleSpec,
}

impl EnsembleProblem {
    pub fn copies(&self) -> Result<Vec<SystemCopy>> {
        build_ensemble(&self.spec, &self.params, &self.grid)
    }

    /// Ensemble infidelity of `controls` after digitization.
    pub fn evaluate<E: Executor>(&self, controls: &ControlSet, exec: &E) -> Result<(f64, Vec<f64>)> {
        let dynamics = compile(&self.copies()?, self.grid, exec)?;
        let held = controls.block_averaged(self.spec.hold_steps(&self.grid)?);
        ensemble_infidelity(&held, &dynamics, &self.target, &self.initial, exec)
    }
}

/// Krotov optimization of the mean infidelity over all copies. Per-copy results
/// follow the canonical copy order of [`build_ensemble`].
pub fn ensemble_optimize<E: Executor, M: Monitor>(
    problem: &EnsembleProblem,
    config: &OptimizationConfig,
    exec: &E,
    monitor: &mut M,
) -> Result<OptimizationRecord> {
    let copies = problem.copies()?;
    let dynamics = compile(&copies, problem.grid, exec)?;
    let mut config = config.clone();
    config.hold_steps = problem.spec.hold_steps(&problem.grid)?;
    optimize_copies(&dynamics, &problem.initial, &problem.target, &config, exec, monitor)
}

/// Resolution of the integrated infidelity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Gauss-Legendre nodes per continuous parameter.
    pub points: usize,
    /// Fresh noise realizations averaged over.
    pub noise_samples: usize,
    pub seed: u64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            points: 3,
            noise_samples: 4,
            seed: 1_000_003,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedInfidelity {
    pub mean: f64,
    /// Standard error from the spread over noise realizations (0 without noise).
    pub std_error: f64,
    pub evaluations: usize,
}

/// Gauss-Legendre nodes and weights on `[lo, hi]`, weights summing to 1.
pub fn gauss_legendre(points: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    if points <= 1 || hi <= lo {
        return vec![(0.5 * (lo + hi), 1.0)];
    }
    let n = points;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (lo + hi) + 0.5 * (hi - lo) * x, 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn range_nodes(values: &Option<Vec<f64>>, points: usize) -> Vec<(Option<f64>, f64)> {
    match values {
        None => vec![(None, 1.0)],
        Some(v) => {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            gauss_legendre(points, lo, hi)
                .into_iter()
                .map(|(x, w)| (Some(x), w))
                .collect()
        }
    }
}

/// Average J_τ over the continuous parameter ranges spanned by the ensemble
/// (tensor-product Gauss-Legendre) and over fresh noise realizations.
pub fn integrated_infidelity<E: Executor>(
    controls: &ControlSet,
    problem: &EnsembleProblem,
    quadrature: &Quadrature,
    exec: &E,
) -> Result<IntegratedInfidelity> {
    let spec = &problem.spec;
    spec.validate()?;
    let grid = problem.grid;
    let hold = spec.hold_steps(&grid)?;
    let held = controls.block_averaged(hold);
    let positions: Vec<(Option<[f64; 3]>, f64)> = match &spec.positions {
        None => vec![(None, 1.0)],
        Some(_) => {
            let axis = range_nodes(&spec.positions, quadrature.points);
            let mut out = Vec::new();
            for &(x, wx) in &axis {
                for &(y, wy) in &axis {
                    for &(z, wz) in &axis {
                        out.push((
                            Some([x.unwrap_or(0.0), y.unwrap_or(0.0), z.unwrap_or(0.0)]),
                            wx * wy * wz,
                        ));
                    }
                }
            }
            out
        }
    };
    let xis = range_nodes(&spec.crosstalk, quadrature.points);
    let dfs = range_nodes(&spec.frequency_offsets, quadrature.points);
    let noise_seeds: Vec<Option<u64>> = match &spec.noise {
        None => vec![None],
        Some(_) => (0..quadrature.noise_samples.max(1) as u64)
            .map(|k| Some(quadrature.seed.wrapping_add(k)))
            .collect(),
    };

    let mut nodes: Vec<(SystemCopy, f64, usize)> = Vec::new();
    for (ni, seed) in noise_seeds.iter().enumerate() {
        let noise = match (seed, &spec.noise) {
            (Some(s), Some(n)) => Some(NoiseTrace::generate(*s, n.amplitude, hold, grid.n_steps()).samples),
            _ => None,
        };
        for &(position, w_pos) in &positions {
            let profile = position.map(|p| spec.geometry.coupling_profile(p, &grid));
            for &(xi, wxi) in &xis {
                for &(df, wdf) in &dfs {
                    let mut params = problem.params;
                    if let Some(df) = df {
                        params.cavity_freq_offset += df;
                    }
                    nodes.push((
                        SystemCopy {
                            key: CopyKey {
                                position,
                                crosstalk: xi,
                                frequency_offset: df,
                                noise: seed.map(|s| (ni, s)),
                            },
                            params,
                            perturbation: Perturbation {
                                coupling_profile: profile.clone(),
                                crosstalk: xi,
                                atom_noise: noise.clone(),
                            },
                        },
                        w_pos * wxi * wdf,
                        ni,
                    ));
                }
            }
        }
    }

    let values: Vec<Result<f64>> = exec.map(&nodes, |_, (copy, _, _)| {
        let d = copy.dynamics(grid)?;
        let psi = d.final_state(problem.initial.amplitudes(), &held)?;
        Ok(problem.target.infidelity(&psi, d.n_max()))
    });
    let mut per_noise = vec![0.0; noise_seeds.len()];
    for ((_, w, ni), v) in nodes.iter().zip(values) {
        per_noise[*ni] += w * v?;
    }
    let m = per_noise.len() as f64;
    let mean = per_noise.iter().sum::<f64>() / m;
    let std_error = if per_noise.len() > 1 {
        let var = per_noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(IntegratedInfidelity {
        mean,
        std_error,
        evaluations: nodes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::{Channel, Complexity};
    use crate::exec::Sequential;
    use crate::functional::final_time_infidelity;
    use crate::state::Atom;
    use crate::targets::{fock_superposition_target, initial_state, InitialSpec};
    use crate::C64;

    #[test]
    fn coupling_map_examples() {
        let g = ModeGeometry::default();
        assert_eq!(coupling_at(&g, 0.0, 0.0, 0.0), 50.0);
        assert!(coupling_at(&g, 0.0, 0.0, g.wavelength / 4.0).abs() < 1e-12);
        let want = 50.0 * (-0.25f64 / 36.0).exp();
        assert!((coupling_at(&g, 0.5, 0.0, 0.0) - want).abs() < 1e-12);
        assert!((want / 50.0 - 0.99309).abs() < 5e-5);
    }

    #[test]
    fn profile_is_centred_and_shifted() {
        let g = ModeGeometry::default();
        let grid = TimeGrid::new(100.0, 1000).unwrap();
        let p = g.coupling_profile([0.0; 3], &grid);
        assert!((p[0] - p[999]).abs() < 1e-12);
        assert!((p[499] - p[500]).abs() < 1e-12);
        // x offset of 0.5 mm moves the peak by 0.5/0.06 ≈ 8.3 μs earlier
        let shifted = g.coupling_profile([0.5, 0.0, 0.0], &grid);
        let peak = shifted.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((grid.control_time(peak) - (50.0 - 0.5 / 0.06)).abs() < 0.1);
    }

    #[test]
    fn copy_counts() {
        let p = SystemParams::paper_default(6);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert_eq!(
            build_ensemble(&EnsembleSpec::all_effects(7), &p, &grid).unwrap().len(),
            324
        );
        assert_eq!(EnsembleSpec::all_effects(7).copy_count(), 324);
        let sizes: Vec<usize> = Effect::ALL
            .iter()
            .map(|&e| {
                build_ensemble(&EnsembleSpec::single_effect(e, 7), &p, &grid)
                    .unwrap()
                    .len()
            })
            .collect();
        assert_eq!(sizes, vec![27, 2, 3, 2]);
        let nominal = build_ensemble(&EnsembleSpec::nominal(), &p, &grid).unwrap();
        assert_eq!(nominal.len(), 1);
        assert_eq!(nominal[0].params, p);
        assert_eq!(nominal[0].perturbation, Perturbation::default());
    }

    #[test]
    fn canonical_order_ignores_value_order() {
        let p = SystemParams::paper_default(4);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let mut spec = EnsembleSpec::all_effects(3);
        let a = build_ensemble(&spec, &p, &grid).unwrap();
        spec.positions.as_mut().unwrap().reverse();
        spec.frequency_offsets.as_mut().unwrap().reverse();
        spec.crosstalk.as_mut().unwrap().reverse();
        let b = build_ensemble(&spec, &p, &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let a = NoiseTrace::generate(11, 1.0, 10, 1000);
        let b = NoiseTrace::generate(11, 1.0, 10, 1000);
        let c = NoiseTrace::generate(12, 1.0, 10, 1000);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.samples.iter().all(|v| v.abs() <= 1.0));
        assert!(a.samples.chunks(10).all(|b| b.iter().all(|v| *v == b[0])));
    }

    #[test]
    fn hold_steps_from_block() {
        let spec = EnsembleSpec::single_effect(Effect::Digitization, 1);
        assert_eq!(spec.hold_steps(&TimeGrid::new(100.0, 10_000).unwrap()).unwrap(), 10);
        assert_eq!(spec.hold_steps(&TimeGrid::new(100.0, 1000).unwrap()).unwrap(), 1);
        assert!(spec.hold_steps(&TimeGrid::new(100.0, 300).unwrap()).is_err());
    }

    fn problem(spec: EnsembleSpec) -> EnsembleProblem {
        let params = SystemParams::paper_default(8);
        EnsembleProblem {
            initial: initial_state(&InitialSpec::balanced(-core::f64::consts::FRAC_PI_2), &params).unwrap(),
            target: fock_superposition_target(2, 8).unwrap(),
            params,
            grid: TimeGrid::new(4.0, 40).unwrap(),
            spec,
        }
    }

    fn pulse(n: usize) -> ControlSet {
        let s = (0..n).map(|j| C64::new(5.0 + j as f64 * 0.1, 1.0)).collect();
        ControlSet::zeros(n)
            .with_channel(Channel::Atom, Complexity::Complex, s)
            .unwrap()
    }

    #[test]
    fn single_copy_matches_plain_infidelity() {
        let pr = problem(EnsembleSpec::nominal());
        let controls = pulse(40);
        let (mean, per) = pr.evaluate(&controls, &Sequential).unwrap();
        let traj = crate::propagation::propagate_forward(&pr.initial, &controls, &pr.params, &pr.grid).unwrap();
        let plain = final_time_infidelity(&traj.final_state(), &pr.target);
        assert_eq!(per.len(), 1);
        assert!((mean - plain).abs() < 1e-14);
    }

    #[test]
    fn identical_copies_average_to_single_value() {
        let mut spec = EnsembleSpec::nominal();
        spec.frequency_offsets = Some(vec![0.0, 0.0, 0.0]);
        let pr = problem(spec);
        let (mean, per) = pr.evaluate(&pulse(40), &Sequential).unwrap();
        assert_eq!(per.len(), 3);
        assert!(per.iter().all(|v| *v == per[0]));
        assert!((mean - per[0]).abs() < 1e-15);
    }

    #[test]
    fn crosstalk_term_scales_with_atom_drive() {
        let p = SystemParams::paper_default(3);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let pert = Perturbation {
            crosstalk: Some(4.0),
            ..Perturbation::default()
        };
        let d = Dynamics::with_perturbation(&p, grid, &pert).unwrap();
        let zero = d.hamiltonian(0, &[0.0; 5]);
        let one = d.hamiltonian(0, &[2.0, -1.0, 0.0, 0.0, 0.0]);
        let three = d.hamiltonian(0, &[6.0, -3.0, 0.0, 0.0, 0.0]);
        let a = crate::model::annihilation(3);
        for r in 0..d.dim() {
            for c in 0..d.dim() {
                let d1 = one.element(r, c) - zero.element(r, c);
                let d3 = three.element(r, c) - zero.element(r, c);
                assert!((d3 - d1 * 3.0).norm() < 1e-12);
            }
        }
        // the cavity part of the atom drive is ξ·(Ω̃/2)a† + h.c.
        let omega = C64::new(2.0, -1.0) * crate::model::KHZ;
        let i = crate::state::basis_index(Atom::Ground, 1, 3);
        let j = crate::state::basis_index(Atom::Ground, 0, 3);
        let got = one.element(i, j) - zero.element(i, j);
        assert!((got - omega * 0.5 * 4.0 * a.element(j, i)).norm() < 1e-12);
    }

    #[test]
    fn gauss_legendre_is_exact_for_low_degree() {
        let nodes = gauss_legendre(3, -1.0, 3.0);
        let sum: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert!((sum - 1.0).abs() < 1e-14);
        // mean of x^5 over [-1, 3] is (3^6 - 1)/(6·4)
        let m5: f64 = nodes.iter().map(|(x, w)| w * x.powi(5)).sum();
        assert!((m5 - 728.0 / 24.0).abs() < 1e-11);
    }

    #[test]
    fn zero_width_ranges_reduce_to_ensemble_mean() {
        let mut spec = EnsembleSpec::nominal();
        spec.positions = Some(vec![0.25]);
        spec.crosstalk = Some(vec![4.0]);
        spec.frequency_offsets = Some(vec![2.0]);
        let pr = problem(spec);
        let controls = pulse(40);
        let (mean, _) = pr.evaluate(&controls, &Sequential).unwrap();
        let q = integrated_infidelity(&controls, &pr, &Quadrature::default(), &Sequential).unwrap();
        assert_eq!(q.evaluations, 1);
        assert!((q.mean - mean).abs() < 1e-14);
        assert_eq!(q.std_error, 0.0);
    }
}
