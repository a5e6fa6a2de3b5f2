//! Checks against independent closed-form or brute-force references.

use jc_core::model::{half_rabi_time, KHZ};
use jc_core::observables::{atom_populations, photon_moments, photon_statistics};
use jc_core::targets::cat_truncation;
use jc_core::*;

/// `exp(-iHt)` of the resonant 2×2 block `[[0, g/2], [g/2, 0]]` acting on `|e,0⟩`.
fn two_level_excited_population(g: f64, t: f64) -> f64 {
    let c = (0.5 * g * t).cos();
    c * c
}

#[test]
fn free_evolution_follows_two_level_rabi_formula() {
    let params = SystemParams::paper_default(3);
    let grid = TimeGrid::with_dt(40.0, 0.01).unwrap();
    let e0 = StateVector::basis(Atom::Excited, 0, 3).unwrap();
    let traj = propagate_forward(&e0, &ControlSet::zeros(grid.n_steps()), &params, &grid).unwrap();
    let g = KHZ * params.g;
    let worst = atom_populations(&traj)
        .iter()
        .enumerate()
        .map(|(j, (_, ee))| (ee - two_level_excited_population(g, grid.state_time(j))).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "max deviation {worst}");
}

#[test]
fn quarter_cycle_splits_populations() {
    let params = SystemParams::paper_default(3);
    let grid = TimeGrid::new(0.5 * half_rabi_time(params.g, 0), 500).unwrap();
    let e0 = StateVector::basis(Atom::Excited, 0, 3).unwrap();
    let fin = propagate_forward(&e0, &ControlSet::zeros(500), &params, &grid)
        .unwrap()
        .final_state();
    assert!((fin.atom_population(Atom::Excited) - 0.5).abs() < 1e-9);
    assert!((fin.atom_population(Atom::Ground) - 0.5).abs() < 1e-9);
}

#[test]
fn half_rabi_cycle_transfers_excitation_and_back() {
    let params = SystemParams::paper_default(3);
    let grid = TimeGrid::with_dt(half_rabi_time(params.g, 0), 0.01).unwrap();
    let zero = ControlSet::zeros(grid.n_steps());
    let e0 = StateVector::basis(Atom::Excited, 0, 3).unwrap();
    let g1 = StateVector::basis(Atom::Ground, 1, 3).unwrap();
    let fwd = propagate_forward(&e0, &zero, &params, &grid).unwrap().final_state();
    assert!(1.0 - fwd.overlap_sqr(&g1) < 1e-9);
    let back = propagate_backward(&g1, &zero, &params, &grid).unwrap().initial();
    assert!(1.0 - back.overlap_sqr(&e0) < 1e-9);
}

/// Cat amplitudes from logarithms of the coherent-state coefficients.
fn cat_oracle(alpha: C64, len: usize) -> Vec<C64> {
    let r2 = alpha.norm_sqr();
    let mut ln_fact = 0.0;
    let mut v: Vec<C64> = (0..len)
        .map(|n| {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            if n % 2 == 1 {
                return C64::new(0.0, 0.0);
            }
            let ln_mag = -0.5 * r2 + n as f64 * alpha.norm().ln() - 0.5 * ln_fact;
            C64::from_polar(2.0 * ln_mag.exp(), n as f64 * alpha.arg())
        })
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    v
}

#[test]
fn even_cat_matches_coefficient_oracle() {
    let alpha = C64::new(1.0, 1.0);
    for n_max in [cat_truncation(alpha), 40] {
        let target = even_cat_target(alpha, n_max).unwrap();
        let want = cat_oracle(alpha, target.cavity().len());
        for (a, b) in target.cavity().iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn even_cat_mean_photon_number() {
    let alpha = C64::new(1.0, 1.0);
    let target = even_cat_target(alpha, 40).unwrap();
    let p: Vec<f64> = target.cavity().iter().map(|a| a.norm_sqr()).collect();
    let (mean, _) = photon_moments(&p);
    let want = 2.0 * 2.0f64.tanh();
    assert!((mean - want).abs() < 1e-12, "{mean} vs {want}");
    assert!((want - 1.928).abs() < 1e-3);
}

#[test]
fn endpoint_statistics_of_a_fock_state() {
    let params = SystemParams::paper_default(3);
    let grid = TimeGrid::with_dt(half_rabi_time(params.g, 0), 0.01).unwrap();
    let e0 = StateVector::basis(Atom::Excited, 0, 3).unwrap();
    let traj = propagate_forward(&e0, &ControlSet::zeros(grid.n_steps()), &params, &grid).unwrap();
    let (mean, dn) = *photon_statistics(&traj).last().unwrap();
    assert!((mean - 1.0).abs() < 1e-9);
    assert!(dn < 1e-4);
}

/// Three Fock levels, complex atom and cavity drives, fine grid.
#[test]
fn krotov_direction_matches_finite_differences() {
    let params = SystemParams::paper_default(2);
    let n = 60_000;
    let grid = TimeGrid::new(5.0, n).unwrap();
    let atom: Vec<C64> = (0..n)
        .map(|j| {
            let t = grid.control_time(j);
            C64::new(20.0 * (0.7 * t).sin(), 8.0 * (1.3 * t).cos())
        })
        .collect();
    let cavity: Vec<C64> = (0..n)
        .map(|j| C64::new(5.0, -3.0 * (grid.control_time(j) * 0.4).sin()))
        .collect();
    let controls = ControlSet::zeros(n)
        .with_channel(Channel::Atom, Complexity::Complex, atom)
        .unwrap()
        .with_channel(Channel::Cavity, Complexity::Complex, cavity)
        .unwrap();
    let initial = StateVector::basis(Atom::Excited, 0, 2).unwrap();
    let target = TargetSpec::new(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
    let dynamics = Dynamics::new(&params, grid).unwrap().with_leakage_limit(None);
    // With a huge λ the sweep moves the controls by (S/λ)·Im⟨χ|∂H/∂u|φ⟩ while φ
    // stays on the guess trajectory; ∂J_τ/∂u_j = −2 dt·Im⟨χ|∂H/∂u|φ⟩.
    let lambda = 1e8;
    let fin = dynamics.final_state(initial.amplitudes(), &controls).unwrap();
    let fin = StateVector::from_amplitudes(2, fin).unwrap();
    let chi = dynamics
        .backward(adjoint_boundary(&fin, &target).amplitudes(), &controls)
        .unwrap();
    let weights = FunctionalWeights::uniform(lambda, Shape::Constant(1.0));
    let (updated, _) = krotov_update_sweep(&controls, &chi, &initial, &dynamics, &weights).unwrap();
    let grad = |j: usize, d: Direction| {
        let delta = updated.direction_value(d, j) - controls.direction_value(d, j);
        -2.0 * grid.dt() * delta * lambda * KHZ * KHZ
    };

    let j_tau = |c: &ControlSet| {
        let fin = dynamics.final_state(initial.amplitudes(), c).unwrap();
        final_time_infidelity(&StateVector::from_amplitudes(2, fin).unwrap(), &target)
    };
    let h = 0.5;
    for j in [1_000, 9_999, 17_000] {
        for d in controls.active_directions() {
            let mut plus = controls.clone();
            let mut minus = controls.clone();
            let ch = d.channel();
            let bump = if d.is_imaginary() {
                C64::new(0.0, h)
            } else {
                C64::new(h, 0.0)
            };
            let mut s = plus.samples(ch).to_vec();
            s[j] += bump;
            plus.set_channel(ch, Complexity::Complex, s).unwrap();
            let mut s = minus.samples(ch).to_vec();
            s[j] -= bump;
            minus.set_channel(ch, Complexity::Complex, s).unwrap();
            let fd = (j_tau(&plus) - j_tau(&minus)) / (2.0 * h);
            let g = grad(j, d);
            assert!((g - fd).abs() <= 1e-4 * fd.abs(), "step {j} {d:?}: {g} vs {fd}");
        }
    }
}
