#![no_std]
//! Krotov optimal control for preparing oscillator states through a
//! Jaynes-Cummings interaction with a driven two-level system.
//!
//! Units: time in μs, frequencies and control envelopes as cyclic frequencies
//! in kHz; Hamiltonians are assembled in rad/μs (see [`model::KHZ`]).

extern crate alloc;

pub mod controls;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod functional;
pub mod krotov;
mod linalg;
pub mod model;
pub mod observables;
pub mod propagation;
pub mod state;
pub mod targets;

pub use controls::{Channel, Complexity, ControlSet, Direction, Gaussian, GuessSpec};
pub use error::{Error, Result};
pub use exec::{Executor, Monitor, Sequential};
pub use functional::{adjoint_boundary, final_time_infidelity, running_cost, FunctionalWeights, Shape, TargetSpec};
pub use krotov::{
    krotov_update_sweep, optimize, optimize_copies, OptimizationConfig, OptimizationRecord, Problem, StopReason,
};
pub use model::{SystemParams, KHZ};
pub use propagation::{propagate_backward, propagate_forward, Dynamics, TimeGrid, Trajectory};
pub use state::{Atom, StateVector};
pub use targets::{even_cat_target, fock_superposition_target, fock_target, initial_state, InitialSpec};

pub use num_complex::Complex64 as C64;
