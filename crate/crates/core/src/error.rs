use alloc::string::String;

/// Errors raised by model construction, propagation and optimization.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Population reached the top of the Fock ladder; `n_max` is too small.
    #[error("truncation error: population {population:.3e} in the top two Fock levels exceeds {limit:.0e} (n_max = {n_max}); increase n_max")]
    Truncation { population: f64, limit: f64, n_max: usize },

    #[error("running cost undefined: shape function vanishes at control sample {index} where controls differ from the reference")]
    ShapeDivision { index: usize },

    #[error("control update produced a non-finite value at sample {index}; increase lambda (smaller step)")]
    NonFiniteUpdate { index: usize },

    #[error("monotonicity violated at iteration {iteration}: J_tau rose from {previous:.6e} to {current:.6e}; increase lambda or refine dt")]
    NonMonotonic {
        iteration: usize,
        previous: f64,
        current: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
