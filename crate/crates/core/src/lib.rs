//! Deterministic equivalents for generally correlated, noncentral sample
//! covariance matrices `S = ΣΣᴴ` with `Σ = A + Y` and
//! `Y = n^{-1/2} [B₁x₁ … Bₙxₙ]`.
//!
//! The crate is organised around the fixed-point system for the vectors
//! `δ(z)`, `δ̃(z)` and the matrices `Θ(z)`, `Θ̃(z)` that approximate the
//! resolvent `Q(z) = (S − zI)⁻¹`:
//!
//! * [`model`] describes and validates the ensemble, with the canonical
//!   constructors (Marčenko–Pastur, variance profile, the figure setups);
//! * [`fixedpoint`] solves the system at a point `z` and evaluates trace and
//!   bilinear functionals of `Θ(z)`;
//! * [`spectrum`] recovers densities by Stieltjes inversion and locates the
//!   support;
//! * [`montecarlo`] samples the ensemble and runs the validation experiments;
//! * [`mimo`] holds the uplink LMMSE SINR and downlink ZF applications.

pub mod error;
pub mod fixedpoint;
pub mod linalg;
pub mod mimo;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod spectrum;

pub use error::{Error, Result};
pub use fixedpoint::{
    bilinear_functional, solve, solve_fixed_point, solve_grid, trace_functional, FixedPoint, Init,
    Solution, SolverOptions, SpectralPoint,
};
pub use model::{AdmissibleRanges, AssumptionReport, Correlation, Factor, Figure, ModelSpec};
pub use montecarlo::ElementDistribution;
pub use spectrum::{DensityProfile, SupportSet};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
