//! Spectral ergodic metric and the trajectory optimizer built on it.

mod pto;
mod spectrum;

pub use pto::{
    boundary_penalty, pto_optimize, warm_start, InitialGuess, ObjectiveParts, PlannerState, PtoConfig, PtoOutcome,
    PtoProblem,
};
pub use spectrum::{
    basis_eval, ergodic_metric, tisd_coefficients, trajectory_coefficients, ErgodicSpectrum, FourierBasis,
};
