//! Least-energy solutions by descent on the Nehari manifold, and the
//! mountain-pass level experiment for the critical exponent.

mod levels;
mod nehari;
mod solver;

pub use levels::{
    mountain_pass_level_bound, nonexistence_probe, sup_norm, LevelRow, LevelTable, ProbeReport, ProbeRow,
    CUTOFF_PLATEAU, CUTOFF_SUPPORT,
};
pub use nehari::{nehari_scale_from_aggregates, reduced_energy};
pub use solver::{
    max_exponent, nehari_scale, solve_least_energy, solve_on_grid, InitialGuess, SolveDiagnostics, SolveReport,
    SolverConfig,
};

pub(crate) use nehari::{nehari_descent, residuals};
