//! Large-mass solutions by perturbation of the Lane-Emden limit.
//!
//! Writing `u_m = u_inf + w`, the transformed equation `2m P_m u = |u|^{p-1} u`
//! becomes `w = A_m^{-1} (2m P_m)^{-1} [Q(w) + D_m u_inf]`, which is contractive
//! near `w = 0` once `m` is large and `u_inf` is non-degenerate.

mod fixed_point;
mod limit;
mod operators;

pub use fixed_point::{
    fixed_point_solve, between_critical_exponents, rate_study, transformed_residual, w1n_norm, ContractionState,
    FixedPointReport, RateRow, RateStudy,
};
pub use limit::{
    assemble_coupling, check_limit_exponent, sigma_stability, smallest_singular_value, solve_limit, LimitSolution,
    PerturbativeConfig, SigmaStability,
};
pub use operators::{
    apply_am_inverse, dm_multiplier, op_dm, op_q, q_pointwise, solve_am_iterative, solve_am_neumann, two_m_pm,
    AmOperator, BACK_SUBSTITUTION_TOLERANCE,
};
