use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Col, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenbasis::{Domain, Grid};
use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;
use crate::variational::{nehari_descent, residuals, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbativeConfig {
    /// Settings of the limit solve (truncation, tolerances, initial guess).
    pub solver: SolverConfig,
    /// Step tolerance of the fixed-point iteration, relative to `|u_inf|_2`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Smallest admissible singular value of the limit linearization.
    pub degeneracy_threshold: f64,
    /// Smallest mass accepted by the contraction scheme.
    pub m0: f64,
    /// Consecutive contraction estimates `>= 1` that signal divergence.
    pub divergence_window: usize,
}

impl Default for PerturbativeConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                tolerance: 1e-11,
                ..SolverConfig::default()
            },
            tolerance: 1e-11,
            max_iterations: 100,
            degeneracy_threshold: 1e-6,
            m0: 1.0,
            divergence_window: 3,
        }
    }
}

impl PerturbativeConfig {
    pub fn with_order(order: usize) -> Self {
        let mut config = Self::default();
        config.solver.order = order;
        config
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if !(self.degeneracy_threshold >= 0.0) {
            return Err(invalid("degeneracy_threshold", "must be >= 0"));
        }
        if !(self.m0 > 0.0 && self.m0.is_finite()) {
            return Err(invalid("m0", "must be positive"));
        }
        if self.divergence_window == 0 {
            return Err(invalid("divergence_window", "must be at least 1"));
        }
        Ok(())
    }
}

/// Least-energy solution of `-Delta u = |u|^{p-1} u` at a fixed truncation,
/// with its linearization.
#[derive(Debug, Clone, Serialize)]
pub struct LimitSolution {
    pub p: f64,
    pub solution: SpectralField,
    /// `|Lambda c - P f(u)|_2 / |c|_2`.
    pub residual: f64,
    /// Smallest singular value of `I - Lambda^{-1} K`.
    pub sigma_min: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    #[serde(skip)]
    pub(crate) grid: Arc<Grid>,
    /// `p |u|^{p-1}` at the grid nodes.
    #[serde(skip)]
    pub(crate) potential: Vec<f64>,
    /// Symmetric coupling matrix `K = P diag(potential) P` in coefficient space.
    #[serde(skip)]
    pub(crate) coupling: Arc<Mat<f64>>,
}

impl LimitSolution {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn coupling(&self) -> &Mat<f64> {
        &self.coupling
    }

    /// Dense `I - Lambda^{-1} K`.
    pub fn linearization(&self) -> Mat<f64> {
        let lambda = self.solution.spectrum().eigenvalues();
        let k = &self.coupling;
        Mat::from_fn(k.nrows(), k.ncols(), |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - k[(i, j)] / lambda[i]
        })
    }
}

/// `1 < p`, and `p < (n+2)/(n-2)` when `n >= 3`.
pub fn check_limit_exponent(n: usize, p: f64) -> Result<()> {
    let upper = if n >= 3 {
        (n as f64 + 2.0) / (n as f64 - 2.0)
    } else {
        f64::INFINITY
    };
    if !(p > 1.0 && p < upper) {
        return Err(invalid("p", format!("must lie in (1, {upper}) for n = {n}, got {p}")));
    }
    Ok(())
}

pub fn solve_limit(domain: &Domain, p: f64, config: &PerturbativeConfig) -> Result<LimitSolution> {
    config.validate()?;
    check_limit_exponent(domain.dimension(), p)?;
    let grid = Arc::new(config.solver.discretize(domain)?);
    let spectrum = grid.spectrum().clone();
    let weights = spectrum.eigenvalues().to_vec();
    let initial = config.solver.initial_field(&spectrum)?;
    let outcome = nehari_descent(&grid, &weights, p, &initial, &config.solver.descent_settings())?;
    let mut u = outcome.field;
    if u.coefficients()[0] < 0.0 {
        u = u.scaled(-1.0);
    }
    let residual = residuals(&u, &weights, p, &grid)?.equation;
    if !outcome.converged || !(residual <= 1e-8) {
        return Err(Error::NotConverged {
            what: "limit solve",
            residual,
        });
    }
    let potential: Vec<f64> = grid
        .synthesize_coefficients(u.coefficients())
        .iter()
        .map(|v| p * v.abs().powf(p - 1.0))
        .collect();
    let coupling = Arc::new(assemble_coupling(&grid, &potential));
    let mut limit = LimitSolution {
        p,
        solution: u,
        residual,
        sigma_min: f64::NAN,
        iterations: outcome.iterations,
        newton_steps: outcome.newton_steps,
        grid,
        potential,
        coupling,
    };
    limit.sigma_min = smallest_singular_value(&limit.linearization())?;
    if !(limit.sigma_min >= config.degeneracy_threshold) {
        return Err(Error::Degenerate {
            sigma_min: limit.sigma_min,
            threshold: config.degeneracy_threshold,
        });
    }
    Ok(limit)
}

/// `K_{kl} = sum_j w_j V(x_j) phi_k(x_j) phi_l(x_j)`, one column per mode.
pub fn assemble_coupling(grid: &Grid, potential: &[f64]) -> Mat<f64> {
    let n = grid.spectrum().len();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|l| {
            let mut e = vec![0.0; n];
            e[l] = 1.0;
            let mut values = grid.synthesize_coefficients(&e);
            values.iter_mut().zip(potential).for_each(|(v, q)| *v *= q);
            grid.analyze_values(&values)
        })
        .collect();
    Mat::from_fn(n, n, |k, l| columns[l][k])
}

pub(crate) fn to_col(v: &[f64]) -> Col<f64> {
    Col::from_fn(v.len(), |i| v[i])
}

pub(crate) fn from_col(c: &Col<f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest singular value by inverse iteration on `(A^T A)^{-1}` through one
/// LU factorization.
pub fn smallest_singular_value(a: &Mat<f64>) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Err(invalid("matrix", "empty"));
    }
    let lu = a.partial_piv_lu();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract()).collect();
    let scale = norm(&x);
    x.iter_mut().for_each(|v| *v /= scale);
    let mut estimate = f64::NAN;
    for _ in 0..2000 {
        let y = lu.solve_transpose(to_col(&x));
        let z = from_col(&lu.solve(&y));
        let y_norm = norm(&from_col(&y));
        let z_norm = norm(&z);
        if !(z_norm.is_finite() && z_norm > 0.0) {
            return Err(Error::Singular("inverse iteration produced a non-finite vector".into()));
        }
        // x is unit: |A^{-T} x|^2 is the Rayleigh quotient of (A^T A)^{-1}
        let next = 1.0 / y_norm;
        x = z.iter().map(|v| v / z_norm).collect();
        if (next - estimate).abs() <= 1e-12 * next {
            return Ok(next);
        }
        estimate = next;
    }
    log::warn!("inverse iteration for the smallest singular value hit its cap");
    Ok(estimate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaStability {
    pub coarse_order: usize,
    pub fine_order: usize,
    pub coarse: f64,
    pub fine: f64,
    /// `|fine - coarse| / fine`.
    pub relative_change: f64,
}

/// `sigma_min` at two truncations.
pub fn sigma_stability(
    domain: &Domain,
    p: f64,
    coarse_order: usize,
    fine_order: usize,
    config: &PerturbativeConfig,
) -> Result<SigmaStability> {
    let at = |order: usize| -> Result<f64> {
        let mut c = config.clone();
        c.solver.order = order;
        Ok(solve_limit(domain, p, &c)?.sigma_min)
    };
    let coarse = at(coarse_order)?;
    let fine = at(fine_order)?;
    Ok(SigmaStability {
        coarse_order,
        fine_order,
        coarse,
        fine,
        relative_change: (fine - coarse).abs() / fine,
    })
}
