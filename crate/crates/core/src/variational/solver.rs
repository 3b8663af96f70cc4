use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nehari::{nehari_descent, nehari_scale_from_aggregates, residuals, DescentSettings};
use crate::cylinder::{nehari_identity_residual, pohozaev_residual, trace_coercivity_check, TraceCoercivity};
use crate::eigenbasis::{enumerate_modes, Domain, Grid, NodeFamily, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::field::{energy_aggregates, oversampling_drift, OversamplingDrift, SpectralField};
use crate::spectral_calculus::relativistic_gap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialGuess {
    /// First Dirichlet eigenfunction.
    FirstMode,
    /// First eigenfunction plus a seeded random perturbation of the given
    /// relative amplitude, damped like `1 / (1 + lambda_k)`.
    Perturbed { amplitude: f64 },
    /// Explicit coefficients (one per mode).
    Coefficients { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Truncation order N per axis.
    pub order: usize,
    pub max_iterations: usize,
    /// Relative tolerance on the preconditioned gradient.
    pub tolerance: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Backtracking factor of the Armijo rule.
    pub armijo_factor: f64,
    /// Sufficient-decrease constant of the Armijo rule.
    pub armijo_constant: f64,
    pub initial_guess: InitialGuess,
    pub seed: u64,
    pub node_family: NodeFamily,
    /// Nodes per axis; `None` picks the family default.
    pub points_per_axis: Option<usize>,
    /// Compute the grid-doubling drift diagnostic after solving.
    pub oversampling_diagnostic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            order: 12,
            max_iterations: 2000,
            tolerance: 1e-9,
            initial_step: 1.0,
            max_step: 4.0,
            armijo_factor: 0.5,
            armijo_constant: 1e-4,
            initial_guess: InitialGuess::FirstMode,
            seed: 0,
            node_family: NodeFamily::Midpoint,
            points_per_axis: None,
            oversampling_diagnostic: false,
        }
    }
}

impl SolverConfig {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(invalid("order", "must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.initial_step > 0.0 && self.max_step >= self.initial_step) {
            return Err(invalid("initial_step", "need 0 < initial_step <= max_step"));
        }
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(invalid("armijo_factor", "must lie in (0, 1)"));
        }
        if !(self.armijo_constant > 0.0 && self.armijo_constant < 1.0) {
            return Err(invalid("armijo_constant", "must lie in (0, 1)"));
        }
        if let InitialGuess::Perturbed { amplitude } = self.initial_guess {
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return Err(invalid("initial_guess.amplitude", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub(crate) fn descent_settings(&self) -> DescentSettings {
        DescentSettings {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            initial_step: self.initial_step,
            max_step: self.max_step,
            backtrack: self.armijo_factor,
            sufficient_decrease: self.armijo_constant,
        }
    }

    /// Spectrum and grid of `domain` at this truncation.
    pub fn discretize(&self, domain: &Domain) -> Result<Grid> {
        let spectrum = Arc::new(enumerate_modes(domain, self.order)?);
        match (self.node_family, self.points_per_axis) {
            (NodeFamily::Midpoint, None) => Ok(Grid::new(spectrum)),
            (NodeFamily::GaussLegendre, None) => Grid::gauss_legendre(spectrum),
            (family, Some(points)) => Grid::with_points(spectrum, family, points),
        }
    }

    pub(crate) fn initial_field(&self, spectrum: &Arc<Spectrum>) -> Result<SpectralField> {
        let field = match &self.initial_guess {
            InitialGuess::FirstMode => SpectralField::unit(spectrum.clone(), 0),
            InitialGuess::Perturbed { amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let l1 = spectrum.lambda_1();
                let mut u = SpectralField::from_fn(spectrum.clone(), |_, l| {
                    amplitude * rng.random_range(-1.0..1.0) * (1.0 + l1) / (1.0 + l)
                });
                u.coefficients_mut()[0] += 1.0;
                u
            }
            InitialGuess::Coefficients { values } => SpectralField::new(spectrum.clone(), values.clone())?,
        };
        if field.coefficients().iter().all(|c| *c == 0.0) {
            return Err(Error::ZeroField);
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub pohozaev_residual: f64,
    pub nehari_identity_residual: f64,
    pub trace_coercivity: TraceCoercivity,
    pub oversampling: Option<OversamplingDrift>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub m: f64,
    pub p: f64,
    pub dimension: usize,
    pub order: usize,
    pub converged: bool,
    /// Descent iterations, excluding the final Newton steps.
    pub iterations: usize,
    pub newton_steps: usize,
    /// `I_m(u)`.
    pub energy: f64,
    /// `J_m(u) = A(u) - int |u|^{p+1}`.
    pub nehari_value: f64,
    /// `A(u) = sum c_k^2 (mu_k - m)`.
    pub quadratic: f64,
    /// `|(sqrt(-Delta + m^2) - m) u - P(|u|^{p-1} u)|_2 / |u|_2`.
    pub residual: f64,
    /// Preconditioned gradient relative to `|u|_2`.
    pub preconditioned_residual: f64,
    pub trace: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
    /// Grid minimum is at least `-1e-6 max |u|`.
    pub sign_definite: bool,
    /// `min u / max |u|` over the grid nodes.
    pub min_over_max: f64,
    pub solution: SpectralField,
}

impl SolveReport {
    pub fn trace_minimum(&self) -> f64 {
        self.trace.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Largest exponent admitted by the variational solver: `2n/(n-2)` for
/// `n >= 3`, unbounded otherwise.
pub fn max_exponent(n: usize) -> f64 {
    if n >= 3 {
        2.0 * n as f64 / (n as f64 - 2.0)
    } else {
        f64::INFINITY
    }
}

/// `t0` with `J_m(t0 u) = 0`.
pub fn nehari_scale(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<f64> {
    let agg = energy_aggregates(u, m, p, grid)?;
    nehari_scale_from_aggregates(agg.quadratic, agg.nonlinear, p)
}

/// Least-energy solution of `(sqrt(-Delta + m^2) - m) u = |u|^{p-1} u` on `domain`.
pub fn solve_least_energy(domain: &Domain, m: f64, p: f64, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let grid = config.discretize(domain)?;
    solve_on_grid(&grid, m, p, config)
}

pub fn solve_on_grid(grid: &Grid, m: f64, p: f64, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(invalid("m", format!("must be positive, got {m}")));
    }
    let spectrum = grid.spectrum().clone();
    let n = spectrum.dimension();
    if !(p > 1.0 && p < max_exponent(n)) {
        return Err(invalid(
            "p",
            format!("must lie in (1, {}) for n = {n}, got {p}", max_exponent(n)),
        ));
    }
    let weights: Vec<f64> = spectrum.eigenvalues().iter().map(|l| relativistic_gap(*l, m)).collect();
    let initial = config.initial_field(&spectrum)?;
    let outcome = nehari_descent(grid, &weights, p, &initial, &config.descent_settings())?;
    let mut u = outcome.field;
    if u.coefficients()[0] < 0.0 {
        u = u.scaled(-1.0);
    }
    let agg = energy_aggregates(&u, m, p, grid)?;
    let res = residuals(&u, &weights, p, grid)?;
    let values = grid.synthesize_coefficients(u.coefficients());
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_over_max = if max_abs > 0.0 { min / max_abs } else { 0.0 };
    let diagnostics = SolveDiagnostics {
        pohozaev_residual: pohozaev_residual(&u, m, p, grid)?,
        nehari_identity_residual: nehari_identity_residual(&u, m, p, grid)?,
        trace_coercivity: trace_coercivity_check(&u, m)?,
        oversampling: if config.oversampling_diagnostic {
            Some(oversampling_drift(&u, p, grid)?)
        } else {
            None
        },
    };
    Ok(SolveReport {
        m,
        p,
        dimension: n,
        order: spectrum.order(),
        converged: outcome.converged,
        iterations: outcome.iterations,
        newton_steps: outcome.newton_steps,
        energy: agg.energy_along_ray(1.0, p),
        nehari_value: agg.quadratic - agg.nonlinear,
        quadratic: agg.quadratic,
        residual: res.equation,
        preconditioned_residual: res.preconditioned,
        trace: outcome.trace,
        diagnostics,
        sign_definite: min_over_max >= -1e-6,
        min_over_max,
        solution: u,
    })
}
