use rayon::prelude::*;
use serde::Serialize;

use super::limit::{norm, LimitSolution, PerturbativeConfig};
use super::operators::{dm_multiplier, op_q, two_m_pm, AmOperator};
use crate::cylinder::nehari_identity_residual;
use crate::eigenbasis::Grid;
use crate::error::{invalid, Error, Result};
use crate::field::{integral_abs_power_of_values, nonlinear_power, norm_lq, SpectralField};
use crate::special::log_log_slope;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionState {
    pub w: SpectralField,
    pub iterations: usize,
    /// `|w_{j+1} - w_j| / |w_j - w_{j-1}|`, above rounding level.
    pub contraction_estimates: Vec<f64>,
    /// Ball radius `2 |Phi(0)|_{L^q}`.
    pub delta: f64,
    /// `|w|_{L^q}` with `q = n p`.
    pub w_lq: f64,
    pub lq_exponent: f64,
}

impl ContractionState {
    /// First estimate: the least affected by rounding.
    pub fn contraction_factor(&self) -> Option<f64> {
        self.contraction_estimates.first().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub m: f64,
    pub p: f64,
    /// `(n+1)/(n-1) < p < (n+2)/(n-2)`.
    pub between_critical_exponents: bool,
    pub converged: bool,
    /// `u_m = u_inf + w_m`, solving `2m P_m u = |u|^{p-1} u`.
    pub solution: SpectralField,
    /// `(2m)^{-1/(p-1)} u_m`, solving `P_m v = |v|^{p-1} v`.
    pub original_solution: SpectralField,
    /// `|2m P_m u_m - P(|u_m|^{p-1} u_m)|_2 / |u_m|_2`.
    pub residual: f64,
    pub nehari_identity_residual: f64,
    pub state: ContractionState,
}

pub fn between_critical_exponents(n: usize, p: f64) -> bool {
    n >= 3 && p > (n as f64 + 1.0) / (n as f64 - 1.0) && p < (n as f64 + 2.0) / (n as f64 - 2.0)
}

/// Iterates `w <- A_m^{-1} (2m P_m)^{-1} [Q(w) + D_m u_inf]` from `w = 0`.
pub fn fixed_point_solve(m: f64, limit: &LimitSolution, config: &PerturbativeConfig) -> Result<FixedPointReport> {
    config.validate()?;
    if !(m >= config.m0 && m.is_finite()) {
        return Err(invalid("m", format!("must be finite and >= m0 = {}, got {m}", config.m0)));
    }
    let p = limit.p;
    let grid = limit.grid();
    let spectrum = limit.solution.spectrum().clone();
    let n = spectrum.dimension();
    let lambda = spectrum.eigenvalues();
    let u_inf = &limit.solution;
    let op = AmOperator::new(limit, m)?;
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / two_m_pm(*l, m)).collect();
    let source: Vec<f64> = lambda
        .iter()
        .zip(u_inf.coefficients())
        .map(|(l, c)| dm_multiplier(*l, m) * c)
        .collect();
    let phi = |w: &SpectralField| -> Result<SpectralField> {
        let q = op_q(w, u_inf, p, grid)?;
        let rhs: Vec<f64> = q
            .coefficients()
            .iter()
            .zip(&source)
            .zip(&inv)
            .map(|((a, b), s)| (a + b) * s)
            .collect();
        SpectralField::new(spectrum.clone(), op.solve(&rhs)?)
    };
    let scale = u_inf.norm_l2();
    let floor = 1e3 * f64::EPSILON * scale;
    let mut w = SpectralField::zeros(spectrum.clone());
    let mut estimates = Vec::new();
    let mut previous: Option<f64> = None;
    let mut bad = 0;
    let mut iterations = 0;
    let mut step_converged = false;
    let mut delta = 0.0;
    let q_exp = n as f64 * p;
    while iterations < config.max_iterations {
        let next = phi(&w)?;
        iterations += 1;
        let step = next.distance(&w);
        if iterations == 1 {
            delta = 2.0 * norm_lq(&next, q_exp, grid)?;
        }
        if let Some(prev) = previous {
            if prev > floor {
                let ratio = step / prev;
                estimates.push(ratio);
                if ratio >= 1.0 {
                    bad += 1;
                    if bad >= config.divergence_window {
                        return Err(Error::Divergence { m, factor: ratio });
                    }
                } else {
                    bad = 0;
                }
            }
        }
        w = next;
        previous = Some(step);
        if step <= config.tolerance * scale {
            step_converged = true;
            break;
        }
    }
    let u_m = u_inf.combine(1.0, &w, 1.0);
    let residual = transformed_residual(&u_m, m, p, grid)?;
    let original = u_m.scaled((2.0 * m).powf(-1.0 / (p - 1.0)));
    let nehari = if original.norm_l2() > 0.0 {
        nehari_identity_residual(&original, m, p, grid)?
    } else {
        0.0
    };
    let w_lq = norm_lq(&w, q_exp, grid)?;
    let contracting = estimates.last().is_none_or(|r| *r < 1.0);
    let converged = step_converged && residual <= 10.0 * config.tolerance && contracting && w_lq <= delta;
    Ok(FixedPointReport {
        m,
        p,
        between_critical_exponents: between_critical_exponents(n, p),
        converged,
        solution: u_m,
        original_solution: original,
        residual,
        nehari_identity_residual: nehari,
        state: ContractionState {
            w,
            iterations,
            contraction_estimates: estimates,
            delta,
            w_lq,
            lq_exponent: q_exp,
        },
    })
}

/// `|2m P_m u - P(|u|^{p-1} u)|_2 / |u|_2`.
pub fn transformed_residual(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<f64> {
    let f = nonlinear_power(u, p, grid)?;
    let r: Vec<f64> = u
        .spectrum()
        .eigenvalues()
        .iter()
        .zip(u.coefficients())
        .zip(f.coefficients())
        .map(|((l, c), fk)| two_m_pm(*l, m) * c - fk)
        .collect();
    let s = u.norm_l2();
    Ok(if s > 0.0 { norm(&r) / s } else { norm(&r) })
}

/// `(|u|_n^n + ||grad u||_n^n)^{1/n}` by grid quadrature.
pub fn w1n_norm(u: &SpectralField, grid: &Grid) -> Result<f64> {
    crate::field::check_grid(u.spectrum(), grid)?;
    let n = u.spectrum().dimension();
    let q = n as f64;
    let values = grid.synthesize_coefficients(u.coefficients());
    let mut grad_sq = vec![0.0; values.len()];
    for dir in 0..n {
        let d = grid.synthesize_derivative(u.coefficients(), dir);
        grad_sq.iter_mut().zip(&d).for_each(|(g, v)| *g += v * v);
    }
    let grad: Vec<f64> = grad_sq.iter().map(|g| g.sqrt()).collect();
    let total = integral_abs_power_of_values(&values, q, grid) + integral_abs_power_of_values(&grad, q, grid);
    Ok(total.powf(1.0 / q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub m: f64,
    /// `|u_m - u_inf|` in the W^{1,n} quadrature norm.
    pub error: f64,
    pub contraction_factor: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub w_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudy {
    pub p: f64,
    pub dimension: usize,
    pub order: usize,
    pub between_critical_exponents: bool,
    pub sigma_min: f64,
    pub rows: Vec<RateRow>,
    /// Masses left out of the fit, with the reason.
    pub excluded: Vec<(f64, String)>,
    /// Least-squares slope of log error against log m.
    pub slope: Option<f64>,
    pub errors_decreasing: bool,
    pub contraction_decreasing: bool,
}

pub fn rate_study(limit: &LimitSolution, m_list: &[f64], config: &PerturbativeConfig) -> Result<RateStudy> {
    config.validate()?;
    if m_list.len() < 2 {
        return Err(invalid("m_list", "need at least two masses"));
    }
    if m_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("m_list", "must be strictly ascending"));
    }
    if let Some(m) = m_list.iter().find(|m| !(**m >= config.m0)) {
        return Err(invalid("m_list", format!("{m} is below m0 = {}", config.m0)));
    }
    let grid = limit.grid();
    let outcomes: Vec<(f64, Result<FixedPointReport>)> = m_list
        .par_iter()
        .map(|&m| (m, fixed_point_solve(m, limit, config)))
        .collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (m, outcome) in outcomes {
        match outcome {
            Ok(r) if r.converged => rows.push(RateRow {
                m,
                error: w1n_norm(&r.state.w, grid)?,
                contraction_factor: r.state.contraction_factor(),
                iterations: r.state.iterations,
                residual: r.residual,
                w_l2: r.state.w.norm_l2(),
            }),
            Ok(r) => excluded.push((m, format!("not converged (residual {:e})", r.residual))),
            Err(e) => excluded.push((m, e.to_string())),
        }
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.m).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let slope = if rows.len() >= 2 && es.iter().all(|e| *e > 0.0) {
        log_log_slope(&ms, &es)
    } else {
        None
    };
    let factors: Vec<Option<f64>> = rows.iter().map(|r| r.contraction_factor).collect();
    let contraction_decreasing = factors.iter().all(|f| f.is_some())
        && factors.windows(2).all(|w| w[1].unwrap() < w[0].unwrap());
    let n = limit.solution.spectrum().dimension();
    Ok(RateStudy {
        p: limit.p,
        dimension: n,
        order: limit.solution.spectrum().order(),
        between_critical_exponents: between_critical_exponents(n, limit.p),
        sigma_min: limit.sigma_min,
        errors_decreasing: es.windows(2).all(|w| w[1] < w[0]),
        contraction_decreasing,
        rows,
        excluded,
        slope,
    })
}
