//! Preconditioned nonlinear conjugate-gradient descent on the Nehari manifold of
//! `E(u) = 1/2 sum s_k c_k^2 - 1/(p+1) int |u|^{p+1}` for positive weights `s_k`.
//!
//! Along rays `E(t u)` has a unique maximizer `t0 = (A/B)^{1/(p-1)}` with
//! `A = sum s_k c_k^2`, `B = int |u|^{p+1}`, and the reduced functional
//! `E(t0 u) = (1/2 - 1/(p+1)) A^{(p+1)/(p-1)} B^{-2/(p-1)}` is 0-homogeneous.
//! The descent minimizes the reduced functional in the metric weighted by
//! `s_k` and rescales every accepted iterate back onto the manifold.

use serde::Serialize;

use crate::eigenbasis::{Grid, AXIS_GRAM_TOLERANCE};
use crate::error::{Error, Result};
use crate::field::{integral_abs_power_of_values, power_nonlinearity, SpectralField};

/// `t0 = (A / B)^{1/(p-1)}`.
pub fn nehari_scale_from_aggregates(quadratic: f64, nonlinear: f64, p: f64) -> Result<f64> {
    if !(quadratic > 0.0) {
        return Err(Error::NonCoercive { quadratic });
    }
    if !(nonlinear > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok((quadratic / nonlinear).powf(1.0 / (p - 1.0)))
}

/// Energy on the Nehari manifold through `u`, from its aggregates.
pub fn reduced_energy(quadratic: f64, nonlinear: f64, p: f64) -> f64 {
    (0.5 - 1.0 / (p + 1.0))
        * quadratic.powf((p + 1.0) / (p - 1.0))
        * nonlinear.powf(-2.0 / (p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DescentSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub field: SpectralField,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub newton_steps: usize,
    pub converged: bool,
}

/// State of one point on the manifold.
struct Point {
    coeffs: Vec<f64>,
    values: Vec<f64>,
    quadratic: f64,
    nonlinear: f64,
    energy: f64,
}

fn weighted_square(coeffs: &[f64], weights: &[f64]) -> f64 {
    coeffs.iter().zip(weights).map(|(c, s)| s * c * c).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn evaluate(coeffs: Vec<f64>, weights: &[f64], p: f64, grid: &Grid) -> Result<Point> {
    let values = grid.synthesize_coefficients(&coeffs);
    let quadratic = weighted_square(&coeffs, weights);
    let nonlinear = integral_abs_power_of_values(&values, p + 1.0, grid);
    if !(quadratic.is_finite() && nonlinear.is_finite()) {
        return Err(Error::NumericalBlowup("non-finite energy aggregate"));
    }
    let energy = if nonlinear > 0.0 {
        reduced_energy(quadratic, nonlinear, p)
    } else {
        f64::INFINITY
    };
    Ok(Point {
        coeffs,
        values,
        quadratic,
        nonlinear,
        energy,
    })
}

/// Rescales a point onto the manifold; values and aggregates follow exactly.
fn rescale(point: &mut Point, p: f64) -> Result<()> {
    let t = nehari_scale_from_aggregates(point.quadratic, point.nonlinear, p)?;
    point.coeffs.iter_mut().for_each(|c| *c *= t);
    point.values.iter_mut().for_each(|v| *v *= t);
    point.quadratic *= t * t;
    point.nonlinear *= t.powf(p + 1.0);
    Ok(())
}

fn projected_nonlinearity(point: &Point, p: f64, grid: &Grid) -> Result<Vec<f64>> {
    let f: Vec<f64> = point.values.iter().map(|v| power_nonlinearity(*v, p)).collect();
    let out = grid.analyze_values(&f);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup("non-finite nonlinearity"));
    }
    Ok(out)
}

pub(crate) fn nehari_descent(
    grid: &Grid,
    weights: &[f64],
    p: f64,
    initial: &SpectralField,
    settings: &DescentSettings,
) -> Result<DescentOutcome> {
    if grid.gram_deviation() > AXIS_GRAM_TOLERANCE {
        return Err(Error::Resolution(format!("Gram deviation {:e}", grid.gram_deviation())));
    }
    if initial.coefficients().iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroField);
    }
    let mut point = evaluate(initial.coefficients().to_vec(), weights, p, grid)?;
    rescale(&mut point, p)?;
    let mut trace = vec![point.energy];
    let mut step = settings.initial_step;
    let mut iterations = 0;
    let mut converged = false;
    let factor = 2.0 * (p + 1.0) / (p - 1.0);
    let (mut pre_res, mut res);
    // previous direction and s-weighted square of the previous gradient
    let mut previous: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    loop {
        let f = projected_nonlinearity(&point, p, grid)?;
        let ratio = point.quadratic / point.nonlinear;
        // preconditioned gradient direction c - (A/B) s^{-1} P f
        let g: Vec<f64> = point
            .coeffs
            .iter()
            .zip(&f)
            .zip(weights)
            .map(|((c, fk), s)| c - ratio * fk / s)
            .collect();
        let c_norm = norm(&point.coeffs);
        pre_res = norm(&g) / c_norm;
        res = point
            .coeffs
            .iter()
            .zip(&f)
            .zip(weights)
            .map(|((c, fk), s)| (s * c - fk).powi(2))
            .sum::<f64>()
            .sqrt()
            / c_norm;
        if pre_res <= settings.tolerance && res <= 10.0 * settings.tolerance {
            converged = true;
            break;
        }
        // energy comparisons cannot resolve gradients below ~sqrt(eps): hand over to Newton
        if pre_res <= POLISH_THRESHOLD || iterations >= settings.max_iterations {
            break;
        }
        let g_sq = weighted_square(&g, weights);
        // Polak-Ribiere (clipped at zero) in the s-weighted metric
        let mut d = g.clone();
        if let Some((d_old, g_old, g_old_sq)) = &previous {
            let num: f64 = g
                .iter()
                .zip(g_old)
                .zip(weights)
                .map(|((a, b), s)| s * a * (a - b))
                .sum();
            let beta = (num / g_old_sq).max(0.0);
            d.iter_mut().zip(d_old).for_each(|(dk, ok)| *dk += beta * ok);
        }
        let mut along: f64 = g.iter().zip(&d).zip(weights).map(|((a, b), s)| s * a * b).sum();
        if !(along > 0.0) {
            d.clone_from(&g);
            along = g_sq;
        }
        let slope = -point.energy * factor / point.quadratic * along;
        let noise = 1e-14 * point.energy.abs();
        let mut alpha = step;
        let accepted = loop {
            let trial: Vec<f64> = point.coeffs.iter().zip(&d).map(|(c, dk)| c - alpha * dk).collect();
            let candidate = evaluate(trial, weights, p, grid)?;
            if candidate.nonlinear > 0.0
                && candidate.energy <= point.energy + settings.sufficient_decrease * alpha * slope + noise
            {
                break Some((candidate, alpha));
            }
            alpha *= settings.backtrack;
            if alpha < 1e-12 * settings.initial_step {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some((mut candidate, used)) => {
                let t = nehari_scale_from_aggregates(candidate.quadratic, candidate.nonlinear, p)?;
                rescale(&mut candidate, p)?;
                debug_assert!(candidate.energy <= point.energy + 1e-12 * point.energy.abs());
                point = candidate;
                trace.push(point.energy);
                step = (used / settings.backtrack).min(settings.max_step);
                // the reduced functional is 0-homogeneous: carry the direction along the rescaling
                d.iter_mut().for_each(|x| *x *= t);
                let g_scaled: Vec<f64> = g.iter().map(|x| x * t).collect();
                previous = Some((d, g_scaled, g_sq * t * t));
            }
            None if previous.is_some() => {
                // restart from steepest descent before giving up
                previous = None;
                step = settings.initial_step;
            }
            None => {
                // no decrease possible at rounding level: stationary to working precision
                log::debug!("line search stalled at iteration {iterations}");
                break;
            }
        }
    }
    let mut newton_steps = 0;
    if !converged && pre_res <= POLISH_FALLBACK {
        let polished = newton_polish(point.coeffs.clone(), weights, p, grid, settings.tolerance)?;
        if polished.preconditioned < pre_res {
            newton_steps = polished.steps;
            pre_res = polished.preconditioned;
            res = polished.equation;
            point = evaluate(polished.coeffs, weights, p, grid)?;
            converged = pre_res <= settings.tolerance && res <= 10.0 * settings.tolerance;
        }
    }
    let field = SpectralField::new(initial.spectrum().clone(), point.coeffs)?;
    Ok(DescentOutcome {
        field,
        trace,
        iterations,
        newton_steps,
        converged,
    })
}

/// Preconditioned residual below which the descent switches to Newton steps.
const POLISH_THRESHOLD: f64 = 1e-4;
/// Largest residual at which a stalled descent still attempts the Newton polish.
const POLISH_FALLBACK: f64 = 1e-3;
const MAX_NEWTON_STEPS: usize = 12;

struct Polished {
    coeffs: Vec<f64>,
    steps: usize,
    preconditioned: f64,
    equation: f64,
}

fn residual_vectors(coeffs: &[f64], weights: &[f64], p: f64, grid: &Grid) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let values = grid.synthesize_coefficients(coeffs);
    let f: Vec<f64> = values.iter().map(|v| power_nonlinearity(*v, p)).collect();
    let f = grid.analyze_values(&f);
    let g: Vec<f64> = coeffs.iter().zip(&f).zip(weights).map(|((c, fk), s)| c - fk / s).collect();
    let c_norm = norm(coeffs);
    let eq = coeffs
        .iter()
        .zip(&f)
        .zip(weights)
        .map(|((c, fk), s)| (s * c - fk).powi(2))
        .sum::<f64>()
        .sqrt();
    let pre = norm(&g) / c_norm;
    (g, values, pre, eq / c_norm)
}

/// Newton iteration on `c - s^{-1} P f(u) = 0`; Jacobian solves by GMRES.
fn newton_polish(mut coeffs: Vec<f64>, weights: &[f64], p: f64, grid: &Grid, tolerance: f64) -> Result<Polished> {
    let (mut g, mut values, mut pre, mut eq) = residual_vectors(&coeffs, weights, p, grid);
    let mut steps = 0;
    while steps < MAX_NEWTON_STEPS && !(pre <= tolerance && eq <= 10.0 * tolerance) {
        let potential: Vec<f64> = values.iter().map(|v| p * v.abs().powf(p - 1.0)).collect();
        let jacobian = |v: &[f64]| -> Vec<f64> {
            let mut w = grid.synthesize_coefficients(v);
            w.iter_mut().zip(&potential).for_each(|(wi, q)| *wi *= q);
            let w = grid.analyze_values(&w);
            v.iter().zip(&w).zip(weights).map(|((vi, wi), s)| vi - wi / s).collect()
        };
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let solve = crate::krylov::gmres(jacobian, &rhs, 1e-13, 60, 600);
        if !solve.relative_residual.is_finite() {
            return Err(Error::NumericalBlowup("Newton correction"));
        }
        let trial: Vec<f64> = coeffs.iter().zip(&solve.solution).map(|(c, v)| c + v).collect();
        let (g_new, values_new, pre_new, eq_new) = residual_vectors(&trial, weights, p, grid);
        if !(pre_new < pre) {
            break;
        }
        coeffs = trial;
        g = g_new;
        values = values_new;
        pre = pre_new;
        eq = eq_new;
        steps += 1;
    }
    Ok(Polished {
        coeffs,
        steps,
        preconditioned: pre,
        equation: eq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NehariResiduals {
    pub preconditioned: f64,
    pub equation: f64,
}

/// Residuals `|c - s^{-1} P f| / |c|` and `|s c - P f| / |c|` of a field.
pub(crate) fn residuals(u: &SpectralField, weights: &[f64], p: f64, grid: &Grid) -> Result<NehariResiduals> {
    let values = grid.synthesize_coefficients(u.coefficients());
    let f: Vec<f64> = values.iter().map(|v| power_nonlinearity(*v, p)).collect();
    let f = grid.analyze_values(&f);
    let c = u.coefficients();
    let c_norm = norm(c);
    if c_norm == 0.0 {
        return Ok(NehariResiduals {
            preconditioned: 0.0,
            equation: 0.0,
        });
    }
    let mut pre = 0.0;
    let mut eq = 0.0;
    for ((ck, fk), s) in c.iter().zip(&f).zip(weights) {
        pre += (ck - fk / s).powi(2);
        eq += (s * ck - fk).powi(2);
    }
    Ok(NehariResiduals {
        preconditioned: pre.sqrt() / c_norm,
        equation: eq.sqrt() / c_norm,
    })
}
