use rayon::prelude::*;
use serde::Serialize;

use super::nehari::reduced_energy;
use super::solver::{solve_least_energy, SolverConfig};
use crate::bubbles::{critical_threshold, project_cutoff_bubble};
use crate::eigenbasis::{Domain, Grid};
use crate::error::{invalid, Error, Result};
use crate::field::{energy_aggregates, SpectralField};
use crate::special::log_log_slope;

/// Plateau radius of the bubble cut-off, relative to the shortest side.
pub const CUTOFF_PLATEAU: f64 = 0.25;
/// Support radius of the bubble cut-off, relative to the shortest side.
pub const CUTOFF_SUPPORT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelRow {
    pub lambda_scale: f64,
    /// `sup_t I_m(t Psi) = (1/2n) alpha^n beta^{-(n-1)}`.
    pub level: f64,
    /// `(1/2n) S_n^{-2n}`.
    pub threshold: f64,
    pub flag: bool,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTable {
    pub m: f64,
    pub dimension: usize,
    pub order: usize,
    pub rows: Vec<LevelRow>,
    /// Largest scale (scanning downward) at which the level is below the threshold.
    pub first_flagged_scale: Option<f64>,
}

/// Mountain-pass level of the projected, cut-off bubble centered at the box
/// center, at the critical exponent `p = (n+1)/(n-1)`.
pub fn mountain_pass_level_bound(m: f64, lambda_scales: &[f64], grid: &Grid) -> Result<LevelTable> {
    let spectrum = grid.spectrum();
    let n = spectrum.dimension();
    if n < 2 {
        return Err(invalid("dimension", "the level bound needs n >= 2"));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(invalid("m", format!("must be finite and >= 0, got {m}")));
    }
    let min_side = spectrum
        .domain()
        .side_lengths()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let inner = CUTOFF_PLATEAU * min_side;
    let outer = CUTOFF_SUPPORT * min_side;
    if let Some(bad) = lambda_scales.iter().find(|l| !(**l > 0.0 && **l < inner)) {
        return Err(Error::Geometry(format!(
            "bubble scale {bad} must lie in (0, {inner}), the cut-off plateau radius"
        )));
    }
    let nf = n as f64;
    let p = (nf + 1.0) / (nf - 1.0);
    let threshold = critical_threshold(n);
    let rows: Vec<Result<LevelRow>> = lambda_scales
        .par_iter()
        .map(|&lambda| {
            let psi = project_cutoff_bubble(spectrum, grid, lambda, inner, outer)?;
            let agg = energy_aggregates(&psi, m, p, grid)?;
            let level = reduced_energy(agg.quadratic, agg.nonlinear, p);
            Ok(LevelRow {
                lambda_scale: lambda,
                level,
                threshold,
                flag: level < threshold,
                alpha: agg.quadratic,
                beta: agg.nonlinear,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut by_scale: Vec<&LevelRow> = rows.iter().collect();
    by_scale.sort_by(|a, b| b.lambda_scale.total_cmp(&a.lambda_scale));
    let first_flagged_scale = by_scale.iter().find(|r| r.flag).map(|r| r.lambda_scale);
    Ok(LevelTable {
        m,
        dimension: n,
        order: spectrum.order(),
        rows,
        first_flagged_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub order: usize,
    pub converged: bool,
    pub iterations: usize,
    pub linf: f64,
    pub energy: f64,
    pub pohozaev_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub m: f64,
    pub p: f64,
    pub dimension: usize,
    /// `p >= (n+2)/(n-2)`.
    pub supercritical: bool,
    pub rows: Vec<ProbeRow>,
    /// Least-squares slope of log residual against log N.
    pub slope: Option<f64>,
    /// `2^{-slope}`: average reduction of the residual per doubling of N.
    pub decay_per_doubling: Option<f64>,
}

/// Least-energy solves at each truncation, reporting the Pohozaev residual.
pub fn nonexistence_probe(
    domain: &Domain,
    m: f64,
    p: f64,
    orders: &[usize],
    config: &SolverConfig,
) -> Result<ProbeReport> {
    let n = domain.dimension();
    if orders.len() < 2 {
        return Err(invalid("orders", "need at least two truncations"));
    }
    let rows: Vec<Result<ProbeRow>> = orders
        .par_iter()
        .map(|&order| {
            let cfg = SolverConfig {
                order,
                ..config.clone()
            };
            let report = solve_least_energy(domain, m, p, &cfg)?;
            let grid = cfg.discretize(domain)?;
            Ok(ProbeRow {
                order,
                converged: report.converged,
                iterations: report.iterations,
                linf: sup_norm(&report.solution, &grid),
                energy: report.energy,
                pohozaev_residual: report.diagnostics.pohozaev_residual,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let ns: Vec<f64> = rows.iter().map(|r| r.order as f64).collect();
    let rs: Vec<f64> = rows.iter().map(|r| r.pohozaev_residual).collect();
    let slope = if rs.iter().all(|r| *r > 0.0) {
        log_log_slope(&ns, &rs)
    } else {
        None
    };
    Ok(ProbeReport {
        m,
        p,
        dimension: n,
        supercritical: n >= 3 && p >= (n as f64 + 2.0) / (n as f64 - 2.0),
        rows,
        slope,
        decay_per_doubling: slope.map(|s| 2f64.powf(-s)),
    })
}

/// Largest absolute value over the grid nodes.
pub fn sup_norm(u: &SpectralField, grid: &Grid) -> f64 {
    grid.synthesize_coefficients(u.coefficients())
        .iter()
        .fold(0.0, |a, v| a.max(v.abs()))
}
