use std::f64::consts::PI;

use pseudorel::bubbles::{sharp_norm_check, verify_entire_equation, BubbleParams};
use pseudorel::cylinder::{nehari_identity_residual, pohozaev_terms};
use pseudorel::eigenbasis::Domain;
use pseudorel::perturbative::{rate_study, solve_limit};
use pseudorel::spectral_calculus::{check_symbol_derivative_bounds, default_lambda_grid, BoundQuantity};
use pseudorel::special::log_log_slope;
use pseudorel::variational::{mountain_pass_level_bound, nonexistence_probe, solve_least_energy, ProbeReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{perturbative_config, sides, solver_config, ExperimentConfig, ExperimentKind};
use crate::output::Table;

/// A hard assertion of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub results: Value,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Configuration,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl From<pseudorel::Error> for Failure {
    fn from(e: pseudorel::Error) -> Self {
        use pseudorel::Error::*;
        let kind = match e {
            InvalidParameter { .. } | Geometry(_) | Capacity { .. } => FailureKind::Configuration,
            _ => FailureKind::Numerical,
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<Report, Failure>;

/// Runs a resolved config.
pub fn run(c: &ExperimentConfig) -> Outcome {
    match c.kind.expect("resolved config has a kind") {
        ExperimentKind::Solve => solve(c),
        ExperimentKind::RateStudy => rate(c),
        ExperimentKind::Pohozaev => pohozaev(c),
        ExperimentKind::SymbolCheck => symbols(c),
        ExperimentKind::BubbleCheck => bubbles(c),
        ExperimentKind::MpLevel => mp_level(c),
        ExperimentKind::NonexistenceProbe => probe(c),
    }
}

fn domain(c: &ExperimentConfig) -> Result<Domain, Failure> {
    Ok(Domain::new(sides(c))?)
}

fn mode_label(mode: &[usize]) -> String {
    mode.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ")
}

fn solve(c: &ExperimentConfig) -> Outcome {
    let (m, p) = (c.m.unwrap(), c.p.unwrap());
    let cfg = solver_config(c);
    log::info!("least-energy solve: n = {}, p = {p}, m = {m}, N = {}", c.n.unwrap(), cfg.order);
    let r = solve_least_energy(&domain(c)?, m, p, &cfg)?;
    let mut trace = Table::new("trace.csv", &["iteration", "energy"]);
    for (i, e) in r.trace.iter().enumerate() {
        trace.push(vec![i.into(), (*e).into()]);
    }
    let spectrum = r.solution.spectrum();
    let mut coefficients = Table::new("coefficients.csv", &["index", "mode", "eigenvalue", "coefficient"]);
    for (i, value) in r.solution.coefficients().iter().enumerate() {
        coefficients.push(vec![
            i.into(),
            mode_label(spectrum.mode(i)).as_str().into(),
            spectrum.eigenvalue(i).into(),
            (*value).into(),
        ]);
    }
    let checks = vec![
        check(
            "converged",
            r.converged,
            format!("{} descent iterations, {} Newton steps", r.iterations, r.newton_steps),
        ),
        check(
            "equation residual",
            r.residual <= 10.0 * cfg.tolerance,
            format!("{:e} against {:e}", r.residual, 10.0 * cfg.tolerance),
        ),
    ];
    let results = json!({
        "m": m,
        "p": p,
        "dimension": r.dimension,
        "order": r.order,
        "modes": spectrum.len(),
        "converged": r.converged,
        "iterations": r.iterations,
        "newton_steps": r.newton_steps,
        "energy": r.energy,
        "nehari_value": r.nehari_value,
        "quadratic": r.quadratic,
        "residual": r.residual,
        "preconditioned_residual": r.preconditioned_residual,
        "diagnostics": r.diagnostics,
        "sign_definite": r.sign_definite,
        "min_over_max": r.min_over_max,
    });
    Ok(Report {
        results,
        checks,
        tables: vec![trace, coefficients],
    })
}

fn rate(c: &ExperimentConfig) -> Outcome {
    let p = c.p.unwrap();
    let masses = c.m_list.clone().unwrap();
    let cfg = perturbative_config(c);
    log::info!("limit solve: n = {}, p = {p}, N = {}", c.n.unwrap(), cfg.solver.order);
    let limit = solve_limit(&domain(c)?, p, &cfg)?;
    log::info!("fixed-point sweep over {} masses", masses.len());
    let study = rate_study(&limit, &masses, &cfg)?;
    let mut table = Table::new("rate.csv", &["m", "error", "contraction_factor"]);
    for row in &study.rows {
        table.push(vec![row.m.into(), row.error.into(), row.contraction_factor.into()]);
    }
    let factors: Vec<f64> = study.rows.iter().filter_map(|r| r.contraction_factor).collect();
    let mut checks = vec![
        check(
            "all masses converged",
            study.excluded.is_empty(),
            if study.excluded.is_empty() {
                format!("{} masses", study.rows.len())
            } else {
                format!("excluded: {:?}", study.excluded)
            },
        ),
        check(
            "contraction factors below 1 and decreasing in m",
            factors.len() == study.rows.len() && factors.iter().all(|f| *f < 1.0) && study.contraction_decreasing,
            format!("{factors:?}"),
        ),
        check(
            "slope fitted",
            study.slope.is_some(),
            format!("{:?}", study.slope),
        ),
    ];
    if let Some([lo, hi]) = c.expected_slope {
        let inside = study.slope.is_some_and(|s| s >= lo && s <= hi);
        checks.push(check(
            "slope within the expected window",
            inside,
            format!("{:?} in [{lo}, {hi}]", study.slope),
        ));
    }
    let results = json!({
        "p": p,
        "dimension": study.dimension,
        "order": study.order,
        "between_critical_exponents": study.between_critical_exponents,
        "limit_residual": limit.residual,
        "sigma_min": study.sigma_min,
        "slope": study.slope,
        "errors_decreasing": study.errors_decreasing,
        "contraction_decreasing": study.contraction_decreasing,
        "rows": study.rows,
        "excluded": study.excluded,
    });
    Ok(Report {
        results,
        checks,
        tables: vec![table],
    })
}

fn pohozaev(c: &ExperimentConfig) -> Outcome {
    let (m, p, n) = (c.m.unwrap(), c.p.unwrap(), c.n.unwrap());
    let orders = c.orders.clone().unwrap();
    let dom = domain(c)?;
    let mut terms = Table::new("pohozaev_terms.csv", &["order", "term", "value"]);
    let mut summary = Table::new(
        "pohozaev.csv",
        &["order", "converged", "energy", "residual", "nehari_identity_residual"],
    );
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &order in &orders {
        let mut cfg = solver_config(c);
        cfg.order = order;
        log::info!("solve at N = {order}");
        let r = solve_least_energy(&dom, m, p, &cfg)?;
        let grid = cfg.discretize(&dom)?;
        let t = pohozaev_terms(&r.solution, m, p, &grid)?;
        let nehari = nehari_identity_residual(&r.solution, m, p, &grid)?;
        let names = ["gradient_x", "gradient_t", "mass", "nonlinear", "trace", "lateral"];
        for (name, value) in names.iter().zip(t.as_array()) {
            terms.push(vec![order.into(), (*name).into(), value.into()]);
        }
        summary.push(vec![
            order.into(),
            r.converged.into(),
            r.energy.into(),
            t.residual().into(),
            nehari.into(),
        ]);
        checks.push(check(
            &format!("N = {order}: converged with Nehari identity residual <= 1e-6"),
            r.converged && nehari <= 1e-6,
            format!("converged = {}, Nehari identity residual {nehari:e}", r.converged),
        ));
        rows.push(json!({
            "order": order,
            "converged": r.converged,
            "energy": r.energy,
            "residual": t.residual(),
            "nehari_identity_residual": nehari,
            "terms": t,
        }));
    }
    let residuals: Vec<f64> = rows.iter().map(|r| r["residual"].as_f64().unwrap_or(f64::NAN)).collect();
    let ns: Vec<f64> = orders.iter().map(|o| *o as f64).collect();
    let decay = if residuals.iter().all(|r| *r > 0.0) {
        log_log_slope(&ns, &residuals).map(|s| 2f64.powf(-s))
    } else {
        None
    };
    let critical = n >= 3 && p >= (n as f64 + 2.0) / (n as f64 - 2.0);
    if !critical {
        checks.push(check(
            "residual falls at least 4x per doubling of N",
            decay.is_some_and(|d| d >= 4.0),
            format!("decay per doubling {decay:?}"),
        ));
    }
    Ok(Report {
        results: json!({
            "m": m,
            "p": p,
            "dimension": n,
            "rows": rows,
            "decay_per_doubling": decay,
            "at_or_above_critical": critical,
        }),
        checks,
        tables: vec![summary, terms],
    })
}

fn probe_rows(table: &mut Table, report: &ProbeReport) {
    for r in &report.rows {
        table.push(vec![
            report.p.into(),
            r.order.into(),
            r.converged.into(),
            r.iterations.into(),
            r.linf.into(),
            r.energy.into(),
            r.pohozaev_residual.into(),
        ]);
    }
}

fn probe(c: &ExperimentConfig) -> Outcome {
    let (m, p) = (c.m.unwrap(), c.p.unwrap());
    let orders = c.orders.clone().unwrap();
    let dom = domain(c)?;
    let cfg = solver_config(c);
    log::info!("nonexistence probe at p = {p} over N = {orders:?}");
    let main = nonexistence_probe(&dom, m, p, &orders, &cfg)?;
    let control = match c.control_p {
        Some(q) => {
            log::info!("control sweep at p = {q}");
            Some(nonexistence_probe(&dom, m, q, &orders, &cfg)?)
        }
        None => None,
    };
    let mut table = Table::new(
        "probe.csv",
        &["p", "order", "converged", "iterations", "linf", "energy", "pohozaev_residual"],
    );
    probe_rows(&mut table, &main);
    let mut checks = Vec::new();
    if let Some(ctrl) = &control {
        probe_rows(&mut table, ctrl);
        let passed = match (main.decay_per_doubling, ctrl.decay_per_doubling) {
            (Some(a), Some(b)) => a < b,
            _ => false,
        };
        checks.push(check(
            "probe decays slower than the control",
            passed,
            format!(
                "decay per doubling {:?} at p = {} against {:?} at p = {}",
                main.decay_per_doubling, main.p, ctrl.decay_per_doubling, ctrl.p
            ),
        ));
    }
    Ok(Report {
        results: json!({ "probe": main, "control": control }),
        checks,
        tables: vec![table],
    })
}

fn mp_level(c: &ExperimentConfig) -> Outcome {
    let m = c.m.unwrap();
    let scales = c.lambda_scales.clone().unwrap();
    let cfg = solver_config(c);
    let grid = cfg.discretize(&domain(c)?)?;
    log::info!("level bound at m = {m}, N = {}", cfg.order);
    let levels = mountain_pass_level_bound(m, &scales, &grid)?;
    let mut table = Table::new("mp_level.csv", &["lambda_scale", "level", "threshold", "flag"]);
    for r in &levels.rows {
        table.push(vec![r.lambda_scale.into(), r.level.into(), r.threshold.into(), r.flag.into()]);
    }
    let finite = levels.rows.iter().all(|r| r.level.is_finite() && r.level > 0.0);
    Ok(Report {
        results: serde_json::to_value(&levels).expect("serializable"),
        checks: vec![check(
            "levels finite and positive",
            finite,
            format!("{} scales, first flagged {:?}", levels.rows.len(), levels.first_flagged_scale),
        )],
        tables: vec![table],
    })
}

fn symbols(c: &ExperimentConfig) -> Outcome {
    let masses = c.m_list.clone().unwrap();
    let k_max = c.k_max.unwrap();
    let lambda_1: f64 = sides(c).iter().map(|l| (PI / l).powi(2)).sum();
    let grid = default_lambda_grid(lambda_1);
    let report = check_symbol_derivative_bounds(k_max, &masses, &grid, lambda_1)?;
    let mut table = Table::new("bounds.csv", &["k", "m", "quantity", "constant", "argmax_lambda"]);
    for r in &report.rows {
        let quantity = match r.quantity {
            BoundQuantity::Ratio => "ratio",
            BoundQuantity::Difference => "difference",
        };
        table.push(vec![
            r.k.into(),
            r.m.into(),
            quantity.into(),
            r.constant.into(),
            r.argmax_lambda.into(),
        ]);
    }
    let worst = masses
        .iter()
        .filter_map(|m| report.constant(0, *m, BoundQuantity::Difference))
        .fold(0.0, f64::max);
    Ok(Report {
        results: serde_json::to_value(&report).expect("serializable"),
        checks: vec![check(
            "symbol-difference constant at most 1",
            worst <= 1.0,
            format!("largest k = 0 constant {worst}"),
        )],
        tables: vec![table],
    })
}

fn bubbles(c: &ExperimentConfig) -> Outcome {
    let n = c.n.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed.unwrap());
    let mut table = Table::new("bubbles.csv", &["bubble", "lambda", "max_relative_error"]);
    let mut worst: f64 = 0.0;
    for b in 0..8usize {
        let lambda = rng.random_range(0.2..3.0);
        let center: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = BubbleParams::new(n, lambda, center)?;
        let samples: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..n).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let err = verify_entire_equation(&params, &samples);
        worst = worst.max(err);
        table.push(vec![b.into(), lambda.into(), err.into()]);
    }
    let sharp = sharp_norm_check(n, 1e-10)?;
    Ok(Report {
        results: json!({
            "n": n,
            "entire_equation_error": worst,
            "sharp_norm": sharp,
        }),
        checks: vec![
            check(
                "entire-equation relative error <= 1e-10",
                worst <= 1e-10,
                format!("{worst:e}"),
            ),
            check(
                "sharp-norm relative error <= 1e-6",
                sharp.relative_error <= 1e-6,
                format!("{:e}", sharp.relative_error),
            ),
        ],
        tables: vec![table],
    })
}
