use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pseudorel::eigenbasis::MAX_DIMENSION;
use pseudorel::perturbative::PerturbativeConfig;
use pseudorel::variational::{max_exponent, InitialGuess, SolverConfig, CUTOFF_PLATEAU};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    RateStudy,
    Pohozaev,
    SymbolCheck,
    BubbleCheck,
    MpLevel,
    NonexistenceProbe,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::RateStudy => "rate-study",
            Self::Pohozaev => "pohozaev",
            Self::SymbolCheck => "symbol-check",
            Self::BubbleCheck => "bubble-check",
            Self::MpLevel => "mp-level",
            Self::NonexistenceProbe => "nonexistence-probe",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Descent settings; unset fields take the per-kind defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub armijo_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub armijo_constant: Option<f64>,
    /// Relative amplitude of the seeded perturbation of the first mode; 0 starts
    /// from the first mode itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_window: Option<usize>,
}

/// One experiment. As read from a file every field may be missing; after
/// [`resolve`] every field the kind uses is set and no other field is.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Box side lengths; a cube of side pi when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sides: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<f64>>,
    /// Truncation order N per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// Subcritical exponent run alongside a nonexistence probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_p: Option<f64>,
    /// Window the fitted rate must fall in, when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_slope: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<FixedPointSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub m: Option<f64>,
    pub order: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending field, `$` for the document itself.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::new("$", e.to_string()))
}

pub fn emit(config: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("$", format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| ConfigError::new(e.path, format!("{}: {}", path.display(), e.message)))
}

/// Merges `overrides` over `file`, fills the defaults of `kind` and validates.
pub fn resolve(kind: ExperimentKind, file: ExperimentConfig, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    if let Some(k) = file.kind {
        if k != kind {
            return Err(ConfigError::new("kind", format!("file declares `{k}` but the command is `{kind}`")));
        }
    }
    let mut c = file;
    c.kind = Some(kind);
    macro_rules! take {
        ($field:ident) => {
            if overrides.$field.is_some() {
                c.$field = overrides.$field.clone();
            }
        };
    }
    take!(n);
    take!(p);
    take!(m);
    take!(order);
    take!(seed);
    take!(out);
    reject_unused(kind, &c)?;
    fill_defaults(kind, &mut c);
    validate(kind, &c)?;
    Ok(c)
}

fn uses(kind: ExperimentKind) -> &'static [&'static str] {
    use ExperimentKind::*;
    match kind {
        Solve => &["n", "sides", "p", "m", "order", "solver", "seed", "out"],
        Pohozaev => &["n", "sides", "p", "m", "orders", "solver", "seed", "out"],
        NonexistenceProbe => &["n", "sides", "p", "m", "orders", "control_p", "solver", "seed", "out"],
        MpLevel => &["n", "sides", "m", "order", "lambda_scales", "seed", "out"],
        RateStudy => &[
            "n",
            "sides",
            "p",
            "m_list",
            "order",
            "expected_slope",
            "solver",
            "fixed_point",
            "seed",
            "out",
        ],
        SymbolCheck => &["n", "sides", "m_list", "k_max", "seed", "out"],
        BubbleCheck => &["n", "seed", "out"],
    }
}

fn reject_unused(kind: ExperimentKind, c: &ExperimentConfig) -> Result<(), ConfigError> {
    let present = [
        ("n", c.n.is_some()),
        ("sides", c.sides.is_some()),
        ("p", c.p.is_some()),
        ("m", c.m.is_some()),
        ("m_list", c.m_list.is_some()),
        ("order", c.order.is_some()),
        ("orders", c.orders.is_some()),
        ("lambda_scales", c.lambda_scales.is_some()),
        ("k_max", c.k_max.is_some()),
        ("control_p", c.control_p.is_some()),
        ("expected_slope", c.expected_slope.is_some()),
        ("solver", c.solver.is_some()),
        ("fixed_point", c.fixed_point.is_some()),
    ];
    let allowed = uses(kind);
    match present.iter().find(|(name, set)| *set && !allowed.contains(name)) {
        Some((name, _)) => Err(ConfigError::new(*name, format!("not used by `{kind}`"))),
        None => Ok(()),
    }
}

fn fill_defaults(kind: ExperimentKind, c: &mut ExperimentConfig) {
    use ExperimentKind::*;
    let allowed = uses(kind);
    let wants = |name: &str| allowed.contains(&name);
    c.n.get_or_insert(3);
    c.seed.get_or_insert(0);
    if c.out.is_none() {
        c.out = Some(PathBuf::from("runs").join(kind.name()));
    }
    if wants("p") {
        c.p.get_or_insert(match kind {
            RateStudy => 3.0,
            NonexistenceProbe => 5.0,
            _ => 1.5,
        });
    }
    if wants("m") {
        c.m.get_or_insert(1.0);
    }
    if wants("order") {
        c.order.get_or_insert(12);
    }
    if wants("orders") {
        c.orders.get_or_insert_with(|| match kind {
            NonexistenceProbe => vec![6, 8, 10, 12],
            _ => vec![8, 16],
        });
    }
    if wants("control_p") {
        c.control_p.get_or_insert(1.5);
    }
    if wants("m_list") {
        c.m_list.get_or_insert_with(|| match kind {
            SymbolCheck => (1..=8).map(|k| 2f64.powi(k)).collect(),
            _ => vec![16.0, 32.0, 64.0, 128.0, 256.0],
        });
    }
    if wants("k_max") {
        c.k_max.get_or_insert(2);
    }
    if wants("lambda_scales") && c.lambda_scales.is_none() {
        let side = c
            .sides
            .as_ref()
            .and_then(|s| s.iter().cloned().reduce(f64::min))
            .unwrap_or(PI);
        c.lambda_scales = Some([0.2, 0.1, 0.05].iter().map(|f| f * side).collect());
    }
    if wants("solver") {
        let base = SolverConfig::default();
        let s = c.solver.get_or_insert_with(SolverSettings::default);
        s.max_iterations.get_or_insert(base.max_iterations);
        s.tolerance.get_or_insert(if kind == RateStudy {
            PerturbativeConfig::default().solver.tolerance
        } else {
            base.tolerance
        });
        s.initial_step.get_or_insert(base.initial_step);
        s.max_step.get_or_insert(base.max_step);
        s.armijo_factor.get_or_insert(base.armijo_factor);
        s.armijo_constant.get_or_insert(base.armijo_constant);
        s.perturbation.get_or_insert(0.0);
    }
    if wants("fixed_point") {
        let base = PerturbativeConfig::default();
        let f = c.fixed_point.get_or_insert_with(FixedPointSettings::default);
        f.tolerance.get_or_insert(base.tolerance);
        f.max_iterations.get_or_insert(base.max_iterations);
        f.degeneracy_threshold.get_or_insert(base.degeneracy_threshold);
        f.m0.get_or_insert(base.m0);
        f.divergence_window.get_or_insert(base.divergence_window);
    }
}

fn positive(path: impl Into<String>, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be positive and finite, got {v}")))
    }
}

fn ascending<T: PartialOrd + Copy + fmt::Display>(path: &str, values: &[T], min_len: usize) -> Result<(), ConfigError> {
    if values.len() < min_len {
        return Err(ConfigError::new(path, format!("need at least {min_len} entries")));
    }
    if let Some(i) = (1..values.len()).find(|&i| !(values[i - 1] < values[i])) {
        return Err(ConfigError::new(
            format!("{path}[{i}]"),
            format!("must exceed the previous entry {}", values[i - 1]),
        ));
    }
    Ok(())
}

fn validate(kind: ExperimentKind, c: &ExperimentConfig) -> Result<(), ConfigError> {
    use ExperimentKind::*;
    let n = c.n.expect("filled");
    let max_n = if kind == BubbleCheck { 16 } else { MAX_DIMENSION };
    let min_n = if matches!(kind, BubbleCheck | MpLevel) { 2 } else { 1 };
    if !(min_n..=max_n).contains(&n) {
        return Err(ConfigError::new("n", format!("must lie in {min_n}..={max_n} for `{kind}`, got {n}")));
    }
    if let Some(sides) = &c.sides {
        if sides.len() != n {
            return Err(ConfigError::new("sides", format!("need {n} side lengths, got {}", sides.len())));
        }
        for (i, s) in sides.iter().enumerate() {
            positive(format!("sides[{i}]"), *s)?;
        }
    }
    if let Some(p) = c.p {
        let upper = match kind {
            RateStudy if n >= 3 => (n as f64 + 2.0) / (n as f64 - 2.0),
            RateStudy => f64::INFINITY,
            _ => max_exponent(n),
        };
        if !(p > 1.0 && p < upper) {
            return Err(ConfigError::new("p", format!("must lie in (1, {upper}) for n = {n}, got {p}")));
        }
    }
    if let Some(p) = c.control_p {
        if !(p > 1.0 && p < max_exponent(n)) {
            return Err(ConfigError::new(
                "control_p",
                format!("must lie in (1, {}) for n = {n}, got {p}", max_exponent(n)),
            ));
        }
    }
    if let Some(m) = c.m {
        positive("m", m)?;
    }
    if let Some(order) = c.order {
        if order == 0 {
            return Err(ConfigError::new("order", "must be at least 1"));
        }
    }
    if let Some(orders) = &c.orders {
        ascending("orders", orders, 2)?;
        if orders[0] == 0 {
            return Err(ConfigError::new("orders[0]", "must be at least 1"));
        }
    }
    if let Some(ms) = &c.m_list {
        ascending("m_list", ms, 2)?;
        let floor = match kind {
            SymbolCheck => 2.0,
            _ => c.fixed_point.as_ref().and_then(|f| f.m0).unwrap_or(1.0),
        };
        if let Some(i) = ms.iter().position(|m| !(*m >= floor && m.is_finite())) {
            return Err(ConfigError::new(format!("m_list[{i}]"), format!("must be finite and >= {floor}")));
        }
    }
    if let Some(k) = c.k_max {
        if k > 2 {
            return Err(ConfigError::new("k_max", format!("at most 2 is supported, got {k}")));
        }
    }
    if let Some(scales) = &c.lambda_scales {
        if scales.is_empty() {
            return Err(ConfigError::new("lambda_scales", "need at least one scale"));
        }
        let side = c
            .sides
            .as_ref()
            .and_then(|s| s.iter().cloned().reduce(f64::min))
            .unwrap_or(PI);
        let limit = CUTOFF_PLATEAU * side;
        if let Some(i) = scales.iter().position(|l| !(*l > 0.0 && *l < limit)) {
            return Err(ConfigError::new(
                format!("lambda_scales[{i}]"),
                format!("must lie in (0, {limit}), the cut-off plateau radius"),
            ));
        }
    }
    if let Some([lo, hi]) = c.expected_slope {
        if !(lo < hi) {
            return Err(ConfigError::new("expected_slope", "need lower < upper"));
        }
    }
    if c.solver.is_some() {
        solver_config(c).validate().map_err(|e| prefixed("solver", e))?;
    }
    // the solver block is already known valid, so errors here are fixed-point ones
    if c.fixed_point.is_some() {
        perturbative_config(c).validate().map_err(|e| prefixed("fixed_point", e))?;
    }
    Ok(())
}

fn prefixed(section: &str, e: pseudorel::Error) -> ConfigError {
    match e {
        pseudorel::Error::InvalidParameter { name, reason } => {
            // the solver's initial-guess amplitude is exposed as `perturbation`
            let name = if name.starts_with("initial_guess") { "perturbation" } else { name };
            ConfigError::new(format!("{section}.{name}"), reason)
        }
        other => ConfigError::new(section, other.to_string()),
    }
}

/// Core solver settings of a resolved config.
pub fn solver_config(c: &ExperimentConfig) -> SolverConfig {
    let base = SolverConfig::default();
    let s = c.solver.clone().unwrap_or_default();
    let amplitude = s.perturbation.unwrap_or(0.0);
    SolverConfig {
        order: c.order.unwrap_or(base.order),
        max_iterations: s.max_iterations.unwrap_or(base.max_iterations),
        tolerance: s.tolerance.unwrap_or(base.tolerance),
        initial_step: s.initial_step.unwrap_or(base.initial_step),
        max_step: s.max_step.unwrap_or(base.max_step),
        armijo_factor: s.armijo_factor.unwrap_or(base.armijo_factor),
        armijo_constant: s.armijo_constant.unwrap_or(base.armijo_constant),
        initial_guess: if amplitude == 0.0 {
            InitialGuess::FirstMode
        } else {
            InitialGuess::Perturbed { amplitude }
        },
        seed: c.seed.unwrap_or(0),
        ..base
    }
}

/// Core perturbative settings of a resolved config.
pub fn perturbative_config(c: &ExperimentConfig) -> PerturbativeConfig {
    let base = PerturbativeConfig::default();
    let f = c.fixed_point.clone().unwrap_or_default();
    PerturbativeConfig {
        solver: solver_config(c),
        tolerance: f.tolerance.unwrap_or(base.tolerance),
        max_iterations: f.max_iterations.unwrap_or(base.max_iterations),
        degeneracy_threshold: f.degeneracy_threshold.unwrap_or(base.degeneracy_threshold),
        m0: f.m0.unwrap_or(base.m0),
        divergence_window: f.divergence_window.unwrap_or(base.divergence_window),
    }
}

/// Side lengths of a resolved config.
pub fn sides(c: &ExperimentConfig) -> Vec<f64> {
    c.sides.clone().unwrap_or_else(|| vec![PI; c.n.unwrap_or(3)])
}
