//! Functions of the Dirichlet Laplacian acting diagonally on coefficients,
//! the low-frequency regularized symbols `P_m`, `P_inf`, and a numerical
//! check of their derivative bounds uniformly in the mass.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;

/// `sqrt(lambda + m^2) - m`, evaluated without cancellation.
pub fn relativistic_gap(lambda: f64, m: f64) -> f64 {
    lambda / ((lambda + m * m).sqrt() + m)
}

/// Quintic smoothstep bump: 1 below `lambda_1 / 2`, 0 above `lambda_1`, C^2.
pub fn bump(lambda: f64, lambda_1: f64) -> f64 {
    let t = ((lambda - 0.5 * lambda_1) / (0.5 * lambda_1)).clamp(0.0, 1.0);
    1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Derivative of [`bump`] in `lambda`.
pub fn bump_derivative(lambda: f64, lambda_1: f64) -> f64 {
    let half = 0.5 * lambda_1;
    let t = (lambda - half) / half;
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    -30.0 * t * t * (1.0 - t) * (1.0 - t) / half
}

/// The regularized symbols for a fixed mass and box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolSet {
    pub m: f64,
    pub lambda_1: f64,
}

impl SymbolSet {
    pub fn new(m: f64, lambda_1: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid("m", format!("must be positive, got {m}")));
        }
        if !(lambda_1 > 0.0 && lambda_1.is_finite()) {
            return Err(invalid("lambda_1", format!("must be positive, got {lambda_1}")));
        }
        Ok(Self { m, lambda_1 })
    }

    pub fn chi(&self, lambda: f64) -> f64 {
        bump(lambda, self.lambda_1)
    }

    /// `2m (sqrt(lambda + m^2) - m) + chi(lambda)`.
    pub fn p_m(&self, lambda: f64) -> f64 {
        2.0 * self.m * relativistic_gap(lambda, self.m) + self.chi(lambda)
    }

    /// `lambda + chi(lambda)`.
    pub fn p_inf(&self, lambda: f64) -> f64 {
        lambda + self.chi(lambda)
    }

    /// `P_m - P_inf = -lambda^2 / (sqrt(lambda + m^2) + m)^2`; the bump cancels.
    fn p_difference(&self, lambda: f64) -> f64 {
        let s = (lambda + self.m * self.m).sqrt() + self.m;
        -(lambda / s).powi(2)
    }

    pub fn ratio(&self, lambda: f64) -> f64 {
        1.0 + self.ratio_excess(lambda)
    }

    /// `P_m / P_inf - 1`, free of cancellation; same derivatives as the ratio.
    pub fn ratio_excess(&self, lambda: f64) -> f64 {
        self.p_difference(lambda) / self.p_inf(lambda)
    }

    /// `1/P_inf - 1/P_m`.
    pub fn inverse_difference(&self, lambda: f64) -> f64 {
        self.p_difference(lambda) / (self.p_inf(lambda) * self.p_m(lambda))
    }

    /// Uniform lower bound `min(1, 2m(sqrt(lambda_1/2 + m^2) - m))` of `P_m`.
    pub fn lower_bound(&self) -> f64 {
        (2.0 * self.m * relativistic_gap(0.5 * self.lambda_1, self.m)).min(1.0)
    }

    /// Derivative of `P_m - P_inf`.
    fn p_difference_derivative(&self, lambda: f64) -> f64 {
        let m = self.m;
        let root = (lambda + m * m).sqrt();
        let sum = root + m;
        let q = lambda / sum;
        -2.0 * q * (sum - 0.5 * lambda / root) / (sum * sum)
    }

    pub fn ratio_derivative(&self, lambda: f64) -> f64 {
        let pi = self.p_inf(lambda);
        let dpi = 1.0 + bump_derivative(lambda, self.lambda_1);
        (self.p_difference_derivative(lambda) * pi - self.p_difference(lambda) * dpi) / (pi * pi)
    }

    pub fn inverse_difference_derivative(&self, lambda: f64) -> f64 {
        let m = self.m;
        let (pm, pi) = (self.p_m(lambda), self.p_inf(lambda));
        let chi1 = bump_derivative(lambda, self.lambda_1);
        let dpm = m / (lambda + m * m).sqrt() + chi1;
        let dpi = 1.0 + chi1;
        let prod = pi * pm;
        (self.p_difference_derivative(lambda) * prod - self.p_difference(lambda) * (dpi * pm + pi * dpm))
            / (prod * prod)
    }
}

/// Multiplies every coefficient by `symbol(lambda_k)`.
pub fn apply_multiplier<F: Fn(f64) -> f64>(symbol: F, u: &SpectralField) -> Result<SpectralField> {
    let mut coeffs = Vec::with_capacity(u.len());
    for (i, (&l, c)) in u.spectrum().eigenvalues().iter().zip(u.coefficients()).enumerate() {
        let value = symbol(l);
        if !value.is_finite() {
            return Err(Error::Symbol {
                index: i,
                eigenvalue: l,
                value,
            });
        }
        coeffs.push(value * c);
    }
    SpectralField::new(u.spectrum().clone(), coeffs)
}

fn check_mass(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(invalid("m", format!("must be positive, got {m}")));
    }
    Ok(())
}

/// `sqrt(-Delta + m^2) - m`.
pub fn apply_pm(u: &SpectralField, m: f64) -> Result<SpectralField> {
    check_mass(m)?;
    apply_multiplier(|l| relativistic_gap(l, m), u)
}

/// `2m (sqrt(-Delta + m^2) - m)`.
pub fn apply_2m_pm(u: &SpectralField, m: f64) -> Result<SpectralField> {
    check_mass(m)?;
    apply_multiplier(|l| 2.0 * m * relativistic_gap(l, m), u)
}

/// Inverse of [`apply_2m_pm`].
pub fn invert_2m_pm(f: &SpectralField, m: f64) -> Result<SpectralField> {
    check_mass(m)?;
    apply_multiplier(|l| 1.0 / (2.0 * m * relativistic_gap(l, m)), f)
}

/// 200 logarithmically spaced points on `[1e-3 lambda_1, 1e6]`.
pub fn default_lambda_grid(lambda_1: f64) -> Vec<f64> {
    log_grid(1e-3 * lambda_1, 1e6, 200)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundQuantity {
    /// `lambda^k |d^k (P_m / P_inf)|`.
    Ratio,
    /// `lambda^k |d^k (1/P_inf - 1/P_m)| / min(1/m^2, 1/(m sqrt(lambda + 1)))`.
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub k: usize,
    pub m: f64,
    pub quantity: BoundQuantity,
    pub constant: f64,
    pub argmax_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lambda_1: f64,
    pub rows: Vec<BoundRow>,
    /// Largest mismatch between the finite-difference and analytic first
    /// derivatives over the grid, relative to `max(|f'|, |f| / lambda)`.
    pub step_validation_error: f64,
}

impl BoundReport {
    pub fn constant(&self, k: usize, m: f64, quantity: BoundQuantity) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.m == m && r.quantity == quantity)
            .map(|r| r.constant)
    }

    /// Least-squares slope of log-constant against log-m.
    pub fn mass_trend(&self, k: usize, quantity: BoundQuantity) -> Option<f64> {
        let (ms, cs): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.k == k && r.quantity == quantity)
            .map(|r| (r.m, r.constant))
            .unzip();
        crate::special::log_log_slope(&ms, &cs)
    }
}

/// Relative step used for central differences of order `k`.
fn fd_step(k: usize) -> f64 {
    match k {
        1 => 1e-4,
        _ => 1e-3,
    }
}

fn derivative<F: Fn(f64) -> f64>(f: &F, lambda: f64, k: usize) -> f64 {
    let h = fd_step(k) * lambda;
    match k {
        0 => f(lambda),
        1 => (f(lambda + h) - f(lambda - h)) / (2.0 * h),
        _ => (f(lambda + h) - 2.0 * f(lambda) + f(lambda - h)) / (h * h),
    }
}

/// Sup over `lambda_grid` of the scaled symbol derivatives, for each
/// `k <= k_max` and each mass.
pub fn check_symbol_derivative_bounds(
    k_max: usize,
    m_list: &[f64],
    lambda_grid: &[f64],
    lambda_1: f64,
) -> Result<BoundReport> {
    if k_max > 2 {
        return Err(invalid("k_max", format!("at most 2 is supported, got {k_max}")));
    }
    if let Some(m) = m_list.iter().find(|m| !(**m >= 2.0 && m.is_finite())) {
        return Err(invalid("m_list", format!("masses must be >= 2, got {m}")));
    }
    if lambda_grid.is_empty() || lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(invalid("lambda_grid", "must be a non-empty set of positive values"));
    }
    let per_mass: Vec<Result<(Vec<BoundRow>, f64)>> = m_list
        .par_iter()
        .map(|&m| {
            let sym = SymbolSet::new(m, lambda_1)?;
            let ratio = |l: f64| sym.ratio(l);
            let excess = |l: f64| sym.ratio_excess(l);
            let diff = |l: f64| sym.inverse_difference(l);
            let mut rows = Vec::new();
            for k in 0..=k_max {
                for quantity in [BoundQuantity::Ratio, BoundQuantity::Difference] {
                    let mut best = (0.0, lambda_grid[0]);
                    for &l in lambda_grid {
                        let d = match quantity {
                            BoundQuantity::Ratio if k == 0 => ratio(l),
                            BoundQuantity::Ratio => derivative(&excess, l, k),
                            BoundQuantity::Difference => derivative(&diff, l, k),
                        };
                        let mut value = l.powi(k as i32) * d.abs();
                        if quantity == BoundQuantity::Difference {
                            value /= (1.0 / (m * m)).min(1.0 / (m * (l + 1.0).sqrt()));
                        }
                        if value > best.0 {
                            best = (value, l);
                        }
                    }
                    rows.push(BoundRow {
                        k,
                        m,
                        quantity,
                        constant: best.0,
                        argmax_lambda: best.1,
                    });
                }
            }
            // mismatch measured on the scale max(|f'|, |f| / lambda), since f'
            // changes sign inside the grid
            let mut worst: f64 = 0.0;
            for &l in lambda_grid {
                for (fd, exact, value) in [
                    (derivative(&excess, l, 1), sym.ratio_derivative(l), excess(l)),
                    (derivative(&diff, l, 1), sym.inverse_difference_derivative(l), diff(l)),
                ] {
                    let scale = exact.abs().max(value.abs() / l).max(f64::MIN_POSITIVE);
                    worst = worst.max((fd - exact).abs() / scale);
                }
            }
            Ok((rows, worst))
        })
        .collect();
    let mut rows = Vec::new();
    let mut step_validation_error: f64 = 0.0;
    for r in per_mass {
        let (mut r, worst) = r?;
        rows.append(&mut r);
        step_validation_error = step_validation_error.max(worst);
    }
    Ok(BoundReport {
        lambda_1,
        rows,
        step_validation_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenbasis::{enumerate_modes, Domain, Spectrum};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn spectrum(sides: Vec<f64>, order: usize) -> Arc<Spectrum> {
        Arc::new(enumerate_modes(&Domain::new(sides).unwrap(), order).unwrap())
    }

    fn mode_with_eigenvalue(s: &Arc<Spectrum>, lambda: f64) -> SpectralField {
        let i = (0..s.len()).find(|&i| s.eigenvalue(i) == lambda).unwrap();
        SpectralField::unit(s.clone(), i)
    }

    #[test]
    fn bump_shape() {
        let l1 = 3.0;
        assert_eq!(bump(0.0, l1), 1.0);
        assert_eq!(bump(1.4, l1), 1.0);
        assert_eq!(bump(l1, l1), 0.0);
        assert_eq!(bump(7.0, l1), 0.0);
        let grid: Vec<f64> = (0..=600).map(|i| i as f64 * 0.01).collect();
        assert!(grid.windows(2).all(|w| bump(w[1], l1) <= bump(w[0], l1)));
        // derivative continuous across the plateau edges and matching differences
        for &x in &[1.5, 3.0] {
            assert!(bump_derivative(x, l1).abs() < 1e-15);
        }
        for &x in &[1.7, 2.2, 2.9] {
            let h = 1e-6;
            let fd = (bump(x + h, l1) - bump(x - h, l1)) / (2.0 * h);
            assert_relative_eq!(fd, bump_derivative(x, l1), max_relative = 1e-7);
        }
    }

    #[test]
    fn multiplier_examples() {
        let s = spectrum(vec![PI; 3], 3);
        let u = SpectralField::from_fn(s.clone(), |i, _| (i as f64).sin());
        assert_eq!(apply_multiplier(|_| 1.0, &u).unwrap(), u);
        let back = apply_multiplier(|l| 1.0 / l, &apply_multiplier(|l| l, &u).unwrap()).unwrap();
        assert!(back.distance(&u) < 1e-15 * u.norm_l2());
        let e = mode_with_eigenvalue(&s, 3.0);
        let sym = SymbolSet::new(1.0, s.lambda_1()).unwrap();
        let pm = apply_multiplier(|l| sym.p_m(l), &e).unwrap();
        assert_relative_eq!(pm.dot(&e), 2.0, max_relative = 1e-15);
        let err = apply_multiplier(|l| if l > 10.0 { f64::NAN } else { 1.0 }, &u).unwrap_err();
        match err {
            Error::Symbol { eigenvalue, .. } => assert!(eigenvalue > 10.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_m_pm_examples() {
        let s = spectrum(vec![PI; 3], 2);
        let e = mode_with_eigenvalue(&s, 3.0);
        assert_relative_eq!(apply_2m_pm(&e, 1.0).unwrap().dot(&e), 2.0, max_relative = 1e-15);
        assert_relative_eq!(invert_2m_pm(&e, 1.0).unwrap().dot(&e), 0.5, max_relative = 1e-15);
        assert_relative_eq!(apply_pm(&e, 1.0).unwrap().dot(&e), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            2.0 * 2.0 * relativistic_gap(1.0, 2.0),
            4.0 * (5f64.sqrt() - 2.0),
            max_relative = 1e-14
        );
        assert_relative_eq!(4.0 * (5f64.sqrt() - 2.0), 0.9443, max_relative = 1e-4);
        let z = SpectralField::zeros(s);
        assert_eq!(invert_2m_pm(&z, 3.0).unwrap(), z);
        assert!(invert_2m_pm(&e, 0.0).is_err());
        assert!(apply_pm(&e, -1.0).is_err());
    }

    #[test]
    fn bump_annihilates_retained_modes() {
        let s = spectrum(vec![1.0, 2.5, 0.7], 4);
        let u = SpectralField::from_fn(s.clone(), |i, _| 1.0 + i as f64);
        let l1 = s.lambda_1();
        assert_eq!(apply_multiplier(|l| bump(l, l1), &u).unwrap().norm_l2(), 0.0);
    }

    #[test]
    fn inverse_difference_closed_form() {
        // for lambda >= lambda_1: 1/P_inf - 1/P_m = -1/(2m (sqrt(lambda + m^2) + m))
        for (l, m) in [(3.0, 2.0), (12.0, 5.0), (1e4, 256.0)] {
            let sym = SymbolSet::new(m, 3.0).unwrap();
            let closed = -1.0 / (2.0 * m * ((l + m * m).sqrt() + m));
            assert_relative_eq!(sym.inverse_difference(l), closed, max_relative = 1e-13);
        }
        // hand arithmetic at lambda = 5, m = 2: sqrt(9) = 3, so -1/(4 * 5) = -0.05
        let sym = SymbolSet::new(2.0, 3.0).unwrap();
        assert_relative_eq!(sym.inverse_difference(5.0), -0.05, max_relative = 1e-14);
    }

    #[test]
    fn gap_increases_toward_lambda() {
        for &l in &[0.01, 1.0, 30.0, 1e4] {
            let mut prev = 0.0;
            for i in 0..40 {
                let m = 0.05 * 1.5f64.powi(i);
                let v = 2.0 * m * relativistic_gap(l, m);
                assert!(v > prev && v < l, "lambda {l} m {m}");
                prev = v;
            }
            assert!((l - prev) / l < 1e-3);
        }
    }

    #[test]
    fn bound_report_examples() {
        let l1 = 3.0;
        let masses: Vec<f64> = (1..=8).map(|i| 2f64.powi(i)).collect();
        let report = check_symbol_derivative_bounds(2, &masses, &default_lambda_grid(l1), l1).unwrap();
        assert_eq!(report.rows.len(), masses.len() * 3 * 2);
        assert!(report.step_validation_error < 1e-5, "{}", report.step_validation_error);
        for &m in &masses {
            let c = report.constant(0, m, BoundQuantity::Difference).unwrap();
            assert!(c <= 1.0, "m {m}: {c}");
            let r = report.constant(0, m, BoundQuantity::Ratio).unwrap();
            assert!(r.is_finite() && r <= 1.0 + 1e-12);
            for k in 1..=2 {
                for q in [BoundQuantity::Ratio, BoundQuantity::Difference] {
                    assert!(report.constant(k, m, q).unwrap().is_finite());
                }
            }
        }
        for q in [BoundQuantity::Ratio, BoundQuantity::Difference] {
            let ratio = report.constant(0, 256.0, q).unwrap() / report.constant(0, 2.0, q).unwrap();
            assert!((0.1..=10.0).contains(&ratio), "{q:?}: {ratio}");
        }
        // P_m / P_inf ~ 2m / sqrt(lambda) -> 0 at fixed m, and -> 1 at fixed lambda as m grows;
        // the reported sup is attained in the bump region and stays finite
        let sym = SymbolSet::new(2.0, l1).unwrap();
        assert_relative_eq!(sym.ratio(1e12) * 1e6, 4.0, max_relative = 1e-5);
        let heavy = SymbolSet::new(1e8, l1).unwrap();
        assert!((heavy.ratio(50.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_report_rejects_bad_input() {
        let g = default_lambda_grid(1.0);
        assert!(check_symbol_derivative_bounds(3, &[2.0], &g, 1.0).is_err());
        assert!(check_symbol_derivative_bounds(1, &[1.0], &g, 1.0).is_err());
        assert!(check_symbol_derivative_bounds(1, &[2.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn zeroth_order_constants_have_no_mass_trend() {
        let l1 = 2.0;
        let masses: Vec<f64> = (1..=128).map(|i| 2.0 * i as f64).collect();
        let report = check_symbol_derivative_bounds(0, &masses, &default_lambda_grid(l1), l1).unwrap();
        for q in [BoundQuantity::Ratio, BoundQuantity::Difference] {
            let slope = report.mass_trend(0, q).unwrap();
            assert!(slope.abs() <= 0.1, "{q:?}: slope {slope}");
        }
    }

    proptest! {
        #[test]
        fn symbols_are_positive(m in 1e-3f64..1e3, l1 in 0.1f64..50.0, frac in 0.0f64..1.0, big in 1.0f64..1e8) {
            let sym = SymbolSet::new(m, l1).unwrap();
            let lb = sym.lower_bound();
            prop_assert!(lb > 0.0);
            for l in [frac * l1, l1 * big, 0.0] {
                prop_assert!(sym.p_m(l) >= lb * (1.0 - 1e-12));
                prop_assert!(sym.p_inf(l) > 0.0);
            }
            prop_assert_eq!(sym.p_m(l1 * big), 2.0 * m * relativistic_gap(l1 * big, m));
        }

        #[test]
        fn two_m_pm_inverts(m in 1e-2f64..1e3, seed in prop::collection::vec(-1.0f64..1.0, 27)) {
            let s = spectrum(vec![PI, 1.0, 2.0], 3);
            let u = SpectralField::new(s, seed).unwrap();
            let back = invert_2m_pm(&apply_2m_pm(&u, m).unwrap(), m).unwrap();
            for (a, b) in back.coefficients().iter().zip(u.coefficients()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }
    }
}
