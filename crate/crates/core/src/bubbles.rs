//! Extremals of the sharp fractional Sobolev inequality and their harmonic
//! extensions to the upper half-space.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::eigenbasis::{analyze, Grid, Spectrum};
use crate::error::{invalid, Result};
use crate::field::{integral_abs_power, quadratic_form, SpectralField};
use crate::special::{gamma, integrate_adaptive, log_log_slope, unit_sphere_area};

/// `c_n = 2^{(n-1)/2} (Gamma((n+1)/2) / Gamma((n-1)/2))^{(n-1)/2}`.
pub fn bubble_constant(n: usize) -> f64 {
    let a = 0.5 * (n as f64 - 1.0);
    2f64.powf(a) * (gamma(a + 1.0) / gamma(a)).powf(a)
}

/// Best constant `S_n` of `|f|_{2n/(n-1)} <= S_n |(-Delta)^{1/4} f|_2`.
pub fn sharp_constant(n: usize) -> f64 {
    let nf = n as f64;
    2f64.powf(-0.5)
        * PI.powf(-0.25)
        * (gamma(0.5 * (nf - 1.0)) / gamma(0.5 * (nf + 1.0))).sqrt()
        * (gamma(nf) / gamma(0.5 * nf)).powf(1.0 / (2.0 * nf))
}

/// `(1 / 2n) S_n^{-2n}`, the energy threshold of the critical problem.
pub fn critical_threshold(n: usize) -> f64 {
    sharp_constant(n).powi(-2 * n as i32) / (2.0 * n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleParams {
    pub n: usize,
    pub lambda: f64,
    pub center: Vec<f64>,
}

impl BubbleParams {
    pub fn new(n: usize, lambda: f64, center: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("bubbles need n >= 2, got {n}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if center.len() != n {
            return Err(invalid("center", format!("expected {n} coordinates, got {}", center.len())));
        }
        Ok(Self { n, lambda, center })
    }

    /// Unit bubble centered at the origin.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(n, 1.0, vec![0.0; n])
    }

    pub fn constant(&self) -> f64 {
        bubble_constant(self.n)
    }

    pub fn sharp_constant(&self) -> f64 {
        sharp_constant(self.n)
    }

    /// Critical exponent `(n+1)/(n-1)`.
    pub fn exponent(&self) -> f64 {
        (self.n as f64 + 1.0) / (self.n as f64 - 1.0)
    }

    fn distance_squared(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// `w(x) = c_n (lambda / (lambda^2 + |x - xi|^2))^{(n-1)/2}`.
pub fn bubble_w(x: &[f64], params: &BubbleParams) -> f64 {
    bubble_extension(x, 0.0, params)
}

/// `W(x, t) = c_n (lambda / (|x - xi|^2 + (t + lambda)^2))^{(n-1)/2}`.
pub fn bubble_extension(x: &[f64], t: f64, params: &BubbleParams) -> f64 {
    let a = 0.5 * (params.n as f64 - 1.0);
    let d = params.distance_squared(x) + (t + params.lambda).powi(2);
    params.constant() * (params.lambda / d).powf(a)
}

/// `-d_t W(x, t)` in closed form.
pub fn bubble_extension_normal_derivative(x: &[f64], t: f64, params: &BubbleParams) -> f64 {
    let a = 0.5 * (params.n as f64 - 1.0);
    let d = params.distance_squared(x) + (t + params.lambda).powi(2);
    params.constant() * 2.0 * a * (t + params.lambda) * params.lambda.powf(a) * d.powf(-a - 1.0)
}

/// Sup over the samples of `|-d_t W(x,0) - w(x)^{(n+1)/(n-1)}| / w(x)^{(n+1)/(n-1)}`.
pub fn verify_entire_equation(params: &BubbleParams, samples: &[Vec<f64>]) -> f64 {
    let q = params.exponent();
    samples
        .iter()
        .map(|x| {
            let rhs = bubble_w(x, params).powf(q);
            (bubble_extension_normal_derivative(x, 0.0, params) - rhs).abs() / rhs
        })
        .fold(0.0, f64::max)
}

/// Sum of closed-form second derivatives of `W` in all `n + 1` variables.
pub fn bubble_laplacian(x: &[f64], t: f64, params: &BubbleParams) -> f64 {
    let a = 0.5 * (params.n as f64 - 1.0);
    let mut z: Vec<f64> = x.iter().zip(&params.center).map(|(a, b)| a - b).collect();
    z.push(t + params.lambda);
    let d: f64 = z.iter().map(|v| v * v).sum();
    let scale = params.constant() * params.lambda.powf(a);
    z.iter()
        .map(|zi| scale * (-2.0 * a * d.powf(-a - 1.0) + 4.0 * a * (a + 1.0) * zi * zi * d.powf(-a - 2.0)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicityTable {
    pub point: Vec<f64>,
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Least-squares order of the residual in the step.
    pub order: Option<f64>,
    /// Closed-form Laplacian at the point, zero up to rounding.
    pub analytic_residual: f64,
}

/// Central-difference Laplacian of `W` in `(x, t)` at an interior point.
pub fn verify_harmonicity(
    params: &BubbleParams,
    x: &[f64],
    t: f64,
    steps: &[f64],
) -> Result<HarmonicityTable> {
    if t <= 0.0 || steps.iter().any(|h| *h >= t || *h <= 0.0) {
        return Err(invalid("steps", "stencils must stay inside t > 0"));
    }
    let w = |y: &[f64], s: f64| bubble_extension(y, s, params);
    let centre = w(x, t);
    let residuals: Vec<f64> = steps
        .iter()
        .map(|&h| {
            let mut acc = w(x, t + h) + w(x, t - h) - 2.0 * centre;
            let mut y = x.to_vec();
            for i in 0..x.len() {
                y[i] = x[i] + h;
                acc += w(&y, t);
                y[i] = x[i] - h;
                acc += w(&y, t);
                y[i] = x[i];
                acc -= 2.0 * centre;
            }
            (acc / (h * h)).abs()
        })
        .collect();
    let mut point = x.to_vec();
    point.push(t);
    Ok(HarmonicityTable {
        order: log_log_slope(steps, &residuals),
        analytic_residual: bubble_laplacian(x, t, params).abs(),
        point,
        steps: steps.to_vec(),
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpNormCheck {
    pub n: usize,
    pub integral: f64,
    pub target: f64,
    pub relative_error: f64,
}

/// `int_{R^n} w_{1,0}^{2n/(n-1)}` by the radial substitution `r = tan(theta)`,
/// compared with `S_n^{-2n}`.
pub fn sharp_norm_check(n: usize, tolerance: f64) -> Result<SharpNormCheck> {
    if n < 2 {
        return Err(invalid("n", format!("need n >= 2, got {n}")));
    }
    let nf = n as f64;
    // (1 + r^2)^{-n} r^{n-1} dr = sin^{n-1} cos^{n-1} d theta
    let angular = integrate_adaptive(
        |th: f64| (th.sin() * th.cos()).powf(nf - 1.0),
        0.0,
        0.5 * PI,
        tolerance,
        1 << 14,
    )?;
    let integral = bubble_constant(n).powf(2.0 * nf / (nf - 1.0)) * unit_sphere_area(n) * angular;
    let target = sharp_constant(n).powf(-2.0 * nf);
    Ok(SharpNormCheck {
        n,
        integral,
        target,
        relative_error: (integral - target).abs() / target,
    })
}

/// Smooth radial cut-off equal to 1 on `|x| <= inner` and 0 for `|x| >= outer`.
pub fn radial_cutoff(r: f64, inner: f64, outer: f64) -> f64 {
    if r <= inner {
        return 1.0;
    }
    if r >= outer {
        return 0.0;
    }
    let s = (r - inner) / (outer - inner);
    let f = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
    f(1.0 - s) / (f(1.0 - s) + f(s))
}

/// Cut-off bubble centered at the box center, projected onto the spectrum:
/// `phi(x) w_{lambda, center}(x)` with plateau radius `inner` and support radius `outer`.
pub fn project_cutoff_bubble(
    spectrum: &Arc<Spectrum>,
    grid: &Grid,
    lambda: f64,
    inner: f64,
    outer: f64,
) -> Result<SpectralField> {
    let center = spectrum.domain().center();
    let params = BubbleParams::new(spectrum.dimension(), lambda, center.clone())?;
    let values = grid.sample(|x| {
        let r = x
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        radial_cutoff(r, inner, outer) * bubble_w(x, &params)
    });
    analyze(&values, spectrum, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceQuotientRow {
    pub side: f64,
    pub lambda: f64,
    pub quotient: f64,
    /// `1 / S_n^2`.
    pub limit: f64,
}

/// Rayleigh quotient `sum c_k^2 sqrt(lambda_k) / |u|_{2n/(n-1)}^2` of the
/// projected cut-off bubble on cubes of the given sides.
pub fn trace_quotient_probe(
    n: usize,
    order: usize,
    cases: &[(f64, f64)],
) -> Result<Vec<TraceQuotientRow>> {
    let q = 2.0 * n as f64 / (n as f64 - 1.0);
    let limit = sharp_constant(n).powi(-2);
    cases
        .iter()
        .map(|&(side, lambda)| {
            let domain = crate::eigenbasis::Domain::cube(n, side)?;
            let spectrum = Arc::new(crate::eigenbasis::enumerate_modes(&domain, order)?);
            let grid = Grid::new(spectrum.clone());
            let u = project_cutoff_bubble(&spectrum, &grid, lambda, 0.25 * side, 0.5 * side)?;
            let num = quadratic_form(&u, f64::sqrt);
            let den = integral_abs_power(&u, q, &grid)?.powf(2.0 / q);
            Ok(TraceQuotientRow {
                side,
                lambda,
                quotient: num / den,
                limit,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect()
    }

    #[test]
    fn constants() {
        assert_relative_eq!(bubble_constant(3), 2.0, max_relative = 1e-14);
        for n in 2..=6 {
            // c_n = (n-1)^{(n-1)/2}
            let nf = n as f64;
            assert_relative_eq!(bubble_constant(n), (nf - 1.0).powf(0.5 * (nf - 1.0)), max_relative = 1e-13);
        }
        // S_3^{-6} = 2 pi^2
        assert_relative_eq!(sharp_constant(3).powi(-6), 2.0 * PI * PI, max_relative = 1e-13);
        assert_relative_eq!(critical_threshold(3), PI * PI / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn closed_form_values() {
        let p = BubbleParams::standard(3).unwrap();
        assert_relative_eq!(bubble_w(&[0.0; 3], &p), 2.0, max_relative = 1e-15);
        for t in [0.0, 0.5, 3.0] {
            assert_relative_eq!(bubble_extension(&[0.0; 3], t, &p), 2.0 / (1.0 + t).powi(2), max_relative = 1e-15);
        }
        assert_relative_eq!(bubble_extension_normal_derivative(&[0.0; 3], 0.0, &p), 4.0, max_relative = 1e-15);
        assert!(BubbleParams::new(1, 1.0, vec![0.0]).is_err());
        assert!(BubbleParams::new(3, 0.0, vec![0.0; 3]).is_err());
    }

    #[test]
    fn scaling_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=4 {
            let unit = BubbleParams::standard(n).unwrap();
            for _ in 0..20 {
                let lambda = rng.random_range(0.05..5.0);
                let xi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let p = BubbleParams::new(n, lambda, xi.clone()).unwrap();
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let t = rng.random_range(0.0..2.0);
                let y: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| (a - b) / lambda).collect();
                let expected = lambda.powf(-0.5 * (n as f64 - 1.0)) * bubble_extension(&y, t / lambda, &unit);
                assert_relative_eq!(bubble_extension(&x, t, &p), expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn entire_equation_holds() {
        for n in 2..=5 {
            for (lambda, seed) in [(1.0, 1), (0.1, 2), (7.5, 3)] {
                let center: Vec<f64> = (0..n).map(|i| 0.3 * i as f64).collect();
                let p = BubbleParams::new(n, lambda, center).unwrap();
                let err = verify_entire_equation(&p, &random_points(n, 10, seed));
                assert!(err <= 1e-10, "n {n}: {err}");
            }
        }
    }

    #[test]
    fn harmonicity_converges_at_second_order() {
        let p = BubbleParams::standard(3).unwrap();
        let steps = [1e-1, 1e-2, 1e-3];
        let table = verify_harmonicity(&p, &[0.0, 0.0, 0.0], 1.0, &steps).unwrap();
        let order = table.order.unwrap();
        assert!((1.8..=2.2).contains(&order), "order {order}");
        assert!(table.analytic_residual < 1e-13);
        let scaled = BubbleParams::new(3, 0.5, vec![0.0; 3]).unwrap();
        let t2 = verify_harmonicity(&scaled, &[0.0, 0.0, 0.0], 0.5, &[5e-2, 5e-3, 5e-4]).unwrap();
        assert!((t2.order.unwrap() - order).abs() < 0.1);
        assert!(verify_harmonicity(&p, &[0.0; 3], 0.01, &steps).is_err());
    }

    #[test]
    fn sharp_norms() {
        for n in [2usize, 3, 4] {
            let c = sharp_norm_check(n, 1e-12).unwrap();
            assert!(c.relative_error <= 1e-6, "n {n}: {:?}", c);
        }
        // sanity of the integrand: positive and radially decreasing
        let p = BubbleParams::standard(3).unwrap();
        let radial: Vec<f64> = (0..50).map(|i| bubble_w(&[0.2 * i as f64, 0.0, 0.0], &p)).collect();
        assert!(radial.iter().all(|v| *v > 0.0));
        assert!(radial.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn cutoff_is_smooth_and_monotone() {
        assert_eq!(radial_cutoff(0.1, 0.5, 1.0), 1.0);
        assert_eq!(radial_cutoff(1.0, 0.5, 1.0), 0.0);
        assert_relative_eq!(radial_cutoff(0.75, 0.5, 1.0), 0.5, max_relative = 1e-15);
        let v: Vec<f64> = (0..=100).map(|i| radial_cutoff(0.5 + 0.005 * i as f64, 0.5, 1.0)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn trace_quotient_stays_above_sharp_value() {
        let rows = trace_quotient_probe(3, 12, &[(std::f64::consts::PI, 0.4)]).unwrap();
        let r = rows[0];
        assert!(r.quotient > r.limit, "{r:?}");
        assert!(r.quotient < 2.0 * r.limit, "{r:?}");
    }

    proptest! {
        #[test]
        fn entire_equation_under_scaling(lambda in 0.01f64..100.0, s in -5.0f64..5.0, n in 2usize..=5) {
            let p = BubbleParams::new(n, lambda, vec![s; n]).unwrap();
            let pts = random_points(n, 4, (lambda * 1e6) as u64);
            prop_assert!(verify_entire_equation(&p, &pts) <= 1e-10);
        }
    }
}
