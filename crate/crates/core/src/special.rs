//! Special functions and one-dimensional quadrature.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function (Lanczos approximation, g = 7, with reflection for x < 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// Surface measure of the unit sphere S^{n-1} in R^n.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let n = count as f64;
    for i in 0..count.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(count, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(count, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[count - 1 - i] = x;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with Gauss-Legendre rules of doubling size
/// until two successive rules agree to `tolerance` (relative).
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tolerance: f64,
    max_points: usize,
) -> Result<f64> {
    let rule = |count: usize| {
        let (x, w) = gauss_legendre(count);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        x.iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * f(mid + half * xi))
            .sum::<f64>()
            * half
    };
    let mut count = 8;
    let mut previous = rule(count);
    let mut change = f64::INFINITY;
    while count * 2 <= max_points {
        count *= 2;
        let current = rule(count);
        change = (current - previous).abs() / current.abs().max(f64::MIN_POSITIVE);
        if change <= tolerance {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::QuadratureTolerance { tolerance, change })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 || !sxy.is_finite() {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_half_integers_and_factorials() {
        assert_relative_eq!(gamma(0.5), PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(1.5), 0.5 * PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(2.5), 0.75 * PI.sqrt(), max_relative = 1e-14);
        let mut fact = 1.0;
        for k in 1..12 {
            assert_relative_eq!(gamma(k as f64), fact, max_relative = 1e-13);
            fact *= k as f64;
        }
        // Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!)
        for k in 0..8u32 {
            let two_k_fact: f64 = (1..=2 * k).map(f64::from).product();
            let k_fact: f64 = (1..=k).map(f64::from).product();
            let expected = two_k_fact * PI.sqrt() / (4f64.powi(k as i32) * k_fact);
            assert_relative_eq!(gamma(k as f64 + 0.5), expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, max_relative = 1e-14);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for count in [1usize, 2, 5, 12, 33] {
            let (x, w) = gauss_legendre(count);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            for deg in 0..(2 * count) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "count {count} degree {deg}");
            }
        }
    }

    #[test]
    fn adaptive_integration() {
        let v = integrate_adaptive(|x| x.sin(), 0.0, PI, 1e-13, 1 << 12).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-13);
        let e = integrate_adaptive(|x| x.abs().sqrt(), -1.0, 1.0, 1e-15, 64);
        assert!(matches!(e, Err(Error::QuadratureTolerance { .. })));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.7)).collect();
        assert_relative_eq!(log_log_slope(&x, &y).unwrap(), -1.7, max_relative = 1e-12);
    }
}
