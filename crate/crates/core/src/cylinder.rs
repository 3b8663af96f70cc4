//! Harmonic extension of a spectral field to the half-cylinder
//! `Omega x (0, inf)`: `U(x, t) = sum_k c_k exp(-mu_k t) phi_k(x)` with
//! `mu_k = sqrt(lambda_k + m^2)`. Every integral over the cylinder is a
//! closed-form sum in coefficient space.

use serde::Serialize;

use crate::eigenbasis::Grid;
use crate::error::{invalid, Error, Result};
use crate::field::{check_grid, integral_abs_power, SpectralField};

#[derive(Debug, Clone)]
pub struct CylinderExtension {
    field: SpectralField,
    m: f64,
    decay_rates: Vec<f64>,
}

impl CylinderExtension {
    pub fn new(field: SpectralField, m: f64) -> Result<Self> {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(invalid("m", format!("must be finite and >= 0, got {m}")));
        }
        let decay_rates = field
            .spectrum()
            .eigenvalues()
            .iter()
            .map(|l| (l + m * m).sqrt())
            .collect();
        Ok(Self {
            field,
            m,
            decay_rates,
        })
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn decay_rates(&self) -> &[f64] {
        &self.decay_rates
    }

    /// Coefficients of `U(., t)`.
    pub fn slice(&self, t: f64) -> SpectralField {
        let coeffs = self
            .field
            .coefficients()
            .iter()
            .zip(&self.decay_rates)
            .map(|(c, mu)| c * (-mu * t).exp())
            .collect();
        SpectralField::new(self.field.spectrum().clone(), coeffs).expect("same mode count")
    }

    /// Pointwise `U(x, t)`.
    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        let s = self.field.spectrum();
        self.field
            .coefficients()
            .iter()
            .zip(&self.decay_rates)
            .enumerate()
            .map(|(i, (c, mu))| c * (-mu * t).exp() * s.eigenfunction(i, x))
            .sum()
    }

    /// `-d_t U(., 0)`, i.e. `sqrt(-Delta + m^2) u`.
    pub fn normal_derivative_at_base(&self) -> SpectralField {
        let coeffs = self
            .field
            .coefficients()
            .iter()
            .zip(&self.decay_rates)
            .map(|(c, mu)| c * mu)
            .collect();
        SpectralField::new(self.field.spectrum().clone(), coeffs).expect("same mode count")
    }

    /// Largest per-mode value of `|lambda_k - mu_k^2 + m^2|`, relative to `lambda_k`.
    pub fn equation_residual(&self) -> f64 {
        self.field
            .spectrum()
            .eigenvalues()
            .iter()
            .zip(&self.decay_rates)
            .map(|(l, mu)| (l - mu * mu + self.m * self.m).abs() / l)
            .fold(0.0, f64::max)
    }
}

/// Closed-form cylinder energies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderIntegrals {
    /// `int_C |grad_x U|^2`.
    pub e_x: f64,
    /// `int_C |d_t U|^2`.
    pub e_t: f64,
    /// `int_C U^2`.
    pub e_0: f64,
    /// `int_Omega U(x, 0)^2`.
    pub t_0: f64,
}

pub fn cylinder_integrals(ext: &CylinderExtension) -> CylinderIntegrals {
    let mut acc = CylinderIntegrals {
        e_x: 0.0,
        e_t: 0.0,
        e_0: 0.0,
        t_0: 0.0,
    };
    let lambdas = ext.field.spectrum().eigenvalues();
    for ((c, mu), l) in ext.field.coefficients().iter().zip(&ext.decay_rates).zip(lambdas) {
        let c2 = c * c;
        acc.e_x += c2 * l / (2.0 * mu);
        acc.e_t += c2 * mu / 2.0;
        acc.e_0 += c2 / (2.0 * mu);
        acc.t_0 += c2;
    }
    acc
}

/// `int_{lateral boundary} (nu . (x - x0)) (d_nu U)^2` with `x0` the box center.
pub fn lateral_boundary_term(ext: &CylinderExtension, grid: &Grid) -> Result<f64> {
    let center = ext.field.spectrum().domain().center();
    lateral_boundary_term_about(ext, grid, &center)
}

/// As [`lateral_boundary_term`] with an explicit origin. The weight
/// `nu . (x - origin)` is nonnegative on every face only when the origin lies
/// in the closed box; otherwise a warning is logged and the sign is indefinite.
pub fn lateral_boundary_term_about(ext: &CylinderExtension, grid: &Grid, origin: &[f64]) -> Result<f64> {
    let spectrum = ext.field.spectrum();
    check_grid(spectrum, grid)?;
    let domain = spectrum.domain();
    let n = domain.dimension();
    if origin.len() != n {
        return Err(invalid("origin", format!("expected {n} coordinates, got {}", origin.len())));
    }
    let sides = domain.side_lengths();
    if origin
        .iter()
        .zip(sides)
        .any(|(o, l)| !(0.0..=*l).contains(o))
    {
        log::warn!("origin {origin:?} is outside the box; the boundary weight changes sign");
    }
    let order = spectrum.order();
    let coeffs = ext.field.coefficients();
    let mut total = 0.0;
    for j in 0..n {
        let l = sides[j];
        let lower_weight = origin[j];
        let upper_weight = l - origin[j];
        let axis_factor = (2.0 / l) * (std::f64::consts::PI / l).powi(2);
        // stride of axis j in the flat (first axis slowest) mode ordering
        let stride = order.pow((n - 1 - j) as u32);
        for base in 0..coeffs.len() {
            if (base / stride) % order != 0 {
                continue;
            }
            // tangential Gram weight from the face quadrature
            let mut tangential = 1.0;
            let mut rest = base;
            for i in (0..n).rev() {
                let ki = rest % order;
                rest /= order;
                if i != j {
                    tangential *= grid.axis_gram_diagonal(i)[ki];
                }
            }
            for a in 0..order {
                let ia = base + a * stride;
                let (ca, mua) = (coeffs[ia], ext.decay_rates[ia]);
                if ca == 0.0 {
                    continue;
                }
                for b in 0..order {
                    let ib = base + b * stride;
                    let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                    let face = lower_weight + upper_weight * sign;
                    let kk = ((a + 1) * (b + 1)) as f64;
                    total += tangential * axis_factor * kk * face * ca * coeffs[ib]
                        / (mua + ext.decay_rates[ib]);
                }
            }
        }
    }
    Ok(total)
}

/// `|int_Omega (m u^2 + |u|^{p+1}) - m^2 int_C U^2 - int_C |grad U|^2|`,
/// normalized by the largest term.
pub fn nehari_identity_residual(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<f64> {
    let ext = CylinderExtension::new(u.clone(), m)?;
    let ci = cylinder_integrals(&ext);
    let b = integral_abs_power(u, p + 1.0, grid)?;
    let terms = [m * ci.t_0, b, m * m * ci.e_0, ci.e_x + ci.e_t];
    Ok(normalized(terms[0] + terms[1] - terms[2] - terms[3], &terms))
}

/// The six terms of the Pohozaev identity about the box center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PohozaevTerms {
    pub gradient_x: f64,
    pub gradient_t: f64,
    pub mass: f64,
    pub nonlinear: f64,
    pub trace: f64,
    pub lateral: f64,
}

impl PohozaevTerms {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.gradient_x,
            self.gradient_t,
            self.mass,
            self.nonlinear,
            self.trace,
            self.lateral,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    /// `|sum| / max |term|`.
    pub fn residual(&self) -> f64 {
        normalized(self.sum(), &self.as_array())
    }
}

/// Signed terms: `(n-2)/2 E_x`, `n/2 E_t`, `n m^2/2 E_0`, `-n/(p+1) int|u|^{p+1}`,
/// `-n m/2 |u|_2^2`, and half the lateral boundary term.
pub fn pohozaev_terms(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<PohozaevTerms> {
    let ext = CylinderExtension::new(u.clone(), m)?;
    let ci = cylinder_integrals(&ext);
    let n = u.spectrum().dimension() as f64;
    Ok(PohozaevTerms {
        gradient_x: 0.5 * (n - 2.0) * ci.e_x,
        gradient_t: 0.5 * n * ci.e_t,
        mass: 0.5 * n * m * m * ci.e_0,
        nonlinear: -n / (p + 1.0) * integral_abs_power(u, p + 1.0, grid)?,
        trace: -0.5 * n * m * ci.t_0,
        lateral: 0.5 * lateral_boundary_term(&ext, grid)?,
    })
}

pub fn pohozaev_residual(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<f64> {
    Ok(pohozaev_terms(u, m, p, grid)?.residual())
}

fn normalized(value: f64, terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0, |a: f64, t| a.max(t.abs()));
    if scale == 0.0 {
        0.0
    } else {
        value.abs() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceCoercivity {
    /// `m T_0`.
    pub lhs: f64,
    /// `m^2 E_0 + E_t`.
    pub rhs: f64,
    /// `(E_x + E_t + m^2 E_0 - m T_0) / (E_x + E_t)`.
    pub ratio: f64,
}

impl TraceCoercivity {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 4.0 * f64::EPSILON)
    }
}

pub fn trace_coercivity_check(u: &SpectralField, m: f64) -> Result<TraceCoercivity> {
    if u.coefficients().iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroField);
    }
    let ext = CylinderExtension::new(u.clone(), m)?;
    let ci = cylinder_integrals(&ext);
    let gradient = ci.e_x + ci.e_t;
    Ok(TraceCoercivity {
        lhs: m * ci.t_0,
        rhs: m * m * ci.e_0 + ci.e_t,
        ratio: (gradient + m * m * ci.e_0 - m * ci.t_0) / gradient,
    })
}

/// Per-mode lower bound `min_k (mu_k - m) / mu_k` of the coercivity ratio.
pub fn coercivity_floor(u: &SpectralField, m: f64) -> f64 {
    u.spectrum()
        .eigenvalues()
        .iter()
        .map(|l| {
            let mu = (l + m * m).sqrt();
            crate::spectral_calculus::relativistic_gap(*l, m) / mu
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenbasis::{enumerate_modes, Domain, Spectrum};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn setup(sides: Vec<f64>, order: usize) -> (Arc<Spectrum>, Grid) {
        let s = Arc::new(enumerate_modes(&Domain::new(sides).unwrap(), order).unwrap());
        let g = Grid::new(s.clone());
        (s, g)
    }

    fn random_field(s: &Arc<Spectrum>, rng: &mut ChaCha8Rng) -> SpectralField {
        SpectralField::from_fn(s.clone(), |_, l| rng.random_range(-1.0..1.0) / (1.0 + l))
    }

    fn lambda_three_mode() -> (Arc<Spectrum>, SpectralField) {
        let (s, _) = setup(vec![PI; 3], 2);
        (s.clone(), SpectralField::unit(s, 0))
    }

    #[test]
    fn extension_invariants() {
        let (s, g) = setup(vec![PI, 2.0], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&s, &mut rng);
        let ext = CylinderExtension::new(u.clone(), 1.3).unwrap();
        assert_eq!(ext.slice(0.0), u);
        assert!(ext.equation_residual() < 1e-15);
        let dt = ext.normal_derivative_at_base();
        for ((a, c), l) in dt.coefficients().iter().zip(u.coefficients()).zip(s.eigenvalues()) {
            assert_relative_eq!(*a, c * (l + 1.69).sqrt(), max_relative = 1e-15);
        }
        // pointwise: harmonic in (x, t) up to the mass term, checked by differences
        let (x, t, h) = ([1.0, 0.7], 0.3, 1e-3);
        let v = |x: [f64; 2], t: f64| ext.value(&x, t);
        let lap = (v([x[0] + h, x[1]], t) + v([x[0] - h, x[1]], t) + v([x[0], x[1] + h], t)
            + v([x[0], x[1] - h], t)
            + v(x, t + h)
            + v(x, t - h)
            - 6.0 * v(x, t))
            / (h * h);
        assert!((lap - 1.69 * v(x, t)).abs() < 1e-5, "{lap}");
        assert!(CylinderExtension::new(u, -1.0).is_err());
        let _ = g;
    }

    #[test]
    fn single_mode_integrals() {
        let (_, u) = lambda_three_mode();
        let ci = cylinder_integrals(&CylinderExtension::new(u.clone(), 1.0).unwrap());
        assert_relative_eq!(ci.e_x, 0.75, max_relative = 1e-15);
        assert_relative_eq!(ci.e_t, 1.0, max_relative = 1e-15);
        assert_relative_eq!(ci.e_0, 0.25, max_relative = 1e-15);
        assert_eq!(ci.t_0, 1.0);
        assert_relative_eq!(ci.e_x + ci.e_t + ci.e_0, 2.0, max_relative = 1e-15);
        let z = cylinder_integrals(&CylinderExtension::new(u.scaled(0.0), 1.0).unwrap());
        assert_eq!((z.e_x, z.e_t, z.e_0, z.t_0), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn energy_identity_matches_quadratic_form() {
        let (s, _) = setup(vec![1.0, 1.5, 0.8], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [0.0, 0.5, 4.0] {
            let u = random_field(&s, &mut rng);
            let ci = cylinder_integrals(&CylinderExtension::new(u.clone(), m).unwrap());
            let q = crate::field::quadratic_form(&u, |l| (l + m * m).sqrt());
            assert_relative_eq!(ci.e_x + ci.e_t + m * m * ci.e_0, q, max_relative = 1e-13);
        }
    }

    #[test]
    fn cylinder_integrals_match_quadrature() {
        // oracle: Gauss-Legendre in t on [0, 30] with the mapped x-grid
        let (s, g) = setup(vec![PI, 1.2], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_field(&s, &mut rng);
        let m = 0.7;
        let ext = CylinderExtension::new(u.clone(), m).unwrap();
        let ci = cylinder_integrals(&ext);
        let (tn, tw) = crate::special::gauss_legendre(120);
        let (mut e0, mut et, mut ex) = (0.0, 0.0, 0.0);
        for (ti, wi) in tn.iter().zip(&tw) {
            let t = 15.0 * (ti + 1.0);
            let w = 15.0 * wi;
            let slice = ext.slice(t);
            let vals = g.synthesize_coefficients(slice.coefficients());
            e0 += w * g.integrate(&vals.iter().map(|v| v * v).collect::<Vec<_>>());
            let dt: Vec<f64> = slice
                .coefficients()
                .iter()
                .zip(ext.decay_rates())
                .map(|(c, mu)| -mu * c)
                .collect();
            let dvals = g.synthesize_coefficients(&dt);
            et += w * g.integrate(&dvals.iter().map(|v| v * v).collect::<Vec<_>>());
            for axis in 0..2 {
                let d = g.synthesize_derivative(slice.coefficients(), axis);
                ex += w * g.integrate(&d.iter().map(|v| v * v).collect::<Vec<_>>());
            }
        }
        assert_relative_eq!(ci.e_0, e0, max_relative = 1e-9);
        assert_relative_eq!(ci.e_t, et, max_relative = 1e-9);
        assert_relative_eq!(ci.e_x, ex, max_relative = 1e-9);
    }

    #[test]
    fn lateral_term_on_an_interval() {
        let (s, g) = setup(vec![PI], 5);
        let m = 0.8;
        for k in 1..=5usize {
            let u = SpectralField::unit(s.clone(), k - 1);
            let ext = CylinderExtension::new(u, m).unwrap();
            let mu = ((k * k) as f64 + m * m).sqrt();
            let expected = (PI / 2.0) * (2.0 / PI) * (k * k) as f64 * 2.0 / (2.0 * mu);
            assert_relative_eq!(lateral_boundary_term(&ext, &g).unwrap(), expected, max_relative = 1e-12);
        }
        let zero = CylinderExtension::new(SpectralField::zeros(s), m).unwrap();
        assert_eq!(lateral_boundary_term(&zero, &g).unwrap(), 0.0);
    }

    /// Face-by-face Gauss-Legendre quadrature of the lateral term with the
    /// analytic t-integral, as an independent oracle.
    fn lateral_by_face_quadrature(ext: &CylinderExtension, origin: &[f64]) -> f64 {
        let s = ext.field().spectrum();
        let sides = s.domain().side_lengths().to_vec();
        let n = sides.len();
        let (xq, wq) = crate::special::gauss_legendre(24);
        let c = ext.field().coefficients();
        let mu = ext.decay_rates();
        let mut total = 0.0;
        for face in s.domain().faces() {
            // tensor quadrature over the other axes
            let others: Vec<usize> = (0..n).filter(|&i| i != face.axis).collect();
            let count = xq.len().pow(others.len() as u32);
            for flat in 0..count {
                let mut x = vec![0.0; n];
                x[face.axis] = face.coordinate;
                let mut w = 1.0;
                let mut rest = flat;
                for &i in &others {
                    let a = rest % xq.len();
                    rest /= xq.len();
                    x[i] = 0.5 * sides[i] * (xq[a] + 1.0);
                    w *= 0.5 * sides[i] * wq[a];
                }
                let weight = face.outward_sign * (x[face.axis] - origin[face.axis]);
                // d_nu phi_k at x
                let dn: Vec<f64> = (0..s.len())
                    .map(|k| {
                        let mode = s.mode(k);
                        let mut v = s.normalization() * face.outward_sign;
                        for i in 0..n {
                            let f = mode[i] as f64 * PI / sides[i];
                            v *= if i == face.axis { f * (f * x[i]).cos() } else { (f * x[i]).sin() };
                        }
                        v
                    })
                    .collect();
                for k in 0..s.len() {
                    for l in 0..s.len() {
                        total += w * weight * c[k] * c[l] * dn[k] * dn[l] / (mu[k] + mu[l]);
                    }
                }
            }
        }
        total
    }

    #[test]
    fn lateral_term_matches_face_quadrature() {
        let (s, g) = setup(vec![PI, 1.3, 2.0], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_field(&s, &mut rng);
        let ext = CylinderExtension::new(u, 1.1).unwrap();
        let center = s.domain().center();
        let oracle = lateral_by_face_quadrature(&ext, &center);
        assert_relative_eq!(lateral_boundary_term(&ext, &g).unwrap(), oracle, max_relative = 1e-11);
        let corner = [0.2, 0.1, 1.9];
        let oracle = lateral_by_face_quadrature(&ext, &corner);
        assert_relative_eq!(
            lateral_boundary_term_about(&ext, &g, &corner).unwrap(),
            oracle,
            max_relative = 1e-11
        );
        assert!(lateral_boundary_term(&ext, &g).unwrap() > 0.0);
    }

    #[test]
    fn lateral_term_is_a_quadratic_form() {
        let (s, g) = setup(vec![1.0, 2.0], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 0.4;
        let u = random_field(&s, &mut rng);
        let v = random_field(&s, &mut rng);
        let term = |f: &SpectralField| {
            lateral_boundary_term(&CylinderExtension::new(f.clone(), m).unwrap(), &g).unwrap()
        };
        let sum = u.combine(1.0, &v, 1.0);
        let diff = u.combine(1.0, &v, -1.0);
        // polarization: the cross term from (u+v) and (u-v)
        let cross = 0.25 * (term(&sum) - term(&diff));
        let lhs = term(&sum) - term(&u) - term(&v);
        assert!((lhs - 2.0 * cross).abs() < 1e-10 * term(&sum).abs().max(1.0));
    }

    #[test]
    fn identity_residuals_of_non_solutions() {
        let (s, g) = setup(vec![PI; 3], 4);
        let u = SpectralField::unit(s.clone(), 0);
        let zero = SpectralField::zeros(s.clone());
        assert_eq!(nehari_identity_residual(&zero, 1.0, 2.0, &g).unwrap(), 0.0);
        assert_eq!(pohozaev_residual(&zero, 1.0, 1.5, &g).unwrap(), 0.0);
        assert!(nehari_identity_residual(&u, 1.0, 2.0, &g).unwrap() > 1e-2);
        assert!(pohozaev_residual(&u, 1.0, 1.5, &g).unwrap() > 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let r = random_field(&s, &mut rng).scaled(10.0);
            assert!(pohozaev_residual(&r, 1.0, 1.5, &g).unwrap() > 1e-2);
        }
    }

    #[test]
    fn nehari_residual_assembly() {
        let (s, g) = setup(vec![PI; 2], 3);
        let u = SpectralField::unit(s.clone(), 0).scaled(0.9);
        let m = 1.0;
        let ci = cylinder_integrals(&CylinderExtension::new(u.clone(), m).unwrap());
        let b = integral_abs_power(&u, 3.0, &g).unwrap();
        let expected = (m * ci.t_0 + b - m * m * ci.e_0 - ci.e_x - ci.e_t).abs()
            / [m * ci.t_0, b, m * m * ci.e_0, ci.e_x + ci.e_t]
                .iter()
                .fold(0.0f64, |a, t| a.max(t.abs()));
        assert_relative_eq!(nehari_identity_residual(&u, m, 2.0, &g).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn trace_examples() {
        let (_, u) = lambda_three_mode();
        let r = trace_coercivity_check(&u, 1.0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_relative_eq!(r.rhs, 1.25, max_relative = 1e-15);
        assert!(r.holds());
        let r0 = trace_coercivity_check(&u, 0.0).unwrap();
        assert_eq!(r0.lhs, 0.0);
        assert!(r0.rhs > 0.0 && r0.holds());
        assert_eq!(trace_coercivity_check(&u.scaled(0.0), 1.0), Err(Error::ZeroField));
    }

    #[test]
    fn coercivity_on_random_fields() {
        let (s, _) = setup(vec![PI, 2.0], 7);
        assert!(s.len() >= 49);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for m in [0.1, 1.0, 10.0] {
            let floor = coercivity_floor(&SpectralField::zeros(s.clone()), m);
            assert!(floor > 0.0);
            let mut worst = f64::INFINITY;
            for _ in 0..50 {
                let u = random_field(&s, &mut rng);
                let r = trace_coercivity_check(&u, m).unwrap();
                worst = worst.min(r.ratio);
            }
            assert!(worst >= floor * (1.0 - 1e-12), "m {m}: {worst} < {floor}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn trace_inequality_holds(seed in any::<u64>(), m_index in 0usize..20) {
            let m = 0.05 * 1.6f64.powi(m_index as i32);
            let (s, _) = setup(vec![1.0, 2.0], 4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&s, &mut rng);
            let r = trace_coercivity_check(&u, m).unwrap();
            prop_assert!(r.holds(), "{:?}", r);
            prop_assert!(r.ratio > 0.0);
        }
    }
}
