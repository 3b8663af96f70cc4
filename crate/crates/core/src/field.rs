//! Spectral representation of functions on a box, with norms and the
//! collocation-evaluated power nonlinearity.

use std::sync::Arc;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::eigenbasis::{analyze, synthesize, Grid, Spectrum, AXIS_GRAM_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::spectral_calculus::relativistic_gap;

/// `u = sum_k c_k phi_k` over the modes of a spectrum.
#[derive(Debug, Clone)]
pub struct SpectralField {
    spectrum: Arc<Spectrum>,
    coeffs: Vec<f64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.spectrum.same_as(&other.spectrum) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn new(spectrum: Arc<Spectrum>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != spectrum.len() {
            return Err(invalid(
                "coefficients",
                format!("{} values for {} modes", coeffs.len(), spectrum.len()),
            ));
        }
        Ok(Self { spectrum, coeffs })
    }

    pub fn zeros(spectrum: Arc<Spectrum>) -> Self {
        let coeffs = vec![0.0; spectrum.len()];
        Self { spectrum, coeffs }
    }

    /// The `i`-th eigenfunction.
    pub fn unit(spectrum: Arc<Spectrum>, i: usize) -> Self {
        let mut u = Self::zeros(spectrum);
        u.coeffs[i] = 1.0;
        u
    }

    /// Coefficients from a function of the mode index and its eigenvalue.
    pub fn from_fn<F: FnMut(usize, f64) -> f64>(spectrum: Arc<Spectrum>, mut f: F) -> Self {
        let coeffs = spectrum
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(i, &l)| f(i, l))
            .collect();
        Self { spectrum, coeffs }
    }

    pub fn spectrum(&self) -> &Arc<Spectrum> {
        &self.spectrum
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm_l2(&self) -> f64 {
        norm_l2(self)
    }

    pub fn norm_max_coefficient(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// L2 inner product. Panics if the fields live on different spectra.
    pub fn dot(&self, other: &Self) -> f64 {
        self.assert_compatible(other);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            spectrum: self.spectrum.clone(),
            coeffs: self.coeffs.iter().map(|c| t * c).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.assert_compatible(other);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        self.assert_compatible(other);
        Self {
            spectrum: self.spectrum.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.combine(1.0, other, -1.0).norm_l2()
    }

    fn assert_compatible(&self, other: &Self) {
        assert!(
            self.spectrum.same_as(&other.spectrum),
            "fields live on different spectra"
        );
    }
}

impl Serialize for SpectralField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("SpectralField", 3)?;
        s.serialize_field("side_lengths", self.spectrum.domain().side_lengths())?;
        s.serialize_field("order", &self.spectrum.order())?;
        s.serialize_field("coefficients", &self.coeffs)?;
        s.end()
    }
}

pub(crate) fn check_grid(spectrum: &Spectrum, grid: &Grid) -> Result<()> {
    if !spectrum.same_as(grid.spectrum()) {
        return Err(Error::SpectrumMismatch);
    }
    if grid.gram_deviation() > AXIS_GRAM_TOLERANCE {
        return Err(Error::Resolution(format!(
            "Gram deviation {:e}",
            grid.gram_deviation()
        )));
    }
    Ok(())
}

/// `(sum c_k^2)^{1/2}`.
pub fn norm_l2(u: &SpectralField) -> f64 {
    u.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Quadrature value of `int |u|^q`.
pub fn integral_abs_power(u: &SpectralField, q: f64, grid: &Grid) -> Result<f64> {
    check_grid(u.spectrum(), grid)?;
    let vals = synthesize(u, grid)?;
    Ok(integral_abs_power_of_values(&vals, q, grid))
}

pub(crate) fn integral_abs_power_of_values(vals: &[f64], q: f64, grid: &Grid) -> f64 {
    vals.iter()
        .zip(grid.weights())
        .map(|(v, w)| w * v.abs().powf(q))
        .sum()
}

/// Quadrature value of `(int |u|^q)^{1/q}`.
pub fn norm_lq(u: &SpectralField, q: f64, grid: &Grid) -> Result<f64> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(invalid("q", format!("must be a finite value >= 1, got {q}")));
    }
    Ok(integral_abs_power(u, q, grid)?.powf(1.0 / q))
}

/// `sum_k c_k^2 F(lambda_k)`.
pub fn quadratic_form<F: Fn(f64) -> f64>(u: &SpectralField, symbol: F) -> f64 {
    u.coeffs
        .iter()
        .zip(u.spectrum.eigenvalues())
        .map(|(c, &l)| c * c * symbol(l))
        .sum()
}

/// Pointwise `|v|^{p-1} v`, with the continuous value 0 at v = 0.
pub fn power_nonlinearity(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.abs().powf(p - 1.0) * v
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("must exceed 1, got {p}")));
    }
    Ok(())
}

fn check_mass(m: f64) -> Result<()> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(invalid("m", format!("must be finite and >= 0, got {m}")));
    }
    Ok(())
}

/// Projection of `|u|^{p-1} u` onto the retained modes.
pub fn nonlinear_power(u: &SpectralField, p: f64, grid: &Grid) -> Result<SpectralField> {
    check_exponent(p)?;
    check_grid(u.spectrum(), grid)?;
    let vals: Vec<f64> = synthesize(u, grid)?
        .into_iter()
        .map(|v| power_nonlinearity(v, p))
        .collect();
    analyze(&vals, u.spectrum(), grid)
}

/// The two aggregates determining `I_m` along rays: the quadratic part
/// `A = sum c_k^2 (sqrt(lambda_k + m^2) - m)` and `B = int |u|^{p+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyAggregates {
    pub quadratic: f64,
    pub nonlinear: f64,
}

impl EnergyAggregates {
    /// `I_m(t u) = t^2 A / 2 - t^{p+1} B / (p + 1)`.
    pub fn energy_along_ray(&self, t: f64, p: f64) -> f64 {
        0.5 * t * t * self.quadratic - t.abs().powf(p + 1.0) * self.nonlinear / (p + 1.0)
    }
}

pub fn energy_aggregates(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<EnergyAggregates> {
    check_mass(m)?;
    check_exponent(p)?;
    Ok(EnergyAggregates {
        quadratic: quadratic_form(u, |l| relativistic_gap(l, m)),
        nonlinear: integral_abs_power(u, p + 1.0, grid)?,
    })
}

/// `I_m(u) = 1/2 sum c_k^2 sqrt(lambda_k + m^2) - m/2 |u|_2^2 - 1/(p+1) |u|_{p+1}^{p+1}`.
pub fn energy_im(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<f64> {
    Ok(energy_aggregates(u, m, p, grid)?.energy_along_ray(1.0, p))
}

/// Riesz representative of the derivative of `I_m`:
/// `(sqrt(lambda_k + m^2) - m) c_k - [|u|^{p-1} u]_k`.
pub fn gradient_im(u: &SpectralField, m: f64, p: f64, grid: &Grid) -> Result<SpectralField> {
    check_mass(m)?;
    let f = nonlinear_power(u, p, grid)?;
    let coeffs = u
        .coeffs
        .iter()
        .zip(u.spectrum.eigenvalues())
        .zip(f.coefficients())
        .map(|((c, &l), fk)| relativistic_gap(l, m) * c - fk)
        .collect();
    SpectralField::new(u.spectrum.clone(), coeffs)
}

/// Change of `int |u|^{p+1}` and of the projected nonlinearity when the
/// number of nodes per axis is doubled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OversamplingDrift {
    pub points_per_axis: usize,
    pub refined_points_per_axis: usize,
    pub integral_relative_change: f64,
    pub projection_relative_change: f64,
}

pub fn oversampling_drift(u: &SpectralField, p: f64, grid: &Grid) -> Result<OversamplingDrift> {
    let points = grid.points_per_axis()[0];
    let refined_points = 2 * points + 1;
    let refined = Grid::with_points(grid.spectrum().clone(), grid.family(), refined_points)?;
    let b0 = integral_abs_power(u, p + 1.0, grid)?;
    let b1 = integral_abs_power(u, p + 1.0, &refined)?;
    let f0 = nonlinear_power(u, p, grid)?;
    let f1 = nonlinear_power(u, p, &refined)?;
    Ok(OversamplingDrift {
        points_per_axis: points,
        refined_points_per_axis: refined_points,
        integral_relative_change: (b1 - b0).abs() / b1.abs().max(f64::MIN_POSITIVE),
        projection_relative_change: f0.distance(&f1) / f1.norm_l2().max(f64::MIN_POSITIVE),
    })
}
