use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use super::limit::{from_col, norm, to_col, LimitSolution};
use crate::eigenbasis::Grid;
use crate::error::{invalid, Error, Result};
use crate::field::{check_grid, power_nonlinearity, SpectralField};
use crate::spectral_calculus::{apply_multiplier, relativistic_gap};

/// `lambda - 2m (sqrt(lambda + m^2) - m)`, evaluated as `lambda^2 / (sqrt(lambda + m^2) + m)^2`.
pub fn dm_multiplier(lambda: f64, m: f64) -> f64 {
    let s = (lambda + m * m).sqrt() + m;
    (lambda / s) * (lambda / s)
}

/// `2m (sqrt(lambda + m^2) - m)`.
pub fn two_m_pm(lambda: f64, m: f64) -> f64 {
    2.0 * m * relativistic_gap(lambda, m)
}

/// `D_m u = (-Delta - 2m P_m) u`.
pub fn op_dm(u: &SpectralField, m: f64) -> Result<SpectralField> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(invalid("m", format!("must be positive, got {m}")));
    }
    apply_multiplier(|l| dm_multiplier(l, m), u)
}

/// `|u + w|^{p-1}(u + w) - |u|^{p-1} u - p |u|^{p-1} w` at one point.
pub fn q_pointwise(u: f64, w: f64, p: f64) -> f64 {
    if u == 0.0 {
        return power_nonlinearity(w, p);
    }
    let r = w / u;
    if r.abs() <= 1e-2 {
        // (1+r)^p - 1 - p r as a binomial series: no cancellation for small r
        let mut coeff = p * (p - 1.0) / 2.0;
        let mut power = r * r;
        let mut sum = 0.0;
        for k in 2..40 {
            let term = coeff * power;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            coeff *= (p - k as f64) / (k as f64 + 1.0);
            power *= r;
        }
        return power_nonlinearity(u, p) * sum;
    }
    power_nonlinearity(u + w, p) - power_nonlinearity(u, p) - p * u.abs().powf(p - 1.0) * w
}

/// Collocation `Q(w)` around `u_inf`, projected on the retained modes.
pub fn op_q(w: &SpectralField, u_inf: &SpectralField, p: f64, grid: &Grid) -> Result<SpectralField> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("must exceed 1, got {p}")));
    }
    check_grid(w.spectrum(), grid)?;
    check_grid(u_inf.spectrum(), grid)?;
    let wv = grid.synthesize_coefficients(w.coefficients());
    let uv = grid.synthesize_coefficients(u_inf.coefficients());
    let q: Vec<f64> = uv.iter().zip(&wv).map(|(u, w)| q_pointwise(*u, *w, p)).collect();
    SpectralField::new(w.spectrum().clone(), grid.analyze_values(&q))
}

/// Dense `A_m = I - (2m P_m)^{-1} K` with its LU factorization.
pub struct AmOperator {
    m: f64,
    matrix: Mat<f64>,
    lu: PartialPivLu<f64>,
}

impl std::fmt::Debug for AmOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AmOperator")
            .field("m", &self.m)
            .field("size", &self.matrix.nrows())
            .finish()
    }
}

/// Relative back-substitution residual accepted by [`AmOperator::solve`].
pub const BACK_SUBSTITUTION_TOLERANCE: f64 = 1e-10;

impl AmOperator {
    pub fn new(limit: &LimitSolution, m: f64) -> Result<Self> {
        Self::from_coupling(limit.coupling(), limit.solution.spectrum().eigenvalues(), m)
    }

    /// From a coupling matrix `K` and the eigenvalues of its modes.
    pub fn from_coupling(coupling: &Mat<f64>, eigenvalues: &[f64], m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid("m", format!("must be positive, got {m}")));
        }
        let n = coupling.nrows();
        let inv: Vec<f64> = eigenvalues.iter().map(|l| 1.0 / two_m_pm(*l, m)).collect();
        let matrix = Mat::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) - inv[i] * coupling[(i, j)]);
        let lu = matrix.partial_piv_lu();
        let op = Self { m, matrix, lu };
        // probe with a fixed vector: a singular factorization shows up as blow-up
        let probe: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        op.solve(&probe)?;
        Ok(op)
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        from_col(&(&self.matrix * to_col(x)))
    }

    /// `A_m^{-1} phi`, checked by back-substitution.
    pub fn solve(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let x = from_col(&self.lu.solve(to_col(phi)));
        let back = self.apply(&x);
        let err = norm(&back.iter().zip(phi).map(|(a, b)| a - b).collect::<Vec<_>>());
        let scale = norm(phi);
        if !(err <= BACK_SUBSTITUTION_TOLERANCE * scale) {
            return Err(Error::Singular(format!(
                "back-substitution residual {:e} at m = {}",
                err / scale.max(f64::MIN_POSITIVE),
                self.m
            )));
        }
        Ok(x)
    }

    /// `|A_m^{-1}|_2` by power iteration on `A^{-T} A^{-1}`.
    pub fn inverse_norm_estimate(&self, iterations: usize) -> f64 {
        let n = self.size();
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.754_877_666).fract()).collect();
        let s = norm(&x);
        x.iter_mut().for_each(|v| *v /= s);
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let y = self.lu.solve(to_col(&x));
            let z = from_col(&self.lu.solve_transpose(&y));
            estimate = norm(&from_col(&y));
            let zn = norm(&z);
            if zn == 0.0 {
                break;
            }
            x = z.iter().map(|v| v / zn).collect();
        }
        estimate
    }
}

/// `A_m^{-1} phi` for the linearization around `limit`.
pub fn apply_am_inverse(phi: &SpectralField, limit: &LimitSolution, m: f64) -> Result<SpectralField> {
    if !phi.spectrum().same_as(limit.solution.spectrum()) {
        return Err(Error::SpectrumMismatch);
    }
    let op = AmOperator::new(limit, m)?;
    SpectralField::new(phi.spectrum().clone(), op.solve(phi.coefficients())?)
}

/// Matrix-free `T x = (2m P_m)^{-1} P (V x)`.
fn apply_t(x: &[f64], potential: &[f64], inv: &[f64], grid: &Grid) -> Vec<f64> {
    let mut v = grid.synthesize_coefficients(x);
    v.iter_mut().zip(potential).for_each(|(a, q)| *a *= q);
    grid.analyze_values(&v).iter().zip(inv).map(|(a, s)| a * s).collect()
}

/// Solves `(I - T) x = phi` with GMRES, never forming a matrix.
pub fn solve_am_iterative(
    phi: &[f64],
    potential: &[f64],
    m: f64,
    grid: &Grid,
    tolerance: f64,
) -> Result<Vec<f64>> {
    let inv: Vec<f64> = grid.spectrum().eigenvalues().iter().map(|l| 1.0 / two_m_pm(*l, m)).collect();
    let out = crate::krylov::gmres(
        |x| {
            let t = apply_t(x, potential, &inv, grid);
            x.iter().zip(&t).map(|(a, b)| a - b).collect()
        },
        phi,
        tolerance,
        80,
        2000,
    );
    if !out.converged {
        return Err(Error::NotConverged {
            what: "GMRES",
            residual: out.relative_residual,
        });
    }
    Ok(out.solution)
}

/// Solves `(I - T) x = phi` by the Neumann series `sum_j T^j phi`; refused
/// unless a power-iteration estimate of the spectral radius of `T` is below 1.
pub fn solve_am_neumann(
    phi: &[f64],
    potential: &[f64],
    m: f64,
    grid: &Grid,
    tolerance: f64,
) -> Result<Vec<f64>> {
    let inv: Vec<f64> = grid.spectrum().eigenvalues().iter().map(|l| 1.0 / two_m_pm(*l, m)).collect();
    let n = phi.len();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618_034).fract()).collect();
    let mut radius = 0.0;
    for _ in 0..60 {
        let s = norm(&x);
        x.iter_mut().for_each(|v| *v /= s);
        x = apply_t(&x, potential, &inv, grid);
        radius = norm(&x);
    }
    if !(radius < 1.0) {
        return Err(Error::NeumannNotApplicable { norm: radius });
    }
    let mut sum = phi.to_vec();
    let mut term = phi.to_vec();
    let scale = norm(phi);
    for _ in 0..10_000 {
        term = apply_t(&term, potential, &inv, grid);
        sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
        if norm(&term) <= tolerance * scale {
            return Ok(sum);
        }
    }
    Err(Error::NotConverged {
        what: "Neumann series",
        residual: norm(&term) / scale,
    })
}
