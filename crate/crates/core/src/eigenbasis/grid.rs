use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::error::{Error, Result};
use crate::special::gauss_legendre;

/// Largest tolerated per-axis deviation of the discrete Gram matrix from the
/// identity. Tensor products of `n <= 4` axes then stay below 1e-12.
pub const AXIS_GRAM_TOLERANCE: f64 = 2e-13;

/// Node family of the collocation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeFamily {
    /// Cell midpoints `(a + 1/2) L / M` with equal weights; discrete sine
    /// orthogonality is exact for `M > N`.
    Midpoint,
    /// Gauss-Legendre nodes mapped to `(0, L)`.
    GaussLegendre,
}

#[derive(Debug, Clone)]
struct AxisTable {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `M x N`, row-major: normalized sine `phi_k(x_a)`.
    basis: Vec<f64>,
    /// `M x N`: derivative of the normalized sine.
    derivative: Vec<f64>,
    /// `N x M`: `phi_k(x_a) w_a`.
    analysis: Vec<f64>,
    gram_diagonal: Vec<f64>,
    gram_deviation: f64,
}

impl AxisTable {
    fn new(family: NodeFamily, length: f64, order: usize, points: usize) -> Self {
        let (nodes, weights) = match family {
            NodeFamily::Midpoint => {
                let h = length / points as f64;
                (
                    (0..points).map(|a| (a as f64 + 0.5) * h).collect::<Vec<_>>(),
                    vec![h; points],
                )
            }
            NodeFamily::GaussLegendre => {
                let (x, w) = gauss_legendre(points);
                (
                    x.iter().map(|xi| 0.5 * length * (xi + 1.0)).collect(),
                    w.iter().map(|wi| 0.5 * length * wi).collect(),
                )
            }
        };
        let scale = (2.0 / length).sqrt();
        let mut basis = vec![0.0; points * order];
        let mut derivative = vec![0.0; points * order];
        let mut analysis = vec![0.0; order * points];
        for (a, &x) in nodes.iter().enumerate() {
            for k in 0..order {
                let freq = (k + 1) as f64 * PI / length;
                let phi = scale * (freq * x).sin();
                basis[a * order + k] = phi;
                derivative[a * order + k] = scale * freq * (freq * x).cos();
                analysis[k * points + a] = phi * weights[a];
            }
        }
        let mut gram_diagonal = vec![0.0; order];
        let mut gram_deviation: f64 = 0.0;
        for k in 0..order {
            for l in 0..order {
                let g: f64 = (0..points)
                    .map(|a| analysis[k * points + a] * basis[a * order + l])
                    .sum();
                if k == l {
                    gram_diagonal[k] = g;
                }
                let target = if k == l { 1.0 } else { 0.0 };
                gram_deviation = gram_deviation.max((g - target).abs());
            }
        }
        Self {
            nodes,
            weights,
            basis,
            derivative,
            analysis,
            gram_diagonal,
            gram_deviation,
        }
    }
}

/// Tensor-product collocation grid tied to a spectrum. Grid values are stored
/// row-major with the first axis slowest, matching the mode ordering.
#[derive(Debug, Clone)]
pub struct Grid {
    spectrum: Arc<Spectrum>,
    family: NodeFamily,
    axes: Vec<AxisTable>,
    weights: Vec<f64>,
}

impl Grid {
    /// Midpoint grid with the default oversampling `M = 2N + 1`.
    pub fn new(spectrum: Arc<Spectrum>) -> Self {
        let points = 2 * spectrum.order() + 1;
        Self::with_points(spectrum, NodeFamily::Midpoint, points)
            .expect("midpoint grid with M = 2N + 1 is always resolved")
    }

    /// Gauss-Legendre grid with the smallest `M >= 2N + 1` meeting the Gram tolerance.
    pub fn gauss_legendre(spectrum: Arc<Spectrum>) -> Result<Self> {
        let start = 2 * spectrum.order() + 1;
        let mut last = None;
        for points in start..start + 8 * spectrum.order() + 32 {
            match Self::with_points(spectrum.clone(), NodeFamily::GaussLegendre, points) {
                Ok(grid) => return Ok(grid),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Resolution("no admissible node count".into())))
    }

    pub fn with_points(spectrum: Arc<Spectrum>, family: NodeFamily, points: usize) -> Result<Self> {
        let order = spectrum.order();
        if points < 2 * order + 1 {
            return Err(Error::Resolution(format!(
                "{points} points per axis, need at least 2N + 1 = {}",
                2 * order + 1
            )));
        }
        let axes: Vec<AxisTable> = spectrum
            .domain()
            .side_lengths()
            .iter()
            .map(|&l| AxisTable::new(family, l, order, points))
            .collect();
        if let Some(worst) = axes.iter().map(|a| a.gram_deviation).reduce(f64::max) {
            if worst > AXIS_GRAM_TOLERANCE {
                return Err(Error::Resolution(format!(
                    "per-axis Gram deviation {worst:e} exceeds {AXIS_GRAM_TOLERANCE:e} with {points} {family:?} points"
                )));
            }
        }
        let mut weights = vec![1.0];
        for axis in &axes {
            weights = weights
                .iter()
                .flat_map(|w| axis.weights.iter().map(move |v| w * v))
                .collect();
        }
        Ok(Self {
            spectrum,
            family,
            axes,
            weights,
        })
    }

    pub fn spectrum(&self) -> &Arc<Spectrum> {
        &self.spectrum
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn points_per_axis(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.nodes.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn axis_nodes(&self, axis: usize) -> &[f64] {
        &self.axes[axis].nodes
    }

    pub fn axis_weights(&self, axis: usize) -> &[f64] {
        &self.axes[axis].weights
    }

    /// Quadrature value of `phi_k phi_k` along one axis.
    pub fn axis_gram_diagonal(&self, axis: usize) -> &[f64] {
        &self.axes[axis].gram_diagonal
    }

    /// Worst per-axis deviation of the discrete Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        self.axes.iter().map(|a| a.gram_deviation).fold(0.0, f64::max)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinates of the grid point with flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.axes.len()];
        let mut rest = flat;
        for (j, axis) in self.axes.iter().enumerate().rev() {
            let m = axis.nodes.len();
            x[j] = axis.nodes[rest % m];
            rest /= m;
        }
        x
    }

    /// Evaluates `f` at every grid point.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// `sum_k c_k phi_k` at every grid node.
    pub fn synthesize_coefficients(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.spectrum.len(), "coefficient count");
        let order = self.spectrum.order();
        let mut shape = vec![order; self.axes.len()];
        let mut data = coeffs.to_vec();
        for (j, axis) in self.axes.iter().enumerate() {
            let rows = axis.nodes.len();
            data = contract_axis(&data, &shape, j, &axis.basis, rows);
            shape[j] = rows;
        }
        data
    }

    /// Partial derivative along `direction` of `sum_k c_k phi_k` at every node.
    pub fn synthesize_derivative(&self, coeffs: &[f64], direction: usize) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.spectrum.len(), "coefficient count");
        let order = self.spectrum.order();
        let mut shape = vec![order; self.axes.len()];
        let mut data = coeffs.to_vec();
        for (j, axis) in self.axes.iter().enumerate() {
            let rows = axis.nodes.len();
            let table = if j == direction { &axis.derivative } else { &axis.basis };
            data = contract_axis(&data, &shape, j, table, rows);
            shape[j] = rows;
        }
        data
    }

    /// Quadrature projection `c_k = sum_a w_a f(x_a) phi_k(x_a)`.
    pub fn analyze_values(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.len(), "grid value count");
        let order = self.spectrum.order();
        let mut shape = self.points_per_axis();
        let mut data = values.to_vec();
        for (j, axis) in self.axes.iter().enumerate() {
            data = contract_axis(&data, &shape, j, &axis.analysis, order);
            shape[j] = order;
        }
        data
    }
}

/// Applies the `rows x shape[axis]` matrix `mat` along one tensor axis.
fn contract_axis(input: &[f64], shape: &[usize], axis: usize, mat: &[f64], rows: usize) -> Vec<f64> {
    let cols = shape[axis];
    debug_assert_eq!(mat.len(), rows * cols);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        let src = &input[o * cols * inner..(o + 1) * cols * inner];
        let dst = &mut out[o * rows * inner..(o + 1) * rows * inner];
        for r in 0..rows {
            let row = &mut dst[r * inner..(r + 1) * inner];
            for c in 0..cols {
                let t = mat[r * cols + c];
                if t == 0.0 {
                    continue;
                }
                let line = &src[c * inner..(c + 1) * inner];
                for (y, x) in row.iter_mut().zip(line) {
                    *y += t * x;
                }
            }
        }
    }
    out
}
