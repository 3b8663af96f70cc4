use std::f64::consts::PI;

use super::Domain;
use crate::error::{invalid, Error, Result};

/// Default cap on the number of retained modes.
pub const DEFAULT_MODE_BUDGET: usize = 1 << 16;

/// Dirichlet eigenpairs of the Laplacian on a box, truncated to
/// multi-indices `k in {1..N}^n` in lexicographic order (first axis slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    domain: Domain,
    order: usize,
    indices: Vec<usize>,
    eigenvalues: Vec<f64>,
    normalization: f64,
}

impl Spectrum {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Truncation order N per axis.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Multi-index of mode `i` (entries are 1-based wave numbers).
    pub fn mode(&self, i: usize) -> &[usize] {
        let n = self.dimension();
        &self.indices[i * n..(i + 1) * n]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.eigenvalues[i]
    }

    /// Eigenvalue computed from a multi-index.
    pub fn eigenvalue_of(&self, k: &[usize]) -> f64 {
        k.iter()
            .zip(self.domain.side_lengths())
            .map(|(&kj, &l)| (kj as f64 * PI / l).powi(2))
            .sum()
    }

    /// Smallest Dirichlet eigenvalue of the box.
    pub fn lambda_1(&self) -> f64 {
        self.domain
            .side_lengths()
            .iter()
            .map(|l| (PI / l).powi(2))
            .sum()
    }

    /// L2 normalization of every mode: prod_j sqrt(2 / L_j).
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Position of a multi-index in the mode list.
    pub fn index_of(&self, k: &[usize]) -> Option<usize> {
        if k.len() != self.dimension() || k.iter().any(|&kj| kj == 0 || kj > self.order) {
            return None;
        }
        Some(k.iter().fold(0, |acc, &kj| acc * self.order + (kj - 1)))
    }

    /// Pointwise value of eigenfunction `i` at `x`.
    pub fn eigenfunction(&self, i: usize, x: &[f64]) -> f64 {
        self.normalization
            * self
                .mode(i)
                .iter()
                .zip(self.domain.side_lengths())
                .zip(x)
                .map(|((&k, &l), &xj)| (k as f64 * PI * xj / l).sin())
                .product::<f64>()
    }

    /// True when both spectra describe the same truncated eigensystem.
    pub fn same_as(&self, other: &Spectrum) -> bool {
        std::ptr::eq(self, other) || (self.order == other.order && self.domain == other.domain)
    }
}

/// Enumerates all `N^n` modes of the box.
pub fn enumerate_modes(domain: &Domain, order: usize) -> Result<Spectrum> {
    enumerate_modes_with_budget(domain, order, DEFAULT_MODE_BUDGET)
}

pub fn enumerate_modes_with_budget(domain: &Domain, order: usize, budget: usize) -> Result<Spectrum> {
    if order == 0 {
        return Err(invalid("truncation", "must be at least 1"));
    }
    let n = domain.dimension();
    let requested = order
        .checked_pow(n as u32)
        .filter(|&r| r <= budget)
        .ok_or(Error::Capacity {
            requested: order.saturating_pow(n as u32),
            budget,
        })?;
    let mut indices = Vec::with_capacity(requested * n);
    let mut eigenvalues = Vec::with_capacity(requested);
    let axis_values: Vec<Vec<f64>> = domain
        .side_lengths()
        .iter()
        .map(|&l| (1..=order).map(|k| (k as f64 * PI / l).powi(2)).collect())
        .collect();
    let mut k = vec![1usize; n];
    for _ in 0..requested {
        indices.extend_from_slice(&k);
        eigenvalues.push(k.iter().enumerate().map(|(j, &kj)| axis_values[j][kj - 1]).sum());
        // odometer increment, last axis fastest
        for j in (0..n).rev() {
            if k[j] < order {
                k[j] += 1;
                break;
            }
            k[j] = 1;
        }
    }
    let normalization = domain
        .side_lengths()
        .iter()
        .map(|l| (2.0 / l).sqrt())
        .product();
    Ok(Spectrum {
        domain: domain.clone(),
        order,
        indices,
        eigenvalues,
        normalization,
    })
}
