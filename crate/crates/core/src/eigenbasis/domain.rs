use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported box dimension.
pub const MAX_DIMENSION: usize = 4;

/// One axis-aligned boundary hyperplane `x[axis] = coordinate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    /// Sign of the outward normal along `axis` (-1 for the lower face, +1 for the upper).
    pub outward_sign: f64,
    pub coordinate: f64,
}

impl Face {
    pub fn normal(&self, dimension: usize) -> Vec<f64> {
        let mut nu = vec![0.0; dimension];
        nu[self.axis] = self.outward_sign;
        nu
    }
}

/// The open box `(0, L_1) x ... x (0, L_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    side_lengths: Vec<f64>,
    faces: Vec<Face>,
}

impl Domain {
    pub fn new(side_lengths: Vec<f64>) -> Result<Self> {
        let n = side_lengths.len();
        if n == 0 || n > MAX_DIMENSION {
            return Err(invalid(
                "dimension",
                format!("must be in 1..={MAX_DIMENSION}, got {n}"),
            ));
        }
        if let Some(bad) = side_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(invalid(
                "side_lengths",
                format!("must be positive and finite, got {bad}"),
            ));
        }
        let faces = (0..n)
            .flat_map(|axis| {
                [
                    Face {
                        axis,
                        outward_sign: -1.0,
                        coordinate: 0.0,
                    },
                    Face {
                        axis,
                        outward_sign: 1.0,
                        coordinate: side_lengths[axis],
                    },
                ]
            })
            .collect();
        Ok(Self {
            side_lengths,
            faces,
        })
    }

    /// The cube `(0, side)^n`.
    pub fn cube(dimension: usize, side: f64) -> Result<Self> {
        Self::new(vec![side; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.side_lengths.len()
    }

    pub fn side_lengths(&self) -> &[f64] {
        &self.side_lengths
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn center(&self) -> Vec<f64> {
        self.side_lengths.iter().map(|l| 0.5 * l).collect()
    }

    pub fn volume(&self) -> f64 {
        self.side_lengths.iter().product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(&self.side_lengths)
                .all(|(xi, l)| *xi > 0.0 && xi < l)
    }

    /// Distance from `x` to the boundary (for interior points).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.side_lengths)
            .map(|(xi, l)| xi.min(l - xi))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faces_are_the_axis_hyperplanes() {
        let d = Domain::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.faces().len(), 6);
        for (i, f) in d.faces().iter().enumerate() {
            assert_eq!(f.axis, i / 2);
            let nu = f.normal(3);
            assert_eq!(nu.iter().map(|v| v * v).sum::<f64>(), 1.0);
            let expected = if i % 2 == 0 { 0.0 } else { d.side_lengths()[f.axis] };
            assert_eq!(f.coordinate, expected);
        }
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(Domain::new(vec![]).is_err());
        assert!(Domain::new(vec![1.0; 5]).is_err());
        assert!(Domain::new(vec![1.0, 0.0]).is_err());
        assert!(Domain::new(vec![1.0, f64::NAN]).is_err());
    }
}
