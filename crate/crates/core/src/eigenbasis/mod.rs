//! Dirichlet eigensystem of the Laplacian on boxes and the transforms between
//! coefficient space and collocation-grid values.

mod domain;
mod grid;
mod spectrum;

pub use domain::{Domain, Face, MAX_DIMENSION};
pub use grid::{Grid, NodeFamily, AXIS_GRAM_TOLERANCE};
pub use spectrum::{enumerate_modes, enumerate_modes_with_budget, Spectrum, DEFAULT_MODE_BUDGET};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::SpectralField;

/// Values of `u = sum_k c_k phi_k` at every node of `grid`.
pub fn synthesize(field: &SpectralField, grid: &Grid) -> Result<Vec<f64>> {
    if !field.spectrum().same_as(grid.spectrum()) {
        return Err(Error::SpectrumMismatch);
    }
    Ok(grid.synthesize_coefficients(field.coefficients()))
}

/// Quadrature projection of grid values onto the retained modes.
pub fn analyze(values: &[f64], spectrum: &Arc<Spectrum>, grid: &Grid) -> Result<SpectralField> {
    if !spectrum.same_as(grid.spectrum()) {
        return Err(Error::SpectrumMismatch);
    }
    if grid.gram_deviation() > AXIS_GRAM_TOLERANCE {
        return Err(Error::Resolution(format!(
            "Gram deviation {:e}",
            grid.gram_deviation()
        )));
    }
    if values.len() != grid.len() {
        return Err(Error::Resolution(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    SpectralField::new(spectrum.clone(), grid.analyze_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn setup(sides: Vec<f64>, order: usize) -> (Arc<Spectrum>, Grid) {
        let s = Arc::new(enumerate_modes(&Domain::new(sides).unwrap(), order).unwrap());
        let g = Grid::new(s.clone());
        (s, g)
    }

    #[test]
    fn single_mode_values() {
        let (s, _) = setup(vec![PI], 4);
        assert_relative_eq!(s.eigenfunction(0, &[PI / 2.0]), (2.0 / PI).sqrt(), max_relative = 1e-15);
        assert!(s.eigenfunction(1, &[PI / 2.0]).abs() < 1e-15);
        // an odd grid has its middle node at pi/2
        let (s, g) = setup(vec![PI], 3);
        let mid = g.len() / 2;
        assert_relative_eq!(g.axis_nodes(0)[mid], PI / 2.0, max_relative = 1e-15);
        let v = synthesize(&SpectralField::unit(s.clone(), 0), &g).unwrap();
        assert_relative_eq!(v[mid], (2.0 / PI).sqrt(), max_relative = 1e-14);
        let v = synthesize(&SpectralField::unit(s.clone(), 1), &g).unwrap();
        assert!(v[mid].abs() < 1e-15);
        let v = synthesize(&SpectralField::zeros(s), &g).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn analyze_known_functions() {
        let (s, g) = setup(vec![PI], 5);
        let vals = g.sample(|x| (2.0 / PI).sqrt() * (3.0 * x[0]).sin());
        let c = analyze(&vals, &s, &g).unwrap();
        for (i, ci) in c.coefficients().iter().enumerate() {
            let expected = if i == 2 { 1.0 } else { 0.0 };
            assert!((ci - expected).abs() < 1e-14, "mode {i}: {ci}");
        }
        let zero = analyze(&vec![0.0; g.len()], &s, &g).unwrap();
        assert_eq!(zero.norm_l2(), 0.0);
        // int_0^pi sin(kx)(sin x + sin 2x) sqrt(2/pi) dx = sqrt(pi/2) for k = 1, 2
        let vals = g.sample(|x| x[0].sin() + (2.0 * x[0]).sin());
        let c = analyze(&vals, &s, &g).unwrap();
        let target = (PI / 2.0).sqrt();
        assert_relative_eq!(c.coefficients()[0], target, max_relative = 1e-14);
        assert_relative_eq!(c.coefficients()[1], target, max_relative = 1e-14);
        assert!(c.coefficients()[2..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn full_gram_matrix_is_identity() {
        for sides in [vec![1.3, 0.7], vec![PI, 2.0, 0.5]] {
            let (s, g) = setup(sides, 4);
            let cols: Vec<Vec<f64>> = (0..s.len())
                .map(|i| synthesize(&SpectralField::unit(s.clone(), i), &g).unwrap())
                .collect();
            for i in 0..s.len() {
                for j in 0..s.len() {
                    let prod: Vec<f64> = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).collect();
                    let gij = g.integrate(&prod);
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((gij - target).abs() < 1e-12, "({i},{j}) = {gij}");
                }
            }
        }
    }

    #[test]
    fn under_resolved_grids_are_refused() {
        let s = Arc::new(enumerate_modes(&Domain::cube(2, 1.0).unwrap(), 6).unwrap());
        assert!(matches!(
            Grid::with_points(s.clone(), NodeFamily::Midpoint, 12),
            Err(Error::Resolution(_))
        ));
        // Gauss-Legendre with 2N + 1 nodes does not integrate the sine products accurately enough
        assert!(matches!(
            Grid::with_points(s.clone(), NodeFamily::GaussLegendre, 13),
            Err(Error::Resolution(_))
        ));
        let gl = Grid::gauss_legendre(s).unwrap();
        assert!(gl.gram_deviation() <= AXIS_GRAM_TOLERANCE);
    }

    #[test]
    fn mismatched_spectra_are_rejected() {
        let (s1, _) = setup(vec![PI, PI], 3);
        let (_, g2) = setup(vec![PI, 2.0], 3);
        let u = SpectralField::unit(s1.clone(), 0);
        assert_eq!(synthesize(&u, &g2), Err(Error::SpectrumMismatch));
        assert!(matches!(analyze(&vec![0.0; g2.len()], &s1, &g2), Err(Error::SpectrumMismatch)));
    }

    #[test]
    fn both_node_families_agree() {
        let s = Arc::new(enumerate_modes(&Domain::new(vec![1.0, 2.0]).unwrap(), 5).unwrap());
        let mid = Grid::new(s.clone());
        let gl = Grid::gauss_legendre(s.clone()).unwrap();
        let c: Vec<f64> = (0..s.len()).map(|i| 1.0 / (1.0 + i as f64)).collect();
        for g in [&mid, &gl] {
            let back = g.analyze_values(&g.synthesize_coefficients(&c));
            for (a, b) in back.iter().zip(&c) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn laplacian_symbol_matches_finite_differences() {
        let (s, _) = setup(vec![PI, 1.5], 4);
        let c: Vec<f64> = (0..s.len()).map(|i| ((i * 7 % 5) as f64 - 2.0) / (1.0 + i as f64)).collect();
        let eval = |coeffs: &[f64], x: &[f64]| -> f64 {
            coeffs.iter().enumerate().map(|(i, ci)| ci * s.eigenfunction(i, x)).sum()
        };
        let lap: Vec<f64> = c.iter().zip(s.eigenvalues()).map(|(ci, l)| ci * l).collect();
        let x = [1.1, 0.4];
        let exact = eval(&lap, &x);
        let fd_error = |h: f64| {
            let mut acc = 0.0;
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                acc -= (eval(&c, &xp) - 2.0 * eval(&c, &x) + eval(&c, &xm)) / (h * h);
            }
            (acc - exact).abs()
        };
        let (e1, e2, e3) = (fd_error(1e-2), fd_error(5e-3), fd_error(2.5e-3));
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "{e1} {e2}");
        assert!(e2 / e3 > 3.5 && e2 / e3 < 4.5, "{e2} {e3}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip_and_parseval(
            sides in prop::collection::vec(0.3f64..4.0, 1..=3),
            order in 1usize..6,
            seed in prop::collection::vec(-1.0f64..1.0, 216),
        ) {
            let (s, g) = setup(sides, order);
            let c: Vec<f64> = seed[..s.len()].to_vec();
            let vals = g.synthesize_coefficients(&c);
            let back = g.analyze_values(&vals);
            let err = back.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-12, "round trip error {}", err);
            let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
            let l2 = g.integrate(&sq);
            let direct: f64 = c.iter().map(|v| v * v).sum();
            prop_assert!((l2 - direct).abs() <= 1e-10 * direct.max(1e-300));
        }
    }
}
