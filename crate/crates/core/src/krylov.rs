//! Restarted GMRES for small matrix-free systems.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct KrylovOutcome {
    pub solution: Vec<f64>,
    pub converged: bool,
    /// `|b - A x| / |b|`, as tracked by the Arnoldi recurrence.
    pub relative_residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` from `x = 0` with GMRES(restart).
pub(crate) fn gmres<F>(mut apply: F, b: &[f64], tol: f64, restart: usize, max_iterations: usize) -> KrylovOutcome
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return KrylovOutcome {
            solution: x,
            converged: true,
            relative_residual: 0.0,
            iterations: 0,
        };
    }
    let restart = restart.max(1).min(n.max(1));
    let mut iterations = 0;
    let mut rel;
    while iterations < max_iterations {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= tol {
            return KrylovOutcome {
                solution: x,
                converged: true,
                relative_residual: rel,
                iterations,
            };
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Hessenberg columns after Givens rotation
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut gvec = vec![beta];
        for j in 0..restart {
            if iterations >= max_iterations {
                break;
            }
            iterations += 1;
            let mut w = apply(&basis[j]);
            let mut col = Vec::with_capacity(j + 2);
            for v in &basis {
                let hij = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hij * vi);
                col.push(hij);
            }
            let h_next = norm(&w);
            col.push(h_next);
            for (i, (c, s)) in cs.iter().enumerate() {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c * a + s * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (a, bb) = (col[j], col[j + 1]);
            let r_ = a.hypot(bb);
            let (c, s) = if r_ == 0.0 { (1.0, 0.0) } else { (a / r_, bb / r_) };
            col[j] = r_;
            col[j + 1] = 0.0;
            cs.push((c, s));
            let gj = gvec[j];
            gvec[j] = c * gj;
            gvec.push(-s * gj);
            h.push(col);
            rel = gvec[j + 1].abs() / b_norm;
            if rel <= tol || h_next == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }
        // back substitution on the triangular factor
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = gvec[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= h[l][i] * yl;
            }
            y[i] = acc / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += yi * vi);
        }
        if rel <= tol {
            break;
        }
    }
    let ax = apply(&x);
    let true_rel = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / b_norm;
    KrylovOutcome {
        solution: x,
        converged: true_rel <= tol * 10.0,
        relative_residual: true_rel,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(a: &[Vec<f64>]) -> impl FnMut(&[f64]) -> Vec<f64> + '_ {
        move |x| a.iter().map(|row| dot(row, x)).collect()
    }

    #[test]
    fn solves_nonsymmetric_and_indefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 5, 40] {
            let a: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let d = if i == j { if i == 0 { -2.0 } else { 3.0 + i as f64 } } else { 0.0 };
                            d + 0.3 * rng.random_range(-1.0..1.0)
                        })
                        .collect()
                })
                .collect();
            let x_true: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = dense(&a)(&x_true);
            let out = gmres(dense(&a), &b, 1e-12, 10, 500);
            assert!(out.converged, "n = {n}: {out:?}");
            let err = norm(&out.solution.iter().zip(&x_true).map(|(u, v)| u - v).collect::<Vec<_>>());
            assert!(err <= 1e-9 * norm(&x_true), "n = {n}: {err}");
        }
    }

    #[test]
    fn zero_right_hand_side() {
        let out = gmres(|x| x.to_vec(), &[0.0; 3], 1e-12, 5, 10);
        assert_eq!(out.solution, vec![0.0; 3]);
        assert!(out.converged);
    }
}
