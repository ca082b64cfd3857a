//! Lawson-Hanson active-set solver for small non-negative least squares problems.
//!
//! Works on the normal equations: with `A` the matrix whose columns are the
//! neighbor vectors and `b` the target, it only needs `G = AᵀA` and `h = Aᵀb`,
//! which for `k <= 10` neighbors is a tiny dense system.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimizes `‖b - Σ_j v_j a_j‖²` over `v >= 0`.
///
/// `columns` are the vectors `a_j`; all must have the length of `target`.
pub fn solve_weights(target: &[f64], columns: &[&[f64]]) -> Result<Vec<f64>> {
    if target.iter().chain(columns.iter().flat_map(|c| c.iter())).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in reconstruction problem".into()));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != target.len()) {
        return Err(Error::Shape(format!(
            "neighbor of length {} for a target of length {}",
            c.len(),
            target.len()
        )));
    }
    let k = columns.len();
    let gram = DMatrix::from_fn(k, k, |a, b| dot(columns[a], columns[b]));
    let h = DVector::from_fn(k, |a, _| dot(columns[a], target));
    Ok(nnls_normal(&gram, &h))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Active-set NNLS on `½ vᵀGv - hᵀv`, `v >= 0`, with `G` symmetric PSD.
pub fn nnls_normal(gram: &DMatrix<f64>, h: &DVector<f64>) -> Vec<f64> {
    let k = h.len();
    let scale = gram.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    // Dual feasibility threshold. Kept well below the 1e-8 KKT target.
    let tol = 1e-13 * scale;

    let mut v = vec![0.0; k];
    let mut passive = vec![false; k];
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        let w = neg_gradient(gram, h, &v);
        let next = (0..k)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
        let Some(j) = next else { break };
        passive[j] = true;

        loop {
            let s = solve_passive(gram, h, &passive);
            if (0..k).filter(|&q| passive[q]).all(|q| s[q] > 0.0) {
                v = s;
                break;
            }
            // Step toward s until the first passive coordinate hits zero.
            let alpha = (0..k)
                .filter(|&q| passive[q] && s[q] <= 0.0)
                .map(|q| v[q] / (v[q] - s[q]))
                .fold(f64::INFINITY, f64::min);
            for q in 0..k {
                v[q] += alpha * (s[q] - v[q]);
            }
            let mut moved = false;
            for q in 0..k {
                if passive[q] && v[q] <= 1e-15 * (1.0 + v.iter().fold(0.0_f64, |m, x| m.max(*x))) {
                    passive[q] = false;
                    v[q] = 0.0;
                    moved = true;
                }
            }
            if !moved {
                // Numerically stuck; drop the most negative coordinate.
                let q = (0..k)
                    .filter(|&q| passive[q])
                    .min_by(|&a, &b| s[a].total_cmp(&s[b]))
                    .unwrap();
                passive[q] = false;
                v[q] = 0.0;
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    v
}

/// `h - Gv`, proportional to the negative gradient.
fn neg_gradient(gram: &DMatrix<f64>, h: &DVector<f64>, v: &[f64]) -> Vec<f64> {
    let k = h.len();
    (0..k).map(|i| h[i] - (0..k).map(|j| gram[(i, j)] * v[j]).sum::<f64>()).collect()
}

/// Unconstrained least squares restricted to the passive set; zeros elsewhere.
pub(crate) fn solve_passive(gram: &DMatrix<f64>, h: &DVector<f64>, passive: &[bool]) -> Vec<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let p = idx.len();
    let sub = DMatrix::from_fn(p, p, |a, b| gram[(idx[a], idx[b])]);
    let rhs = DVector::from_fn(p, |a, _| h[idx[a]]);
    let sol = match sub.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => sub
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(p)),
    };
    let mut out = vec![0.0; passive.len()];
    for (a, &j) in idx.iter().enumerate() {
        out[j] = sol[a];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_single_neighbor() {
        let v = solve_weights(&[1.0, 2.0], &[&[1.0, 2.0]]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair() {
        let v = solve_weights(&[1.0, 0.0], &[&[1.0, 1.0], &[1.0, -1.0]]).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn opposite_neighbor_is_clipped() {
        let v = solve_weights(&[1.0, 0.0], &[&[-1.0, 0.0]]).unwrap();
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn duplicate_columns_are_handled() {
        let v = solve_weights(&[2.0, 2.0], &[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!((v[0] + v[1] - 2.0).abs() < 1e-10, "{v:?}");
        assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn rejects_nan() {
        assert!(matches!(solve_weights(&[f64::NAN], &[&[1.0]]), Err(Error::Numeric(_))));
    }
}
