//! Weighted kNN graph: exact Euclidean neighbors plus non-negative
//! reconstruction weights, normalized per row.

mod nnls;

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use self::nnls::{nnls_normal, solve_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
    pub distance: Distance,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 10, distance: Distance::Euclidean }
    }
}

/// Neighbor lists plus the row-normalized weight matrix `V`, stored row-sparse:
/// `weights[i][t]` is `V[i, neighbors[i][t]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl WeightGraph {
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut v = DMatrix::zeros(n, n);
        for (i, (nb, w)) in self.neighbors.iter().zip(&self.weights).enumerate() {
            for (&j, &wj) in nb.iter().zip(w) {
                v[(i, j)] = wj;
            }
        }
        v
    }

    /// `Vᵀ F` without materializing `V`.
    pub fn transpose_mul(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, l) = f.shape();
        let mut out = DMatrix::zeros(n, l);
        for (row, (nb, w)) in self.neighbors.iter().zip(&self.weights).enumerate() {
            for (&i, &wi) in nb.iter().zip(w) {
                if wi == 0.0 {
                    continue;
                }
                for c in 0..l {
                    out[(i, c)] += wi * f[(row, c)];
                }
            }
        }
        out
    }

    /// Debug dump, one `i: j1=w1 j2=w2 ...` line per instance.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (nb, w)) in self.neighbors.iter().zip(&self.weights).enumerate() {
            write!(out, "{i}:").unwrap();
            for (j, wj) in nb.iter().zip(w) {
                write!(out, " {j}={wj}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Exact kNN by brute force. Each list is ordered by distance, ties broken by
/// the smaller index; an instance is never its own neighbor.
pub fn build_knn(x: &DMatrix<f64>, cfg: &KnnConfig) -> Result<Vec<Vec<usize>>> {
    let n = x.nrows();
    if cfg.k == 0 || cfg.k >= n {
        return Err(Error::Config(format!("k = {} must satisfy 1 <= k < n = {n}", cfg.k)));
    }
    // Columns of the transpose are contiguous instance vectors.
    let xt = x.transpose();
    let mut out = Vec::with_capacity(n);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let xi = xt.column(i);
        dist.clear();
        for j in (0..n).filter(|&j| j != i) {
            let xj = xt.column(j);
            let d2: f64 = xi.iter().zip(xj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            dist.push((d2, j));
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        dist.select_nth_unstable_by(cfg.k - 1, cmp);
        let mut nearest = dist[..cfg.k].to_vec();
        nearest.sort_unstable_by(cmp);
        out.push(nearest.into_iter().map(|(_, j)| j).collect());
    }
    Ok(out)
}

/// Row sums above this are divided out; smaller rows fall back to uniform weights.
pub const DEGENERATE_ROW_SUM: f64 = 1e-12;

/// Divides every row by its sum, or spreads `1/k` over the neighbors when the
/// row sum is (numerically) zero.
pub fn normalize_rows(neighbors: Vec<Vec<usize>>, raw: Vec<Vec<f64>>) -> WeightGraph {
    let weights = raw
        .into_iter()
        .zip(&neighbors)
        .map(|(row, nb)| {
            let sum: f64 = row.iter().sum();
            if sum > DEGENERATE_ROW_SUM {
                row.iter().map(|w| w / sum).collect()
            } else {
                vec![1.0 / nb.len() as f64; nb.len()]
            }
        })
        .collect();
    WeightGraph { neighbors, weights }
}

/// Neighbor search, per-instance reconstruction weights and normalization.
pub fn build_graph(x: &DMatrix<f64>, cfg: &KnnConfig) -> Result<WeightGraph> {
    let neighbors = build_knn(x, cfg)?;
    let xt = x.transpose();
    let rows: Vec<&[f64]> = xt.as_slice().chunks(x.ncols()).collect();
    let raw = neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let cols: Vec<&[f64]> = nb.iter().map(|&j| rows[j]).collect();
            solve_weights(rows[i], &cols)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(normalize_rows(neighbors, raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_example() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 5.0, 0.0]);
        let nb = build_knn(&x, &KnnConfig { k: 1, ..Default::default() }).unwrap();
        assert_eq!(nb, vec![vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn duplicate_prefers_smaller_index() {
        let x = DMatrix::from_row_slice(4, 1, &[3.0, 1.0, 1.0, 1.0]);
        let nb = build_knn(&x, &KnnConfig { k: 1, ..Default::default() }).unwrap();
        assert_eq!(nb[3], vec![1]);
        assert_eq!(nb[1], vec![2]);
    }

    #[test]
    fn k_equal_n_minus_one_is_exhaustive() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 2.0, 7.0, 1.0]);
        let nb = build_knn(&x, &KnnConfig { k: 3, ..Default::default() }).unwrap();
        for (i, list) in nb.iter().enumerate() {
            let mut s = list.clone();
            s.sort_unstable();
            assert_eq!(s, (0..4).filter(|&j| j != i).collect::<Vec<_>>());
        }
        assert!(build_knn(&x, &KnnConfig { k: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn normalize_examples() {
        let g = normalize_rows(vec![vec![0, 1, 2]], vec![vec![2.0, 2.0, 0.0]]);
        assert_eq!(g.weights(0), &[0.5, 0.5, 0.0]);
        let g = normalize_rows(vec![vec![3, 4]], vec![vec![0.0, 0.0]]);
        assert_eq!(g.weights(0), &[0.5, 0.5]);
        let g = normalize_rows(vec![vec![1, 2]], vec![vec![0.25, 0.75]]);
        assert_eq!(g.weights(0), &[0.25, 0.75]);
    }

    #[test]
    fn transpose_mul_matches_dense() {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * i as f64);
        let g = build_graph(&x, &KnnConfig { k: 3, ..Default::default() }).unwrap();
        let f = DMatrix::from_fn(6, 2, |i, j| (i + 2 * j) as f64);
        let dense = g.to_dense().transpose() * &f;
        assert!((g.transpose_mul(&f) - dense).norm() < 1e-12);
        for i in 0..6 {
            assert!((g.weights(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(!g.neighbors(i).contains(&i));
        }
        assert!(g.render().starts_with("0: "));
    }
}
