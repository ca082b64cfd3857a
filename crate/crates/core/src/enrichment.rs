//! Label enrichment by unconstrained propagation over the kNN graph.
//!
//! Starting from the candidate matrix, labels are repeatedly propagated along
//! the reconstruction weights and each row is rescaled so that its largest
//! candidate score is 1. The fixed point is then split into relevance degrees
//! for candidates (in `[0, 1]`) and irrelevance degrees for non-candidates
//! (in `[-1, 0]`).

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::dataset::io::parse_header_fields;
use crate::error::{Error, Result};
use crate::knn::WeightGraph;
use crate::labels::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig { alpha: 0.05, max_iters: 100, tol: 1e-6 }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Signed enrichment matrix plus how many propagation passes produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrichment {
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
}

/// One propagation pass: `alpha * Vᵀ F_prev + (1 - alpha) * F0`.
pub fn propagate_step(
    f_prev: &DMatrix<f64>,
    f0: &DMatrix<f64>,
    graph: &WeightGraph,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    if f_prev.shape() != f0.shape() || f0.nrows() != graph.n() {
        return Err(Error::Shape(format!(
            "F is {:?}, F0 is {:?}, graph has {} nodes",
            f_prev.shape(),
            f0.shape(),
            graph.n()
        )));
    }
    let mut out = graph.transpose_mul(f_prev);
    out *= alpha;
    out.zip_apply(f0, |o, f| *o += (1.0 - alpha) * f);
    Ok(out)
}

/// Rows whose candidate maximum is within this of the row minimum are degenerate.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

/// Per-row min-max rescaling against the largest candidate entry, capped at 1.
pub fn normalize_step(f: &DMatrix<f64>, candidates: &LabelMatrix) -> Result<DMatrix<f64>> {
    if f.shape() != candidates.shape() {
        return Err(Error::Shape(format!(
            "F is {:?}, candidates are {:?}",
            f.shape(),
            candidates.shape()
        )));
    }
    let (n, l) = f.shape();
    let mut out = f.clone();
    for i in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..l {
            let v = f[(i, j)];
            lo = lo.min(v);
            if candidates.get(i, j) {
                hi = hi.max(v);
            }
        }
        if hi == f64::NEG_INFINITY {
            return Err(Error::Validation(format!("instance {i} has no candidate label")));
        }
        let spread = hi - lo;
        for j in 0..l {
            out[(i, j)] = if spread < DEGENERATE_SPREAD {
                if candidates.get(i, j) { 1.0 } else { 0.0 }
            } else {
                ((f[(i, j)] - lo) / spread).min(1.0)
            };
        }
    }
    Ok(out)
}

/// Maps the propagation fixed point to signed degrees: candidates keep `f`,
/// non-candidates become `f - 1`.
pub fn signed_enrichment(f: &DMatrix<f64>, candidates: &LabelMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| {
        if candidates.get(i, j) {
            f[(i, j)]
        } else {
            f[(i, j)] - 1.0
        }
    })
}

pub fn enrich(
    candidates: &LabelMatrix,
    graph: &WeightGraph,
    cfg: &PropagationConfig,
) -> Result<Enrichment> {
    cfg.validate()?;
    let f0 = candidates.to_f64();
    let mut f = f0.clone();
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let next = normalize_step(&propagate_step(&f, &f0, graph, cfg.alpha)?, candidates)?;
        iterations += 1;
        let change = (&next - &f).norm() / f.norm().max(1.0);
        f = next;
        if change.is_nan() || change < cfg.tol {
            break;
        }
    }
    Ok(Enrichment { matrix: signed_enrichment(&f, candidates), iterations })
}

/// Dense CSV with a `#n l` header.
pub fn render_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("#{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (no, header) = lines.next().ok_or_else(|| Error::parse(1, "missing `#n l` header"))?;
    let dims = parse_header_fields(no, header, 2)?;
    let (n, l) = (dims[0], dims[1]);
    let mut m = DMatrix::zeros(n, l);
    let mut row = 0;
    for (no, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        if row == n {
            return Err(Error::parse(no, format!("more than the {n} rows declared")));
        }
        let vals: Vec<&str> = line.split(',').map(str::trim).collect();
        if vals.len() != l {
            return Err(Error::parse(no, format!("expected {l} columns, got {}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            m[(row, j)] =
                v.parse().map_err(|_| Error::parse(no, format!("bad number `{v}`")))?;
        }
        row += 1;
    }
    if row != n {
        return Err(Error::parse(text.lines().count(), format!("expected {n} rows, found {row}")));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::normalize_rows;

    fn swap_graph() -> WeightGraph {
        normalize_rows(vec![vec![1], vec![0]], vec![vec![1.0], vec![1.0]])
    }

    #[test]
    fn zero_rate_returns_initial() {
        let g = swap_graph();
        let f0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let prev = DMatrix::from_row_slice(2, 2, &[0.3, 0.9, 0.2, 0.4]);
        assert_eq!(propagate_step(&prev, &f0, &g, 0.0).unwrap(), f0);
    }

    #[test]
    fn two_node_swap() {
        let g = swap_graph();
        let f0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let out = propagate_step(&f0, &f0, &g, 0.5).unwrap();
        assert_eq!(out, DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn normalize_example_row() {
        let f = DMatrix::from_row_slice(1, 3, &[0.2, 0.8, 0.5]);
        let y = LabelMatrix::from_rows(&[vec![true, true, false]]);
        let out = normalize_step(&f, &y).unwrap();
        assert!(out[(0, 0)].abs() < 1e-15);
        assert_eq!(out[(0, 1)], 1.0);
        assert!((out[(0, 2)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_candidate_above_max_is_capped() {
        let f = DMatrix::from_row_slice(1, 3, &[0.1, 0.4, 0.9]);
        let y = LabelMatrix::from_rows(&[vec![true, true, false]]);
        assert_eq!(normalize_step(&f, &y).unwrap()[(0, 2)], 1.0);
    }

    #[test]
    fn constant_row_falls_back() {
        let f = DMatrix::from_element(1, 3, 0.7);
        let y = LabelMatrix::from_rows(&[vec![false, true, false]]);
        let out = normalize_step(&f, &y).unwrap();
        assert_eq!(out.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn row_without_candidates_is_rejected() {
        let f = DMatrix::from_element(1, 2, 0.7);
        let y = LabelMatrix::zeros(1, 2);
        assert!(matches!(normalize_step(&f, &y), Err(Error::Validation(_))));
    }

    #[test]
    fn signed_mapping() {
        let f = DMatrix::from_row_slice(1, 2, &[0.7, 0.3]);
        let y = LabelMatrix::from_rows(&[vec![true, false]]);
        let s = signed_enrichment(&f, &y);
        assert_eq!(s[(0, 0)], 0.7);
        assert!((s[(0, 1)] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_enrichment_is_plus_minus_one() {
        let y = LabelMatrix::from_rows(&[vec![true, false], vec![false, true]]);
        let cfg = PropagationConfig { alpha: 0.0, ..Default::default() };
        let e = enrich(&y, &swap_graph(), &cfg).unwrap();
        assert_eq!(e.matrix, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn infinite_tolerance_is_single_pass() {
        // One pass on the swap graph with alpha 0.5 gives all 0.5, which is a
        // degenerate row per instance: candidates 1, non-candidates 0.
        let y = LabelMatrix::from_rows(&[vec![true, false], vec![false, true]]);
        let cfg = PropagationConfig { alpha: 0.5, max_iters: 100, tol: f64::INFINITY };
        let e = enrich(&y, &swap_graph(), &cfg).unwrap();
        assert_eq!(e.iterations, 1);
        assert_eq!(e.matrix, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn matrix_text_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -0.25, 1.0 / 3.0, -0.0]);
        let back = parse_matrix(&render_matrix(&m)).unwrap();
        assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
