//! Independent reference implementations and generators shared by the
//! integration tests. Nothing here calls into the crate's own algorithms.

#![allow(dead_code)]

use nalgebra::DMatrix;
use pmler::metrics::MetricsReport;
use pmler::{Dataset, LabelMatrix};
use rand::Rng;

/// Metrics by explicit enumeration: every relevant/irrelevant pair for the
/// ranking loss and a rank list built by counting for average precision.
pub fn brute_metrics(scores: &DMatrix<f64>, labels: &LabelMatrix, truth: &LabelMatrix) -> MetricsReport {
    let (m, l) = scores.shape();
    let mut exact = 0usize;
    let mut wrong_cells = 0usize;
    for i in 0..m {
        let mut same = true;
        for j in 0..l {
            if labels.get(i, j) != truth.get(i, j) {
                wrong_cells += 1;
                same = false;
            }
        }
        exact += same as usize;
    }

    let (mut oerr, mut rloss, mut ap, mut ranked) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..m {
        let rel: Vec<usize> = (0..l).filter(|&j| truth.get(i, j)).collect();
        let irr: Vec<usize> = (0..l).filter(|&j| !truth.get(i, j)).collect();
        if rel.is_empty() || irr.is_empty() {
            continue;
        }
        ranked += 1;
        let s = |j: usize| scores[(i, j)];
        // 1-based rank: everything strictly higher, plus ties with a smaller index.
        let rank = |u: usize| 1 + (0..l).filter(|&v| s(v) > s(u) || (s(v) == s(u) && v < u)).count();

        let mut top = 0;
        for j in 1..l {
            if s(j) > s(top) {
                top = j;
            }
        }
        if !truth.get(i, top) {
            oerr += 1.0;
        }

        let mut bad = 0usize;
        for &u in &rel {
            for &v in &irr {
                if s(u) <= s(v) {
                    bad += 1;
                }
            }
        }
        rloss += bad as f64 / (rel.len() * irr.len()) as f64;

        let mut prec = 0.0;
        for &u in &rel {
            let above = rel.iter().filter(|&&v| rank(v) <= rank(u)).count();
            prec += above as f64 / rank(u) as f64;
        }
        ap += prec / rel.len() as f64;
    }
    let (oerror, rloss, ap) = if ranked == 0 {
        (0.0, 0.0, 1.0)
    } else {
        let r = ranked as f64;
        (oerr / r, rloss / r, ap / r)
    };

    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let den = 2 * tp + fp + fn_;
        if den == 0 { 0.0 } else { 2.0 * tp as f64 / den as f64 }
    };
    let (mut tp_all, mut fp_all, mut fn_all, mut macro_sum) = (0, 0, 0, 0.0);
    for j in 0..l {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for i in 0..m {
            match (labels.get(i, j), truth.get(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        macro_sum += f1(tp, fp, fn_);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }

    MetricsReport {
        saccuracy: exact as f64 / m as f64,
        hloss: wrong_cells as f64 / (m * l) as f64,
        oerror,
        rloss,
        ap,
        macro_f1: macro_sum / l as f64,
        micro_f1: f1(tp_all, fp_all, fn_all),
        skipped_instances: m - ranked,
    }
}

/// kNN by full sort of all `(distance², index)` pairs.
pub fn brute_knn(x: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
    (0..x.nrows())
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..x.nrows())
                .filter(|&j| j != i)
                .map(|j| ((x.row(i) - x.row(j)).norm_squared(), j))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// `‖target - Σ v_j columns_j‖²` and its gradient in `v`.
pub fn lsq_value_and_gradient(target: &[f64], columns: &[&[f64]], v: &[f64]) -> (f64, Vec<f64>) {
    let mut r = target.to_vec();
    for (col, &vj) in columns.iter().zip(v) {
        for (ri, cj) in r.iter_mut().zip(col.iter()) {
            *ri -= vj * cj;
        }
    }
    let value = r.iter().map(|x| x * x).sum();
    let grad = columns
        .iter()
        .map(|col| -2.0 * col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    (value, grad)
}

/// Roundoff allowance when comparing least-squares objectives that may tie
/// exactly in real arithmetic: a few ulps of `‖target‖²`.
pub fn objective_slack(target: &[f64]) -> f64 {
    16.0 * f64::EPSILON * target.iter().map(|t| t * t).sum::<f64>()
}

/// Largest violation of the NNLS optimality conditions: `g_j ≥ 0` where
/// `v_j = 0`, `g_j = 0` where `v_j > 0`, and `v ≥ 0`.
pub fn kkt_residual(target: &[f64], columns: &[&[f64]], v: &[f64]) -> f64 {
    let (_, g) = lsq_value_and_gradient(target, columns, v);
    v.iter()
        .zip(&g)
        .map(|(&vj, &gj)| {
            if vj < 0.0 {
                f64::INFINITY
            } else if vj == 0.0 {
                (-gj).max(0.0)
            } else {
                gj.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Proximal objective `t‖B‖_* + ½‖B - M‖²`.
pub fn prox_objective(b: &DMatrix<f64>, m: &DMatrix<f64>, t: f64) -> f64 {
    let nuc: f64 = b.clone().svd(false, false).singular_values.iter().sum();
    t * nuc + 0.5 * (b - m).norm_squared()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Label matrix where each row has between `lo` and `hi` (inclusive) ones.
pub fn random_label_rows(rng: &mut impl Rng, n: usize, l: usize, lo: usize, hi: usize) -> LabelMatrix {
    let sets: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let count = rng.random_range(lo..=hi);
            let mut idx: Vec<usize> = (0..l).collect();
            for t in 0..count {
                let s = rng.random_range(t..l);
                idx.swap(t, s);
            }
            let mut chosen = idx[..count].to_vec();
            chosen.sort_unstable();
            chosen
        })
        .collect();
    LabelMatrix::from_index_sets(&sets, l)
}

/// Linearly structured multi-label data: labels are a noisy threshold of a
/// random linear map, with one or two distractor candidates added per row.
pub fn synthetic_problem(rng: &mut impl Rng, n: usize, d: usize, l: usize) -> Dataset {
    let x = random_matrix(rng, n, d, 1.0);
    let proj = random_matrix(rng, d, l, 1.0);
    let z = &x * &proj;
    let mut truth = LabelMatrix::zeros(n, l);
    let mut cand = LabelMatrix::zeros(n, l);
    for i in 0..n {
        let mut best = 0;
        for j in 0..l {
            if z[(i, j)] > z[(i, best)] {
                best = j;
            }
            if z[(i, j)] > 0.5 {
                truth.set(i, j, true);
            }
        }
        truth.set(i, best, true);
        // Keep at least one label outside the truth for distractors.
        if truth.row_count(i) == l {
            let drop = (best + 1) % l;
            truth.set(i, drop, false);
        }
        for j in 0..l {
            cand.set(i, j, truth.get(i, j));
        }
        let free: Vec<usize> = (0..l).filter(|&j| !truth.get(i, j)).collect();
        let extra = rng.random_range(0..=free.len().min(2));
        for &j in free.iter().take(extra) {
            cand.set(i, j, true);
        }
        if cand.row_count(i) == l {
            cand.set(i, free[0], false);
        }
    }
    Dataset::new(x, cand, Some(truth)).expect("synthetic data is valid")
}
