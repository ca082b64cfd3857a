//! Multi-label evaluation: subset accuracy, Hamming loss, one-error, ranking
//! loss, average precision and macro/micro F1.
//!
//! Ranking metrics use raw scores. Labels are ordered by descending score with
//! ties going to the smaller label index, and a tied relevant/irrelevant pair
//! counts as a ranking violation. Instances whose ground truth is empty or
//! full have no relevant/irrelevant pairs; they are left out of the ranking
//! metrics and counted in `skipped_instances`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub saccuracy: f64,
    pub hloss: f64,
    pub oerror: f64,
    pub rloss: f64,
    pub ap: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub skipped_instances: usize,
}

/// Metric names in report order.
pub const METRIC_NAMES: [&str; 7] =
    ["saccuracy", "hloss", "oerror", "rloss", "ap", "macro_f1", "micro_f1"];

impl MetricsReport {
    pub fn values(&self) -> [f64; 7] {
        [
            self.saccuracy,
            self.hloss,
            self.oerror,
            self.rloss,
            self.ap,
            self.macro_f1,
            self.micro_f1,
        ]
    }
}

/// Label indices sorted by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

struct RankingScores {
    one_error: f64,
    ranking_loss: f64,
    average_precision: f64,
}

fn rank_instance(scores: &[f64], truth: &[bool]) -> RankingScores {
    let order = ranking(scores);
    let one_error = if truth[order[0]] { 0.0 } else { 1.0 };

    let mut precision_sum = 0.0;
    let mut hits = 0usize;
    for (pos, &j) in order.iter().enumerate() {
        if truth[j] {
            hits += 1;
            precision_sum += hits as f64 / (pos + 1) as f64;
        }
    }
    let n_rel = hits;

    // For every relevant label, count irrelevant labels scoring at least as high.
    let mut irrelevant: Vec<f64> =
        scores.iter().zip(truth).filter(|(_, &t)| !t).map(|(&s, _)| s).collect();
    irrelevant.sort_by(f64::total_cmp);
    let n_irr = irrelevant.len();
    let violations: usize = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t)
        .map(|(&s, _)| n_irr - irrelevant.partition_point(|&v| v < s))
        .sum();

    RankingScores {
        one_error,
        ranking_loss: violations as f64 / (n_rel * n_irr) as f64,
        average_precision: precision_sum / n_rel as f64,
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn evaluate(
    scores: &DMatrix<f64>,
    labels: &LabelMatrix,
    truth: &LabelMatrix,
) -> Result<MetricsReport> {
    if scores.shape() != truth.shape() || labels.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "scores {:?}, labels {:?}, truth {:?}",
            scores.shape(),
            labels.shape(),
            truth.shape()
        )));
    }
    let (m, l) = truth.shape();
    if m == 0 || l == 0 {
        return Err(Error::Validation("cannot evaluate an empty prediction".into()));
    }

    let mut exact = 0usize;
    let mut mismatches = 0usize;
    let mut tp = vec![0usize; l];
    let mut fp = vec![0usize; l];
    let mut fn_ = vec![0usize; l];
    let (mut oerror, mut rloss, mut ap) = (0.0, 0.0, 0.0);
    let mut ranked = 0usize;
    let mut row_scores = vec![0.0; l];

    for i in 0..m {
        let (pred, gold) = (labels.row(i), truth.row(i));
        let mut row_ok = true;
        for j in 0..l {
            match (pred[j], gold[j]) {
                (true, true) => tp[j] += 1,
                (true, false) => fp[j] += 1,
                (false, true) => fn_[j] += 1,
                (false, false) => {}
            }
            if pred[j] != gold[j] {
                mismatches += 1;
                row_ok = false;
            }
        }
        exact += usize::from(row_ok);

        let n_rel = truth.row_count(i);
        if n_rel == 0 || n_rel == l {
            continue;
        }
        for j in 0..l {
            row_scores[j] = scores[(i, j)];
        }
        let r = rank_instance(&row_scores, gold);
        oerror += r.one_error;
        rloss += r.ranking_loss;
        ap += r.average_precision;
        ranked += 1;
    }

    // With no rankable instance there is nothing to get wrong.
    let (oerror, rloss, ap) = if ranked > 0 {
        let k = ranked as f64;
        (oerror / k, rloss / k, ap / k)
    } else {
        (0.0, 0.0, 1.0)
    };
    let macro_f1 = (0..l).map(|j| f1(tp[j], fp[j], fn_[j])).sum::<f64>() / l as f64;
    let micro_f1 = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());

    Ok(MetricsReport {
        saccuracy: exact as f64 / m as f64,
        hloss: mismatches as f64 / (m * l) as f64,
        oerror,
        rloss,
        ap,
        macro_f1,
        micro_f1,
        skipped_instances: m - ranked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Per-metric mean and sample standard deviation over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub saccuracy: MeanStd,
    pub hloss: MeanStd,
    pub oerror: MeanStd,
    pub rloss: MeanStd,
    pub ap: MeanStd,
    pub macro_f1: MeanStd,
    pub micro_f1: MeanStd,
}

impl AggregateReport {
    pub fn values(&self) -> [MeanStd; 7] {
        [
            self.saccuracy,
            self.hloss,
            self.oerror,
            self.rloss,
            self.ap,
            self.macro_f1,
            self.micro_f1,
        ]
    }
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Validation("no reports to aggregate".into()));
    }
    let col = |k: usize| mean_std(&reports.iter().map(|r| r.values()[k]).collect::<Vec<_>>());
    Ok(AggregateReport {
        saccuracy: col(0),
        hloss: col(1),
        oerror: col(2),
        rloss: col(3),
        ap: col(4),
        macro_f1: col(5),
        micro_f1: col(6),
    })
}

/// CSV with one row per report followed by `mean` and `std` rows.
pub fn render_csv(reports: &[MetricsReport], agg: &AggregateReport) -> String {
    let mut out = format!("split,{},skipped_instances\n", METRIC_NAMES.join(","));
    for (i, r) in reports.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for v in r.values() {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{}", r.skipped_instances).unwrap();
    }
    out.push_str("mean");
    for v in agg.values() {
        write!(out, ",{}", v.mean).unwrap();
    }
    out.push_str(",\nstd");
    for v in agg.values() {
        write!(out, ",{}", v.std).unwrap();
    }
    out.push_str(",\n");
    out
}
