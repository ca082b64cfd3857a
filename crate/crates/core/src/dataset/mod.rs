//! Multi-label datasets with candidate labels and (optionally) the ground truth
//! they were generated from.

pub(crate) mod io;
mod noise;
mod split;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

pub use self::io::{load, parse, render, save, Format};
pub use self::noise::{inject_noise, NoiseConfig};
pub use self::split::{fold_indices, split, split_indices, SplitSpec};

/// A feature matrix paired with candidate labels.
///
/// `candidates` is what a learner is allowed to see. `truth`, when present, is
/// kept only for evaluation and always satisfies `truth <= candidates`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    candidates: LabelMatrix,
    truth: Option<LabelMatrix>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        candidates: LabelMatrix,
        truth: Option<LabelMatrix>,
    ) -> Result<Self> {
        let ds = Dataset { features, candidates, truth };
        ds.validate()?;
        Ok(ds)
    }

    /// A noise-free dataset: candidates equal the ground truth.
    pub fn from_truth(features: DMatrix<f64>, truth: LabelMatrix) -> Result<Self> {
        Dataset::new(features, truth.clone(), Some(truth))
    }

    fn validate(&self) -> Result<()> {
        let (n, d) = self.features.shape();
        let (yn, l) = self.candidates.shape();
        if n == 0 || d == 0 || l == 0 {
            return Err(Error::Validation(format!("empty dimension: n={n} d={d} l={l}")));
        }
        if yn != n {
            return Err(Error::Shape(format!("{n} feature rows but {yn} label rows")));
        }
        if let Some((i, _)) = self.features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at instance {}",
                i % n
            )));
        }
        for i in 0..n {
            let c = self.candidates.row_count(i);
            if c == 0 {
                return Err(Error::Validation(format!("instance {i} has an empty label set")));
            }
            if c >= l && l > 1 {
                return Err(Error::Validation(format!(
                    "instance {i} has all {l} labels as candidates"
                )));
            }
        }
        if let Some(truth) = &self.truth {
            if truth.shape() != self.candidates.shape() {
                return Err(Error::Shape(format!(
                    "truth is {:?}, candidates are {:?}",
                    truth.shape(),
                    self.candidates.shape()
                )));
            }
            if !truth.is_subset_of(&self.candidates) {
                return Err(Error::Validation(
                    "ground-truth labels not covered by candidates".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.candidates.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn candidates(&self) -> &LabelMatrix {
        &self.candidates
    }

    pub fn truth(&self) -> Option<&LabelMatrix> {
        self.truth.as_ref()
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select_rows(indices);
        Dataset {
            features,
            candidates: self.candidates.select_rows(indices),
            truth: self.truth.as_ref().map(|t| t.select_rows(indices)),
        }
    }

    /// Replaces the features, keeping labels. Used for standardization and bias columns.
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(features, self.candidates.clone(), self.truth.clone())
    }
}

/// Per-feature z-scoring fitted on one dataset and applied to others.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get scale 1 so they map to 0 instead of NaN.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(mu);
            scale.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Two CSV rows under a `#2 d` header: means, then scales.
    pub fn render(&self) -> String {
        let d = self.mean.len();
        let m = DMatrix::from_fn(2, d, |r, j| if r == 0 { self.mean[j] } else { self.scale[j] });
        crate::enrichment::render_matrix(&m)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m = crate::enrichment::parse_matrix(text)?;
        if m.nrows() != 2 {
            return Err(Error::Validation(format!("scaler needs 2 rows, found {}", m.nrows())));
        }
        let scale: Vec<f64> = m.row(1).iter().copied().collect();
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("scaler scales must be positive".into()));
        }
        Ok(Standardizer { mean: m.row(0).iter().copied().collect(), scale })
    }
}

/// Appends a constant-1 column.
pub fn with_bias_column(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(x.ncols(), 1.0)
}
