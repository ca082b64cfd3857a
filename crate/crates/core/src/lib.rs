//! Partial multi-label learning by label enrichment and recovery.
//!
//! Training is two-stage. [`enrichment`] propagates candidate labels over a
//! weighted kNN graph ([`knn`]) to obtain signed relevance / irrelevance
//! degrees for every label. [`trainer`] then jointly recovers ground-truth
//! confidences and fits a linear predictor from those degrees.
//!
//! [`dataset`] handles file formats, synthetic noise and splits, [`metrics`]
//! the seven evaluation measures, and [`experiment`] the repeated-split
//! benchmark protocol.
//!
//! Rough cost for `n` instances, `d` features and `l` labels: `O(n²d)` for the
//! graph, `O(T₁·n·k·l)` for propagation, and per outer training iteration one
//! `n×l` by `l×l` product set plus a few `l×l` SVDs; the ridge system is
//! factorized once per fit at `O(min(n, d)³)`.

pub mod dataset;
pub mod enrichment;
pub mod error;
pub mod experiment;
pub mod knn;
pub mod labels;
pub mod metrics;
pub mod trainer;

pub use dataset::Dataset;
pub use error::{Error, ErrorKind, Result};
pub use labels::LabelMatrix;
