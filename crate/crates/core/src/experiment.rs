//! End-to-end protocol: noise injection, repeated train/test splits, λ₂
//! selection by cross-validation, two-stage training and evaluation.
//!
//! All randomness descends from one master seed through [`derive_seed`], so
//! split `s` sees the same seeds no matter how many splits are requested.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::thread;

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataset::{self, fold_indices, Dataset, Format, NoiseConfig, SplitSpec, Standardizer};
use crate::enrichment::{enrich, Enrichment, PropagationConfig};
use crate::error::{Error, Result, StageExt};
use crate::knn::{build_graph, KnnConfig};
use crate::labels::LabelMatrix;
use crate::metrics::{self, AggregateReport, MetricsReport};
use crate::trainer::{self, Model, TrainerConfig};

/// Everything that shapes a trained model, independent of data and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub knn: KnnConfig,
    pub propagation: PropagationConfig,
    /// `lambda2` here is ignored when the grid has more than one value.
    pub trainer: TrainerConfig,
    pub lambda2_grid: Vec<f64>,
    pub cv_folds: usize,
    pub standardize: bool,
    pub add_bias: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            knn: KnnConfig::default(),
            propagation: PropagationConfig::default(),
            trainer: TrainerConfig::default(),
            lambda2_grid: vec![10.0, 100.0],
            cv_folds: 5,
            standardize: false,
            add_bias: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda2_grid.is_empty() {
            return Err(Error::Config("lambda2 grid is empty".into()));
        }
        if let Some(v) = self.lambda2_grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("lambda2 grid value {v} must be positive")));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config(format!("cv_folds = {} must be at least 2", self.cv_folds)));
        }
        self.propagation.validate()?;
        self.trainer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub format: Format,
    /// Noise percentage; `None` uses the file's candidate labels unchanged.
    pub noise: Option<u32>,
    pub splits: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub output: Option<PathBuf>,
    pub output_format: ReportFormat,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            format: Format::SparseMultilabel,
            noise: None,
            splits: 5,
            split_fraction: 0.5,
            seed: 0,
            pipeline: PipelineConfig::default(),
            output: None,
            output_format: ReportFormat::Json,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a path below the master seed, e.g. `[SPLITS, s, CV]`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

const NOISE_STAGE: u64 = 0;
const SPLITS_STAGE: u64 = 1;
const PARTITION_STAGE: u64 = 0;
const CV_STAGE: u64 = 1;

/// Feature matrices for graph construction and for the linear model.
struct Features {
    graph: DMatrix<f64>,
    linear: DMatrix<f64>,
}

/// Standardizes with training statistics and appends the bias column if asked.
fn prepare(train: &DMatrix<f64>, others: &[&DMatrix<f64>], cfg: &PipelineConfig) -> Vec<Features> {
    let scaler = cfg.standardize.then(|| Standardizer::fit(train));
    std::iter::once(train)
        .chain(others.iter().copied())
        .map(|x| {
            let graph = match &scaler {
                Some(s) => s.apply(x),
                None => x.clone(),
            };
            let linear = if cfg.add_bias { dataset::with_bias_column(&graph) } else { graph.clone() };
            Features { graph, linear }
        })
        .collect()
}

/// Stage one: kNN graph and label enrichment on the training data.
pub fn enrich_dataset(x: &DMatrix<f64>, candidates: &LabelMatrix, cfg: &PipelineConfig) -> Result<Enrichment> {
    let graph = build_graph(x, &cfg.knn).stage("kNN graph")?;
    enrich(candidates, &graph, &cfg.propagation).stage("label enrichment")
}

/// Picks λ₂ from the grid by k-fold cross-validation on the training split.
///
/// Held-out folds are scored by average precision against their candidate
/// labels, since the learner never sees the ground truth. Ties go to the
/// smaller λ₂.
pub fn select_lambda2(train: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<f64> {
    let mut grid = cfg.lambda2_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    match grid.len() {
        0 => return Err(Error::Config("lambda2 grid is empty".into())),
        1 => return Ok(grid[0]),
        _ => {}
    }
    let n = train.n_instances();
    let folds = fold_indices(n, cfg.cv_folds, seed)?;
    let mut ap_sum = vec![0.0; grid.len()];
    for (f, held) in folds.iter().enumerate() {
        let rest: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let mut rest = rest;
        rest.sort_unstable();
        let (fit_part, held_part) = (train.subset(&rest), train.subset(held));
        let feats = prepare(fit_part.features(), &[held_part.features()], cfg);
        let yhat = enrich_dataset(&feats[0].graph, fit_part.candidates(), cfg)
            .stage(&format!("cross-validation fold {}", f + 1))?
            .matrix;
        for (g, &lambda2) in grid.iter().enumerate() {
            let tcfg = TrainerConfig { lambda2, ..cfg.trainer };
            let out = trainer::fit(&feats[0].linear, &yhat, fit_part.candidates(), &tcfg)
                .stage(&format!("cross-validation fold {}", f + 1))?;
            let pred = trainer::predict(&out.model, &feats[1].linear)?;
            let report = metrics::evaluate(&pred.scores, &pred.labels, held_part.candidates())?;
            ap_sum[g] += report.ap;
        }
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if ap_sum[g] > ap_sum[best] {
            best = g;
        }
    }
    info!("lambda2 mean AP: {:?} -> {}", ap_sum.iter().map(|s| s / folds.len() as f64).collect::<Vec<_>>(), grid[best]);
    Ok(grid[best])
}

/// A trained two-stage model ready to score raw feature rows.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub model: Model,
    pub trace: Vec<f64>,
    pub enrichment: DMatrix<f64>,
    scaler: Option<Standardizer>,
    add_bias: bool,
}

impl TrainedPipeline {
    /// Training-set feature statistics, present when standardization is on.
    pub fn scaler(&self) -> Option<&Standardizer> {
        self.scaler.as_ref()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<trainer::Prediction> {
        let mut x = match &self.scaler {
            Some(s) => s.apply(x),
            None => x.clone(),
        };
        if self.add_bias {
            x = dataset::with_bias_column(&x);
        }
        trainer::predict(&self.model, &x)
    }
}

/// Enrichment then joint training with a fixed λ₂.
pub fn train(train: &Dataset, cfg: &PipelineConfig, lambda2: f64) -> Result<TrainedPipeline> {
    let scaler = cfg.standardize.then(|| Standardizer::fit(train.features()));
    let feats = prepare(train.features(), &[], cfg).remove(0);
    let enrichment = enrich_dataset(&feats.graph, train.candidates(), cfg)?.matrix;
    let tcfg = TrainerConfig { lambda2, ..cfg.trainer };
    let out = trainer::fit(&feats.linear, &enrichment, train.candidates(), &tcfg).stage("training")?;
    Ok(TrainedPipeline {
        model: out.model,
        trace: out.trace,
        enrichment,
        scaler,
        add_bias: cfg.add_bias,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub trained: TrainedPipeline,
    pub lambda2: f64,
    pub report: MetricsReport,
}

/// One split: λ₂ selection, training, and evaluation against the test truth.
pub fn run_pipeline(
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &PipelineConfig,
    cv_seed: u64,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let truth = test_set
        .truth()
        .ok_or_else(|| Error::State("test split has no ground truth to evaluate against".into()))?;
    let lambda2 = select_lambda2(train_set, cfg, cv_seed).stage("lambda2 selection")?;
    let trained = train(train_set, cfg, lambda2)?;
    let pred = trained.predict(test_set.features()).stage("prediction")?;
    let report = metrics::evaluate(&pred.scores, &pred.labels, truth).stage("evaluation")?;
    Ok(PipelineOutput { trained, lambda2, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitOutcome {
    pub split: usize,
    pub lambda2: f64,
    #[serde(flatten)]
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub splits: Vec<SplitOutcome>,
    pub aggregate: AggregateReport,
}

/// Protocol parameters for [`run_benchmark`] on an in-memory dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub noise: Option<u32>,
    pub splits: usize,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Protocol {
    pub fn of(cfg: &ExperimentConfig) -> Protocol {
        Protocol {
            noise: cfg.noise,
            splits: cfg.splits,
            split_fraction: cfg.split_fraction,
            seed: cfg.seed,
        }
    }
}

/// Noise once, then every split independently (in parallel threads); results
/// are assembled in split order.
pub fn run_benchmark(ds: &Dataset, protocol: &Protocol, cfg: &PipelineConfig) -> Result<BenchmarkReport> {
    if protocol.splits == 0 {
        return Err(Error::Config("split count must be at least 1".into()));
    }
    cfg.validate()?;
    let noisy = match protocol.noise {
        Some(percent) => dataset::inject_noise(
            ds,
            &NoiseConfig { percent, seed: derive_seed(protocol.seed, &[NOISE_STAGE]) },
        )
        .stage("noise injection")?,
        None => ds.clone(),
    };
    let noisy = &noisy;
    let results: Vec<Result<SplitOutcome>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..protocol.splits)
            .map(|s| {
                scope.spawn(move || {
                    let split_seed = derive_seed(protocol.seed, &[SPLITS_STAGE, s as u64]);
                    let spec = SplitSpec {
                        train_fraction: protocol.split_fraction,
                        seed: derive_seed(split_seed, &[PARTITION_STAGE]),
                    };
                    let (tr, te) = dataset::split(noisy, &spec)?;
                    let out = run_pipeline(&tr, &te, cfg, derive_seed(split_seed, &[CV_STAGE]))?;
                    info!("split {}: lambda2 = {}, AP = {:.4}", s, out.lambda2, out.report.ap);
                    Ok(SplitOutcome { split: s, lambda2: out.lambda2, report: out.report })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("split worker panicked")).collect()
    });
    let mut splits = Vec::with_capacity(results.len());
    for (s, r) in results.into_iter().enumerate() {
        splits.push(r.map_err(|e| e.in_stage(format!("split {s}")))?);
    }
    let reports: Vec<MetricsReport> = splits.iter().map(|s| s.report).collect();
    let aggregate = metrics::aggregate(&reports)?;
    Ok(BenchmarkReport { splits, aggregate })
}

/// Loads the dataset, runs the benchmark and writes the report if requested.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    let ds = dataset::load(&cfg.dataset, cfg.format).stage("loading dataset")?;
    let report = run_benchmark(&ds, &Protocol::of(cfg), &cfg.pipeline)?;
    if let Some(path) = &cfg.output {
        std::fs::write(path, report.render(cfg.output_format))
            .map_err(Error::from)
            .stage("writing report")?;
    }
    Ok(report)
}

/// `0.992` → `.992`, the compact style used in result tables.
fn compact(v: f64) -> String {
    let s = format!("{v:.3}");
    s.strip_prefix("0.").map(|r| format!(".{r}")).unwrap_or(s)
}

impl BenchmarkReport {
    pub fn to_json(&self) -> serde_json::Value {
        let mut mean = serde_json::Map::new();
        let mut std = serde_json::Map::new();
        for (name, v) in metrics::METRIC_NAMES.iter().zip(self.aggregate.values()) {
            mean.insert(name.to_string(), v.mean.into());
            std.insert(name.to_string(), v.std.into());
        }
        serde_json::json!({ "splits": self.splits, "mean": mean, "std": std })
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
                s.push('\n');
                s
            }
            ReportFormat::Csv => {
                let reports: Vec<MetricsReport> = self.splits.iter().map(|s| s.report).collect();
                metrics::render_csv(&reports, &self.aggregate)
            }
        }
    }

    /// Human-readable `metric  mean ± std` table.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        for (name, v) in metrics::METRIC_NAMES.iter().zip(self.aggregate.values()) {
            writeln!(out, "{name:<10} {} ± {}", compact(v.mean), compact(v.std)).unwrap();
        }
        let lambdas: Vec<String> = self.splits.iter().map(|s| s.lambda2.to_string()).collect();
        writeln!(out, "lambda2    {}", lambdas.join(" ")).unwrap();
        out
    }
}
