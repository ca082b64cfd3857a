//! `pmler` command-line driver.
//!
//! Every flag can also be set through an environment variable named
//! `PMLER_<FLAG>` (upper case, dashes as underscores), e.g. `PMLER_K=5`.
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use pmler::dataset::{self, Format, NoiseConfig, Standardizer};
use pmler::enrichment::{parse_matrix, render_matrix, PropagationConfig};
use pmler::experiment::{self, ExperimentConfig, PipelineConfig, ReportFormat};
use pmler::knn::KnnConfig;
use pmler::metrics;
use pmler::trainer::{self, Model, TrainerConfig, DECISION_THRESHOLD};
use pmler::{Dataset, Error, ErrorKind, LabelMatrix, Result};

#[derive(Parser, Debug)]
#[command(name = "pmler", version, about = "Partial multi-label learning with label enrichment")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn a clean multi-label dataset into a partial-label one.
    InjectNoise(InjectNoiseArgs),
    /// Compute the label enrichment matrix of a dataset.
    Enrich(EnrichArgs),
    /// Enrich and train a linear model on a dataset.
    Train(TrainArgs),
    /// Score a dataset with a trained model.
    Predict(PredictArgs),
    /// Compute evaluation metrics for a score matrix.
    Evaluate(EvaluateArgs),
    /// Run the full noise / split / train / evaluate protocol.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataFormat {
    Sparse,
    Dense,
}

impl From<DataFormat> for Format {
    fn from(f: DataFormat) -> Self {
        match f {
            DataFormat::Sparse => Format::SparseMultilabel,
            DataFormat::Dense => Format::DenseCsv,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

impl From<OutputFormat> for ReportFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Json => ReportFormat::Json,
            OutputFormat::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args, Debug)]
struct Input {
    /// Dataset file.
    input: PathBuf,

    /// Layout of the dataset file.
    #[arg(long, value_enum, default_value = "sparse", env = "PMLER_INPUT_FORMAT")]
    input_format: DataFormat,
}

impl Input {
    fn load(&self) -> Result<Dataset> {
        dataset::load(&self.input, self.input_format.into())
            .map_err(|e| e.in_stage(format!("loading {}", self.input.display())))
    }
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Neighbors per instance.
    #[arg(long, default_value_t = 10, env = "PMLER_K")]
    k: usize,

    /// Propagation rate in [0, 1].
    #[arg(long, default_value_t = 0.05, env = "PMLER_ALPHA")]
    alpha: f64,

    /// Z-score features with training statistics before anything else.
    #[arg(long, env = "PMLER_STANDARDIZE_FEATURES")]
    standardize_features: bool,
}

#[derive(Args, Debug)]
struct TrainerArgs {
    /// Nuclear-norm weight.
    #[arg(long, default_value_t = 1.0, env = "PMLER_LAMBDA1")]
    lambda1: f64,

    /// Fixed ridge weight; skips cross-validation over the grid.
    #[arg(long, env = "PMLER_LAMBDA2")]
    lambda2: Option<f64>,

    /// Ridge weights tried by cross-validation.
    #[arg(long, value_delimiter = ',', default_value = "10,100", env = "PMLER_LAMBDA2_GRID")]
    lambda2_grid: Vec<f64>,

    /// ADMM penalty.
    #[arg(long, default_value_t = 1.0, env = "PMLER_TAU")]
    tau: f64,

    /// ADMM passes per outer iteration.
    #[arg(long, default_value_t = 5, env = "PMLER_ADMM_ITERS")]
    admm_iters: usize,

    /// Folds for selecting the ridge weight.
    #[arg(long, default_value_t = 5, env = "PMLER_CV_FOLDS")]
    cv_folds: usize,

    /// Append a constant-1 feature to the linear model.
    #[arg(long, env = "PMLER_ADD_BIAS")]
    add_bias: bool,
}

fn pipeline(graph: &GraphArgs, t: Option<&TrainerArgs>) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        knn: KnnConfig { k: graph.k, ..Default::default() },
        propagation: PropagationConfig { alpha: graph.alpha, ..Default::default() },
        standardize: graph.standardize_features,
        ..Default::default()
    };
    if let Some(t) = t {
        cfg.trainer = TrainerConfig {
            lambda1: t.lambda1,
            tau: t.tau,
            admm_iters: t.admm_iters,
            ..Default::default()
        };
        cfg.lambda2_grid = match t.lambda2 {
            Some(v) => vec![v],
            None => t.lambda2_grid.clone(),
        };
        cfg.cv_folds = t.cv_folds;
        cfg.add_bias = t.add_bias;
    }
    cfg
}

#[derive(Args, Debug)]
struct InjectNoiseArgs {
    #[command(flatten)]
    input: Input,

    /// Noise labels added per instance, as a percentage of its true labels.
    #[arg(long, env = "PMLER_NOISE")]
    noise: u32,

    #[arg(long, default_value_t = 0, env = "PMLER_SEED")]
    seed: u64,

    /// Output dataset layout; defaults to the input layout.
    #[arg(long, value_enum, env = "PMLER_FORMAT")]
    format: Option<DataFormat>,

    #[arg(long, env = "PMLER_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EnrichArgs {
    #[command(flatten)]
    input: Input,

    #[command(flatten)]
    graph: GraphArgs,

    /// Where to write the enrichment matrix; stdout if absent.
    #[arg(long, env = "PMLER_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    input: Input,

    #[command(flatten)]
    graph: GraphArgs,

    #[command(flatten)]
    trainer: TrainerArgs,

    #[arg(long, default_value_t = 0, env = "PMLER_SEED")]
    seed: u64,

    /// Model file. With standardization, statistics go to `<out>.scaler`.
    #[arg(long, env = "PMLER_OUT")]
    out: PathBuf,

    /// Also write the objective trace as `iter,objective` CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model file written by `train`.
    model: PathBuf,

    #[command(flatten)]
    input: Input,

    /// Apply the statistics saved next to the model in `<model>.scaler`.
    #[arg(long, env = "PMLER_STANDARDIZE_FEATURES")]
    standardize_features: bool,

    /// The model was trained with a bias feature.
    #[arg(long, env = "PMLER_ADD_BIAS")]
    add_bias: bool,

    /// Score matrix output; stdout if absent.
    #[arg(long, env = "PMLER_OUT")]
    out: Option<PathBuf>,

    /// Also write thresholded 0/1 labels.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset holding the ground truth.
    #[command(flatten)]
    input: Input,

    /// Score matrix written by `predict`.
    #[arg(long)]
    scores: PathBuf,

    #[arg(long, value_enum, default_value = "json", env = "PMLER_FORMAT")]
    format: OutputFormat,

    /// Report output; stdout if absent.
    #[arg(long, env = "PMLER_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    input: Input,

    #[command(flatten)]
    graph: GraphArgs,

    #[command(flatten)]
    trainer: TrainerArgs,

    /// Noise percentage; omit to use the file's candidate labels as they are.
    #[arg(long, env = "PMLER_NOISE")]
    noise: Option<u32>,

    #[arg(long, default_value_t = 5, env = "PMLER_SPLITS")]
    splits: usize,

    /// Training share of every split.
    #[arg(long, default_value_t = 0.5, env = "PMLER_SPLIT_FRACTION")]
    split_fraction: f64,

    #[arg(long, default_value_t = 0, env = "PMLER_SEED")]
    seed: u64,

    #[arg(long, value_enum, default_value = "json", env = "PMLER_FORMAT")]
    format: OutputFormat,

    /// Report output; the summary table is always printed.
    #[arg(long, env = "PMLER_OUT")]
    out: Option<PathBuf>,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::from(e).in_stage(format!("writing {}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::from(e).in_stage(format!("reading {}", path.display())))
}

fn scaler_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".scaler");
    PathBuf::from(s)
}

fn inject_noise(a: &InjectNoiseArgs) -> Result<()> {
    let ds = a.input.load()?;
    let noisy = dataset::inject_noise(&ds, &NoiseConfig { percent: a.noise, seed: a.seed })?;
    let format = a.format.unwrap_or(a.input.input_format).into();
    dataset::save(&noisy, &a.out, format)?;
    info!(
        "{} candidate labels, {} true labels",
        noisy.candidates().count_ones(),
        ds.truth().map_or(0, LabelMatrix::count_ones)
    );
    Ok(())
}

fn enrich(a: &EnrichArgs) -> Result<()> {
    let ds = a.input.load()?;
    let cfg = pipeline(&a.graph, None);
    cfg.propagation.validate()?;
    let x = if cfg.standardize {
        Standardizer::fit(ds.features()).apply(ds.features())
    } else {
        ds.features().clone()
    };
    let e = experiment::enrich_dataset(&x, ds.candidates(), &cfg)?;
    info!("propagation stopped after {} passes", e.iterations);
    write_or_print(a.out.as_deref(), &render_matrix(&e.matrix))
}

fn train(a: &TrainArgs) -> Result<()> {
    let ds = a.input.load()?;
    let cfg = pipeline(&a.graph, Some(&a.trainer));
    cfg.validate()?;
    let lambda2 = experiment::select_lambda2(&ds, &cfg, a.seed).map_err(|e| e.in_stage("lambda2 selection"))?;
    info!("lambda2 = {lambda2}");
    let trained = experiment::train(&ds, &cfg, lambda2)?;
    write_or_print(Some(&a.out), &trained.model.render())?;
    if let Some(s) = trained.scaler() {
        write_or_print(Some(&scaler_path(&a.out)), &s.render())?;
    }
    if let Some(p) = &a.trace {
        write_or_print(Some(p), &trainer::render_trace(&trained.trace))?;
    }
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = Model::parse(&read(&a.model)?).map_err(|e| e.in_stage("reading model"))?;
    let ds = a.input.load()?;
    let mut x = ds.features().clone();
    if a.standardize_features {
        let path = scaler_path(&a.model);
        let scaler = Standardizer::parse(&read(&path)?).map_err(|e| e.in_stage("reading scaler"))?;
        if scaler.n_features() != x.ncols() {
            return Err(Error::Shape(format!(
                "scaler has {} features, data has {}",
                scaler.n_features(),
                x.ncols()
            )));
        }
        x = scaler.apply(&x);
    }
    if a.add_bias {
        x = dataset::with_bias_column(&x);
    }
    let pred = trainer::predict(&model, &x)?;
    write_or_print(a.out.as_deref(), &render_matrix(&pred.scores))?;
    if let Some(p) = &a.labels_out {
        write_or_print(Some(p), &render_matrix(&pred.labels.to_f64()))?;
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let ds = a.input.load()?;
    let truth = ds
        .truth()
        .ok_or_else(|| Error::State("dataset carries no ground truth".into()))?;
    let scores = parse_matrix(&read(&a.scores)?).map_err(|e| e.in_stage("reading scores"))?;
    let labels = LabelMatrix::from_threshold(&scores, DECISION_THRESHOLD);
    let report = metrics::evaluate(&scores, &labels, truth)?;
    let text = match a.format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            s
        }
        OutputFormat::Csv => metrics::render_csv(&[report], &metrics::aggregate(&[report])?),
    };
    write_or_print(a.out.as_deref(), &text)
}

fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::new(&a.input.input);
    cfg.format = a.input.input_format.into();
    cfg.noise = a.noise;
    cfg.splits = a.splits;
    cfg.split_fraction = a.split_fraction;
    cfg.seed = a.seed;
    cfg.pipeline = pipeline(&a.graph, Some(&a.trainer));
    cfg.output = a.out.clone();
    cfg.output_format = a.format.into();
    let report = experiment::run_experiment(&cfg)?;
    print!("{}", report.summary_table());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::InjectNoise(a) => inject_noise(a),
        Command::Enrich(a) => enrich(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Benchmark(a) => benchmark(a),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
