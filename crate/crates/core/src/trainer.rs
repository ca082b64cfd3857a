//! Joint estimation of label confidences `C`, a low-rank label correlation
//! matrix `B` and a linear predictor `W` by minimizing
//!
//! ```text
//! ‖Ŷ - CB‖²_F + ‖C - XW‖²_F + λ₁‖B‖_* + λ₂‖W‖²_F    s.t.  0 <= C <= Y
//! ```
//!
//! with block-coordinate updates. The `B` block is handled by a few ADMM
//! passes with singular value thresholding; `C` and `W` have closed forms.
//!
//! The `C` update clamps the unconstrained minimizer into the box, which is not
//! the exact box-constrained minimizer when `BBᵀ + I` is not diagonal, so the
//! objective is not guaranteed to decrease monotonically.

use std::fmt::Write as _;

use log::debug;
use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::dataset::io::parse_header_fields;
use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    /// Nuclear-norm weight on `B`.
    pub lambda1: f64,
    /// Ridge weight on `W`.
    pub lambda2: f64,
    /// ADMM penalty.
    pub tau: f64,
    pub admm_iters: usize,
    pub outer_max: usize,
    /// Stop when the relative objective change drops below this.
    pub outer_tol: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            lambda1: 1.0,
            lambda2: 10.0,
            tau: 1.0,
            admm_iters: 5,
            outer_max: 50,
            outer_tol: 1e-5,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if self.admm_iters == 0 || self.outer_max == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if self.outer_tol.is_nan() || self.outer_tol < 0.0 {
            return Err(Error::Config(format!("outer_tol = {} is invalid", self.outer_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub c: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub bhat: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl TrainerState {
    /// `C` = positive part of `Ŷ` on candidates, `B = B̂ = I`, `Θ = 0`, `W = 0`.
    pub fn initial(yhat: &DMatrix<f64>, candidates: &LabelMatrix, d: usize) -> Self {
        let l = yhat.ncols();
        let c = DMatrix::from_fn(yhat.nrows(), l, |i, j| {
            if candidates.get(i, j) {
                yhat[(i, j)].max(0.0)
            } else {
                0.0
            }
        });
        TrainerState {
            c,
            b: DMatrix::identity(l, l),
            bhat: DMatrix::identity(l, l),
            theta: DMatrix::zeros(l, l),
            w: DMatrix::zeros(d, l),
        }
    }
}

/// A trained linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub w: DMatrix<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: Model,
    pub state: TrainerState,
    /// Objective before the first pass, then after every outer pass.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: DMatrix<f64>,
    pub labels: LabelMatrix,
}

/// Scores at or above this are predicted relevant.
pub const DECISION_THRESHOLD: f64 = 0.5;

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite entry in {what}")))
    }
}

fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(m, "matrix passed to SVD")?;
    m.clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .map(|s| s.singular_values.iter().copied().collect())
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Singular value thresholding: the proximal operator of `t‖·‖_*`.
pub fn svt(m: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    check_finite(m, "matrix passed to SVT")?;
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge in singular value thresholding".into()))?;
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= (svd.singular_values[k] - threshold).max(0.0);
    }
    Ok(scaled * v_t)
}

pub fn objective(
    state: &TrainerState,
    x: &DMatrix<f64>,
    yhat: &DMatrix<f64>,
    cfg: &TrainerConfig,
) -> Result<f64> {
    let (n, d) = x.shape();
    let l = yhat.ncols();
    if yhat.nrows() != n
        || state.c.shape() != (n, l)
        || state.b.shape() != (l, l)
        || state.w.shape() != (d, l)
    {
        return Err(Error::Shape(format!(
            "X {:?}, Ŷ {:?}, C {:?}, B {:?}, W {:?}",
            x.shape(),
            yhat.shape(),
            state.c.shape(),
            state.b.shape(),
            state.w.shape()
        )));
    }
    let recon = (yhat - &state.c * &state.b).norm_squared();
    let fit = (&state.c - x * &state.w).norm_squared();
    let value = recon
        + fit
        + cfg.lambda1 * nuclear_norm(&state.b)?
        + cfg.lambda2 * state.w.norm_squared();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric("objective is not finite".into()))
    }
}

fn spd_factor(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    check_finite(&m, what)?;
    Cholesky::new(m).ok_or_else(|| Error::Numeric(format!("{what} is not positive definite")))
}

/// Confidence update: `C' = (ŶBᵀ + XW)(BBᵀ + I)⁻¹`, clamped to `[0, 1]` and
/// zeroed on non-candidates.
///
/// Clamping the unconstrained minimizer is exact only when `BBᵀ + I` is
/// diagonal; otherwise it approximates the box-constrained solution.
pub fn update_c(
    state: &TrainerState,
    x: &DMatrix<f64>,
    yhat: &DMatrix<f64>,
    candidates: &LabelMatrix,
) -> Result<DMatrix<f64>> {
    let l = state.b.nrows();
    let gram = &state.b * state.b.transpose() + DMatrix::identity(l, l);
    let rhs = yhat * state.b.transpose() + x * &state.w;
    // C' M = R with M symmetric  <=>  M C'ᵀ = Rᵀ.
    let c = spd_factor(gram, "BBᵀ + I")?.solve(&rhs.transpose()).transpose();
    check_finite(&c, "C")?;
    Ok(DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
        if candidates.get(i, j) {
            c[(i, j)].clamp(0.0, 1.0)
        } else {
            0.0
        }
    }))
}

/// `admm_iters` passes of the B̂ / B / Θ updates for the nuclear-norm block.
pub fn update_b_admm(
    state: &mut TrainerState,
    yhat: &DMatrix<f64>,
    cfg: &TrainerConfig,
) -> Result<()> {
    let l = state.b.nrows();
    let ctc = state.c.transpose() * &state.c;
    let cty = state.c.transpose() * yhat;
    let system = spd_factor(ctc * 2.0 + DMatrix::identity(l, l) * cfg.tau, "2CᵀC + τI")?;
    let threshold = cfg.lambda1 / cfg.tau;
    for it in 0..cfg.admm_iters {
        state.bhat = system.solve(&(&cty * 2.0 + &state.b * cfg.tau + &state.theta));
        state.b = svt(&(&state.bhat - &state.theta / cfg.tau), threshold)
            .map_err(|e| e.in_stage(format!("ADMM iteration {}", it + 1)))?;
        state.theta += (&state.b - &state.bhat) * cfg.tau;
    }
    check_finite(&state.theta, "Θ")
}

/// Closed-form ridge solve `(XᵀX + λI)⁻¹XᵀC`.
///
/// Factorizes whichever of `XᵀX + λI` (d×d) or `XXᵀ + λI` (n×n) is smaller;
/// the push-through identity `(XᵀX + λI)⁻¹Xᵀ = Xᵀ(XXᵀ + λI)⁻¹` makes both
/// routes the same estimator.
pub struct RidgeSolver {
    x: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    dual: bool,
}

impl RidgeSolver {
    pub fn new(x: &DMatrix<f64>, lambda2: f64) -> Result<Self> {
        let (n, d) = x.shape();
        let dual = n < d;
        let gram = if dual { x * x.transpose() } else { x.transpose() * x };
        let size = gram.nrows();
        let factor = spd_factor(gram + DMatrix::identity(size, size) * lambda2, "ridge system")?;
        Ok(RidgeSolver { x: x.clone(), factor, dual })
    }

    pub fn solve(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if c.nrows() != self.x.nrows() {
            return Err(Error::Shape(format!(
                "C has {} rows, X has {}",
                c.nrows(),
                self.x.nrows()
            )));
        }
        let w = if self.dual {
            self.x.transpose() * self.factor.solve(c)
        } else {
            self.factor.solve(&(self.x.transpose() * c))
        };
        check_finite(&w, "W")?;
        Ok(w)
    }
}

pub fn update_w(state: &TrainerState, x: &DMatrix<f64>, cfg: &TrainerConfig) -> Result<DMatrix<f64>> {
    RidgeSolver::new(x, cfg.lambda2)?.solve(&state.c)
}

/// Gradient of `‖C - XW‖² + λ‖W‖²` with respect to `W`.
pub fn ridge_gradient(
    x: &DMatrix<f64>,
    c: &DMatrix<f64>,
    w: &DMatrix<f64>,
    lambda2: f64,
) -> DMatrix<f64> {
    (x.transpose() * (x * w - c)) * 2.0 + w * (2.0 * lambda2)
}

pub fn fit(
    x: &DMatrix<f64>,
    yhat: &DMatrix<f64>,
    candidates: &LabelMatrix,
    cfg: &TrainerConfig,
) -> Result<FitOutput> {
    cfg.validate()?;
    if yhat.shape() != candidates.shape() || yhat.nrows() != x.nrows() {
        return Err(Error::Shape(format!(
            "X {:?}, Ŷ {:?}, Y {:?}",
            x.shape(),
            yhat.shape(),
            candidates.shape()
        )));
    }
    check_finite(x, "X")?;
    check_finite(yhat, "Ŷ")?;
    let mut state = TrainerState::initial(yhat, candidates, x.ncols());
    let ridge = RidgeSolver::new(x, cfg.lambda2)?;
    let mut trace = vec![objective(&state, x, yhat, cfg)?];
    for it in 0..cfg.outer_max {
        state.c = update_c(&state, x, yhat, candidates)?;
        update_b_admm(&mut state, yhat, cfg)?;
        state.w = ridge.solve(&state.c)?;
        let prev = *trace.last().unwrap();
        let cur = objective(&state, x, yhat, cfg)?;
        trace.push(cur);
        debug!("outer iteration {}: objective {cur}", it + 1);
        if (prev - cur).abs() / prev.abs().max(1.0) < cfg.outer_tol {
            break;
        }
    }
    let model = Model { w: state.w.clone(), lambda1: cfg.lambda1, lambda2: cfg.lambda2 };
    Ok(FitOutput { model, state, trace })
}

pub fn predict(model: &Model, x: &DMatrix<f64>) -> Result<Prediction> {
    if x.ncols() != model.w.nrows() {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            model.w.nrows(),
            x.ncols()
        )));
    }
    let scores = x * &model.w;
    let labels = LabelMatrix::from_threshold(&scores, DECISION_THRESHOLD);
    Ok(Prediction { scores, labels })
}

impl Model {
    /// Header `#d l lambda1 lambda2`, then one CSV row of `W` per feature.
    pub fn render(&self) -> String {
        let (d, l) = self.w.shape();
        let mut out = format!("#{d} {l} {} {}\n", self.lambda1, self.lambda2);
        for i in 0..d {
            for j in 0..l {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", self.w[(i, j)]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Model> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (no, header) =
            lines.next().ok_or_else(|| Error::parse(1, "missing model header"))?;
        let fields: Vec<&str> = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::parse(no, "header must start with `#`"))?
            .split_whitespace()
            .collect();
        if fields.len() != 4 {
            return Err(Error::parse(no, "expected `#d l lambda1 lambda2`"));
        }
        let dims = parse_header_fields(no, &format!("#{} {}", fields[0], fields[1]), 2)?;
        let float = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::parse(no, format!("bad number `{s}`")))
        };
        let (lambda1, lambda2) = (float(fields[2])?, float(fields[3])?);
        let body: String = lines.map(|(_, l)| format!("{l}\n")).collect();
        let w = crate::enrichment::parse_matrix(&format!("#{} {}\n{body}", dims[0], dims[1]))?;
        Ok(Model { w, lambda1, lambda2 })
    }
}

/// CSV `iter,objective` with iteration 0 the initial state.
pub fn render_trace(trace: &[f64]) -> String {
    let mut out = String::from("iter,objective\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{i},{v}").unwrap();
    }
    out
}
