//! The five comparison models.
//!
//! | id | lag basis                 | coefficient prior / fitting            |
//! |----|---------------------------|----------------------------------------|
//! | M1 | cubic, uniform knots      | `λ diag(1..K)` (lag-increasing ridge)  |
//! | M2 | cubic, uniform knots      | `λ P` (first-order random walk)        |
//! | M3 | cubic, uniform knots      | adaptive `Q(λ_1..λ_{K-1}, ρ)`          |
//! | M4 | cubic, uniform knots      | `λ P + ρ I` (P-spline)                 |
//! | M5 | cubic, log-spaced knots   | least squares, knot count chosen by AIC|
//!
//! M1 and M2 can be swapped with [`PenaltyAssignment::Swapped`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{build_design, default_basis_size, log_knots, eval_basis, BasisSpec, KnotPlacement};
use crate::error::{DlmError, Result};
use crate::numerics::{cholesky, effective_dimension_gram};
use crate::sampler::{
    run_chain, summarize, ChainConfig, ChainSamples, PenaltyEstimate, PosteriorSummary, PriorStructure,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [ModelId::M1, ModelId::M2, ModelId::M3, ModelId::M4, ModelId::M5];

    pub fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", *self as u8 + 1)
    }
}

impl FromStr for ModelId {
    type Err = DlmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" => Ok(ModelId::M1),
            "M2" => Ok(ModelId::M2),
            "M3" => Ok(ModelId::M3),
            "M4" => Ok(ModelId::M4),
            "M5" => Ok(ModelId::M5),
            other => Err(DlmError::InvalidConfig(format!("unknown model '{other}' (expected M1..M5)"))),
        }
    }
}

/// Which single-precision penalty goes with M1 and which with M2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyAssignment {
    /// M1 = lag-increasing ridge, M2 = random walk.
    #[default]
    PenaltyList,
    /// M1 = random walk, M2 = lag-increasing ridge.
    Swapped,
}

/// What M5's effective dimension counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum M5EdReading {
    /// Number of basis functions, `n_interior + degree + 1`.
    #[default]
    BasisFunctions,
    InteriorKnots,
    /// Distinct knots including both boundaries, `n_interior + 2`.
    AllKnots,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitRoute {
    Bayesian,
    AicLeastSquares,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub assignment: PenaltyAssignment,
    pub m5_ed: M5EdReading,
    pub degree: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { assignment: PenaltyAssignment::default(), m5_ed: M5EdReading::default(), degree: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub placement: KnotPlacement,
    /// `None` for the least-squares route.
    pub prior: Option<PriorStructure>,
    pub route: FitRoute,
}

impl ModelSpec {
    pub fn new(id: ModelId, assignment: PenaltyAssignment) -> Self {
        let bayes = |prior| ModelSpec {
            id,
            placement: KnotPlacement::Uniform,
            prior: Some(prior),
            route: FitRoute::Bayesian,
        };
        let swap = assignment == PenaltyAssignment::Swapped;
        match id {
            ModelId::M1 if swap => bayes(PriorStructure::RandomWalk),
            ModelId::M1 => bayes(PriorStructure::IncreasingRidge),
            ModelId::M2 if swap => bayes(PriorStructure::IncreasingRidge),
            ModelId::M2 => bayes(PriorStructure::RandomWalk),
            ModelId::M3 => bayes(PriorStructure::Adaptive),
            ModelId::M4 => bayes(PriorStructure::PSpline),
            ModelId::M5 => ModelSpec {
                id,
                placement: KnotPlacement::Logarithmic,
                prior: None,
                route: FitRoute::AicLeastSquares,
            },
        }
    }

    pub fn all(assignment: PenaltyAssignment) -> Vec<ModelSpec> {
        ModelId::ALL.iter().map(|&id| ModelSpec::new(id, assignment)).collect()
    }
}

/// The log-knot basis chosen for M5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotSelection {
    pub n_interior: usize,
    pub n_basis: usize,
    pub aic: f64,
    /// Set when the selected fit interpolated the data (zero residual sum).
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelId,
    pub p: usize,
    /// Number of basis functions in the fitted lag basis.
    pub k: usize,
    pub summary: PosteriorSummary,
    pub knots: Option<KnotSelection>,
    pub m5_ed: M5EdReading,
    pub elapsed_s: f64,
}

/// Gaussian profile-likelihood AIC, `m log(rss / m) + 2 k`. A zero residual
/// sum gives negative infinity.
pub fn aic(rss: f64, m: usize, k_params: usize) -> f64 {
    if rss <= 0.0 {
        return f64::NEG_INFINITY;
    }
    m as f64 * (rss / m as f64).ln() + 2.0 * k_params as f64
}

/// Rows `p..n` of the response, checked to be finite.
pub fn response_window(y: &[f64], p: usize) -> Result<Vec<f64>> {
    let n = y.len();
    if n <= p {
        return Err(DlmError::SeriesTooShort { n, p });
    }
    let window = y[p..].to_vec();
    if let Some(i) = window.iter().position(|v| !v.is_finite()) {
        return Err(DlmError::InvalidConfig(format!(
            "response is missing at time index {} (needed for lag {p})",
            p + i
        )));
    }
    Ok(window)
}

/// Ordinary least squares on a log-knot basis with `n_interior` knots.
/// Returns `(coefficients, rss, (XᵀX)⁻¹)`.
fn log_knot_ls(
    x: &[f64],
    y_window: &[f64],
    p: usize,
    degree: usize,
    n_interior: usize,
) -> Result<(BasisSpec, crate::basis::BasisMatrix, Vec<f64>, f64, DMatrix<f64>)> {
    let spec = BasisSpec::new(p, n_interior + degree + 1, degree, KnotPlacement::Logarithmic)?;
    let knots = log_knots(p, n_interior as i64, degree)?;
    let lags: Vec<f64> = (0..=p).map(|j| j as f64).collect();
    let basis = eval_basis(&knots, degree, &lags)?;
    let design = build_design(x, &spec, &basis)?;
    let xm = design.matrix();
    let gram = xm.transpose() * xm;
    let factor = cholesky(&gram).map_err(|e| {
        DlmError::LeastSquares(format!("normal equations singular with {n_interior} interior knots: {e}"))
    })?;
    let yv = DVector::from_column_slice(y_window);
    let coef = factor.solve(&(xm.transpose() * &yv))?;
    let rss = (&yv - xm * &coef).norm_squared();
    let inv = factor.solve_matrix(&DMatrix::identity(spec.k, spec.k))?;
    Ok((spec, basis, coef.iter().copied().collect(), rss, inv))
}

/// Largest interior-knot count M5 considers, keeping the basis size at most
/// `floor(2p/3)`.
pub fn m5_max_interior(p: usize, degree: usize) -> usize {
    (2 * p / 3).saturating_sub(degree + 1)
}

/// AIC for every candidate interior-knot count `0..=max_interior`.
/// Candidates with singular normal equations are skipped.
pub fn log_knot_aic_profile(
    x: &[f64],
    y: &[f64],
    p: usize,
    degree: usize,
    max_interior: usize,
) -> Result<Vec<(usize, f64)>> {
    let yw = response_window(y, p)?;
    let m = yw.len();
    let mut out = Vec::new();
    for n_int in 0..=max_interior {
        match log_knot_ls(x, &yw, p, degree, n_int) {
            Ok((spec, _, _, rss, _)) => out.push((n_int, aic(rss, m, spec.k))),
            Err(DlmError::LeastSquares(msg)) => log::debug!("skipping candidate: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn fit_log_knots(x: &[f64], y: &[f64], p: usize, opts: &ModelOptions) -> Result<(PosteriorSummary, KnotSelection, usize)> {
    let degree = opts.degree;
    let profile = log_knot_aic_profile(x, y, p, degree, m5_max_interior(p, degree))?;
    let &(best, best_aic) = profile
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| DlmError::LeastSquares("no candidate knot count gave a solvable fit".into()))?;
    let yw = response_window(y, p)?;
    let (spec, basis, coef, rss, inv) = log_knot_ls(x, &yw, p, degree, best)?;
    let m = yw.len();
    let sigma2 = rss / (m.saturating_sub(spec.k)).max(1) as f64;
    let beta_mean = basis.curve(&coef);
    let bm = basis.matrix();
    let cov = bm * &inv * bm.transpose() * sigma2;
    let half: Vec<f64> = (0..=p).map(|j| 1.959_963_984_540_054 * cov[(j, j)].max(0.0).sqrt()).collect();
    let summary = PosteriorSummary {
        beta_lower: beta_mean.iter().zip(&half).map(|(b, h)| b - h).collect(),
        beta_upper: beta_mean.iter().zip(&half).map(|(b, h)| b + h).collect(),
        beta_mean,
        ed: m5_ed_value(best, spec.k, opts.m5_ed) as f64,
        acceptance_rates: Vec::new(),
        sample_count: 0,
        sigma2_mean: sigma2,
        penalty: PenaltyEstimate::Unpenalized,
    };
    let sel = KnotSelection { n_interior: best, n_basis: spec.k, aic: best_aic, degenerate: best_aic == f64::NEG_INFINITY };
    if sel.degenerate {
        log::warn!("M5 selection is degenerate: zero residual sum with {best} interior knots");
    }
    Ok((summary, sel, spec.k))
}

fn m5_ed_value(n_interior: usize, n_basis: usize, reading: M5EdReading) -> usize {
    match reading {
        M5EdReading::BasisFunctions => n_basis,
        M5EdReading::InteriorKnots => n_interior,
        M5EdReading::AllKnots => n_interior + 2,
    }
}

/// Fits one model to a covariate series `x` and a response `y` of the same
/// length; `y[t]` is used for `t >= p`.
pub fn fit(
    model: &ModelSpec,
    x: &[f64],
    y: &[f64],
    p: usize,
    cfg: &ChainConfig,
    opts: &ModelOptions,
) -> Result<FitResult> {
    fit_with_samples(model, x, y, p, cfg, opts).map(|(f, _)| f)
}

/// As [`fit`], also returning the retained draws of the Bayesian models.
pub fn fit_with_samples(
    model: &ModelSpec,
    x: &[f64],
    y: &[f64],
    p: usize,
    cfg: &ChainConfig,
    opts: &ModelOptions,
) -> Result<(FitResult, Option<ChainSamples>)> {
    if x.len() != y.len() {
        return Err(DlmError::DimensionMismatch(format!(
            "covariate has {} values, response has {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() <= p {
        return Err(DlmError::SeriesTooShort { n: x.len(), p });
    }
    let start = Instant::now();
    match (model.route, model.prior) {
        (FitRoute::AicLeastSquares, _) => {
            let (summary, sel, k) = fit_log_knots(x, y, p, opts)?;
            let fit = FitResult {
                model: model.id,
                p,
                k,
                summary,
                knots: Some(sel),
                m5_ed: opts.m5_ed,
                elapsed_s: start.elapsed().as_secs_f64(),
            };
            Ok((fit, None))
        }
        (FitRoute::Bayesian, Some(prior)) => {
            let spec = BasisSpec::new(p, default_basis_size(p), opts.degree, model.placement)?;
            let basis = spec.lag_basis()?;
            let design = build_design(x, &spec, &basis)?;
            let yw = response_window(y, p)?;
            let samples = run_chain(&yw, design.matrix(), prior, cfg)?;
            let gram = design.matrix().transpose() * design.matrix();
            let summary = summarize(&samples, &basis, &gram)?;
            let fit = FitResult {
                model: model.id,
                p,
                k: spec.k,
                summary,
                knots: None,
                m5_ed: opts.m5_ed,
                elapsed_s: start.elapsed().as_secs_f64(),
            };
            Ok((fit, Some(samples)))
        }
        (FitRoute::Bayesian, None) => Err(DlmError::InvalidConfig("Bayesian model without a prior".into())),
    }
}

/// Effective dimension of a fitted model: the smoother trace at the
/// posterior-mean penalty (on the least-squares scale `σ̂² Ŝ`) for M1–M4,
/// the selected knot count for M5. `design` is the fit's design matrix.
pub fn model_ed(fit: &FitResult, design: &DMatrix<f64>) -> Result<f64> {
    if let Some(sel) = fit.knots {
        return Ok(m5_ed_value(sel.n_interior, sel.n_basis, fit.m5_ed) as f64);
    }
    let k = fit.k;
    if design.ncols() != k {
        return Err(DlmError::DimensionMismatch(format!(
            "design has {} columns, fit has K = {k}",
            design.ncols()
        )));
    }
    let gram = design.transpose() * design;
    let s = fit.summary.penalty.matrix(k) * fit.summary.sigma2_mean;
    effective_dimension_gram(&gram, &s)
}
