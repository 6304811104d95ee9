//! MCMC for Gaussian distributed lag models with Gaussian smoothing priors
//! on the spline coefficients.
//!
//! Model: `y ~ N(X b, σ² I)`, `b ~ N(0, S(θ)⁻¹)`, `σ² ~ IG(1, 1/2)`.
//! The penalty `S(θ)` and its parameters depend on [`PriorStructure`]:
//!
//! | structure         | `S(θ)`                 | parameters in `tau`     |
//! |-------------------|------------------------|-------------------------|
//! | `Adaptive`        | `Q(exp τ, ρ)`          | `τ_k = log λ_k`, K-1    |
//! | `IncreasingRidge` | `λ diag(1..K)`         | `log λ`                 |
//! | `RandomWalk`      | `λ P`                  | `log λ`                 |
//! | `PSpline`         | `λ P + ρ I`            | `(log λ, log ρ)`        |
//!
//! For the adaptive structure the log-precisions carry a random-walk prior
//! `τ | ζ² ~ N(0, ζ² K⁻¹)` with `ζ² ~ IG(1, 1/2)`; that prior leaves the
//! overall level of `τ` flat, so `τ` is confined to `[-tau_bound, tau_bound]`.
//!
//! One iteration updates, in order: `b` (exact Gaussian draw), `σ²`
//! (conjugate), the penalty parameters (Metropolis-Hastings on the log
//! scale, or conjugate Gibbs for the single-precision structures), and `ζ²`
//! (conjugate, adaptive structure only). The adaptive sweep visits each
//! `τ_k` in turn and then proposes a common shift of all of them; the shift
//! moves along the direction the random-walk prior leaves flat, which
//! single-site updates cross slowly.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisMatrix;
use crate::error::{DlmError, Result};
use crate::numerics::{
    cholesky, effective_dimension_gram, quantile_sorted, sample_gaussian_factored, RngStream,
};
use crate::penalty::{build_k_hyper, build_p, rw1_eigenvalues, squared_differences, StructureMatrix};

/// Target acceptance rate for univariate random-walk proposals.
pub const TARGET_ACCEPTANCE: f64 = 0.44;

/// Which smoothing prior sits on the spline coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorStructure {
    Adaptive,
    IncreasingRidge,
    RandomWalk,
    PSpline,
}

impl PriorStructure {
    /// Length of the `tau` vector for `k` spline coefficients.
    pub fn n_tau(self, k: usize) -> usize {
        match self {
            PriorStructure::Adaptive => k - 1,
            PriorStructure::IncreasingRidge | PriorStructure::RandomWalk => 1,
            PriorStructure::PSpline => 2,
        }
    }
}

/// How a single shared precision `λ` is updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SharedPrecisionUpdate {
    /// Conjugate Gamma draw.
    Gibbs,
    /// Random-walk Metropolis-Hastings on `log λ`.
    Metropolis,
}

/// Inverse-Gamma prior with density ∝ x^{-shape-1} exp(-rate / x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Gamma prior with density ∝ x^{shape-1} exp(-rate x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    /// Error variance.
    pub sigma2: InverseGammaPrior,
    /// Variance of the log-precision random walk.
    pub zeta2: InverseGammaPrior,
    /// Prior on the variance `1/λ` of the single-precision structures.
    /// `IG(0, 0)` is flat on `log λ` (within the bound).
    pub shared_variance: InverseGammaPrior,
    /// P-spline smoothing precision `λ`.
    pub pspline_lambda: GammaPrior,
    /// P-spline ridge precision `ρ`.
    pub pspline_rho: GammaPrior,
    /// Extra ridge added to the log-precision structure, `K + tau_ridge·I`.
    /// Zero gives the intrinsic random-walk prior.
    pub tau_ridge: f64,
}

impl Default for Priors {
    fn default() -> Self {
        let weak = InverseGammaPrior { shape: 1.0, rate: 0.5 };
        Self {
            sigma2: weak,
            zeta2: weak,
            shared_variance: weak,
            pspline_lambda: GammaPrior { shape: 1.0, rate: 1.0 },
            pspline_rho: GammaPrior { shape: 1.0, rate: 1.0 },
            tau_ridge: 0.0,
        }
    }
}

/// Blocks held fixed at their initial values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrozenBlocks {
    pub sigma2: bool,
    pub penalty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial random-walk sd on the log-precision scale.
    pub proposal_sd: f64,
    /// Corner precision of the adaptive structure (fixed).
    pub rho: f64,
    pub seed: u64,
    /// Robbins-Monro tuning of proposal sds during burn-in.
    pub adapt_proposals: bool,
    /// Log-precisions are confined to `[-tau_bound, tau_bound]`.
    pub tau_bound: f64,
    pub priors: Priors,
    pub shared_update: SharedPrecisionUpdate,
    pub frozen: FrozenBlocks,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 10_000,
            burn_in: 2_000,
            thin: 1,
            proposal_sd: 0.5,
            rho: 1.0,
            seed: 0,
            adapt_proposals: true,
            tau_bound: 20.0,
            priors: Priors::default(),
            shared_update: SharedPrecisionUpdate::Gibbs,
            frozen: FrozenBlocks::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DlmError::InvalidConfig(m));
        if self.n_iter == 0 {
            return bad("n_iter must be positive".into());
        }
        if self.burn_in >= self.n_iter {
            return bad(format!("burn_in ({}) must be below n_iter ({})", self.burn_in, self.n_iter));
        }
        if self.thin == 0 {
            return bad("thin must be positive".into());
        }
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return bad(format!("proposal_sd = {} must be positive", self.proposal_sd));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho = {} must be non-negative", self.rho));
        }
        if !(self.tau_bound > 0.0) {
            return bad("tau_bound must be positive".into());
        }
        let sv = self.priors.shared_variance;
        if !(sv.shape >= 0.0 && sv.rate >= 0.0) {
            return bad("shared_variance shape and rate must be non-negative".into());
        }
        if self.priors.tau_ridge < 0.0 {
            return bad("tau_ridge must be non-negative".into());
        }
        Ok(())
    }

    /// Number of retained draws.
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub b: Vec<f64>,
    /// Log-precisions; layout depends on the prior structure.
    pub tau: Vec<f64>,
    pub sigma2: f64,
    pub zeta2: f64,
}

/// Sufficient statistics of the Gaussian likelihood.
#[derive(Clone, Debug)]
pub struct LinearData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl LinearData {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(DlmError::DimensionMismatch(format!(
                "design has {} rows, response has {} values",
                x.nrows(),
                y.len()
            )));
        }
        let y = DVector::from_column_slice(y);
        let gram = x.transpose() * x;
        let xty = x.transpose() * &y;
        Ok(Self { x: x.clone(), y, gram, xty })
    }

    pub fn set_response(&mut self, y: &[f64]) -> Result<()> {
        if y.len() != self.y.len() {
            return Err(DlmError::DimensionMismatch("replacement response has a different length".into()));
        }
        self.y = DVector::from_column_slice(y);
        self.xty = self.x.transpose() * &self.y;
        Ok(())
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn residuals(&self, b: &[f64]) -> DVector<f64> {
        &self.y - &self.x * DVector::from_column_slice(b)
    }
}

/// Prior precision `S(θ)` for the current penalty parameters.
pub fn prior_precision(prior: PriorStructure, tau: &[f64], rho: f64, k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(k, k);
    match prior {
        PriorStructure::Adaptive => {
            for i in 0..k - 1 {
                let l = tau[i].exp();
                s[(i, i)] += l;
                s[(i + 1, i + 1)] += l;
                s[(i, i + 1)] = -l;
                s[(i + 1, i)] = -l;
            }
            s[(k - 1, k - 1)] += rho;
        }
        PriorStructure::IncreasingRidge => {
            let l = tau[0].exp();
            for i in 0..k {
                s[(i, i)] = l * (i + 1) as f64;
            }
        }
        PriorStructure::RandomWalk | PriorStructure::PSpline => {
            let l = tau[0].exp();
            for i in 0..k - 1 {
                s[(i, i)] += l;
                s[(i + 1, i + 1)] += l;
                s[(i, i + 1)] = -l;
                s[(i + 1, i)] = -l;
            }
            if prior == PriorStructure::PSpline {
                let r = tau[1].exp();
                for i in 0..k {
                    s[(i, i)] += r;
                }
            }
        }
    }
    s
}

/// Exact draw of `b` from `N(A⁻¹ Xᵀy / σ², A⁻¹)`, `A = XᵀX / σ² + S`.
pub fn update_b(
    sigma2: f64,
    data: &LinearData,
    prior_precision: &DMatrix<f64>,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let a = data.gram() / sigma2 + prior_precision;
    let factor = cholesky(&a)?;
    let h = &data.xty / sigma2;
    Ok(sample_gaussian_factored(rng, &factor, &h)?.iter().copied().collect())
}

/// Conjugate draw `σ² ~ IG(shape + m/2, rate + RSS/2)`.
pub fn update_sigma2(residuals: &[f64], prior: &InverseGammaPrior, rng: &mut RngStream) -> f64 {
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    rng.inverse_gamma(prior.shape + 0.5 * residuals.len() as f64, prior.rate + 0.5 * rss)
}

/// `τᵀ (K + ridge·I) τ`.
fn hyper_quadratic(tau: &[f64], khyper: &StructureMatrix, ridge: f64) -> f64 {
    khyper.quadratic_form(tau) + ridge * tau.iter().map(|t| t * t).sum::<f64>()
}

/// Conjugate draw `ζ² ~ IG(shape + r/2, rate + τᵀKτ / 2)` with `r` the rank
/// of the hyper-prior structure.
pub fn update_zeta2(
    tau: &[f64],
    khyper: &StructureMatrix,
    prior: &InverseGammaPrior,
    tau_ridge: f64,
    rng: &mut RngStream,
) -> f64 {
    let m = tau.len();
    let rank = if tau_ridge > 0.0 { m } else { m - 1 };
    let quad = hyper_quadratic(tau, khyper, tau_ridge);
    rng.inverse_gamma(prior.shape + 0.5 * rank as f64, prior.rate + 0.5 * quad)
}

/// Inputs of one Metropolis-Hastings sweep over the adaptive log-precisions.
pub struct TauSweep<'a> {
    pub b: &'a [f64],
    pub zeta2: f64,
    pub khyper: &'a StructureMatrix,
    pub tau_ridge: f64,
    pub bound: f64,
    pub proposal_sds: &'a [f64],
}

/// One random-walk sweep over `τ_1..τ_{K-1}`. The target is
/// `log N(b | 0, Q(exp τ, ρ)⁻¹) + log N(τ | 0, ζ² K⁻¹)`; since
/// `log det Q = log ρ + Σ τ_k`, each coordinate's log-ratio is local.
/// Returns one acceptance flag per coordinate.
pub fn update_tau(tau: &mut [f64], sweep: &TauSweep<'_>, rng: &mut RngStream) -> Vec<bool> {
    let m = tau.len();
    let kmat = sweep.khyper.matrix();
    let mut accepted = vec![false; m];
    for k in 0..m {
        let cur = tau[k];
        let prop = cur + sweep.proposal_sds[k] * rng.standard_normal();
        let u = rng.uniform();
        if prop.abs() > sweep.bound {
            continue;
        }
        let d2 = (sweep.b[k + 1] - sweep.b[k]).powi(2);
        let delta = prop - cur;
        let m_tau_k: f64 = (0..m).map(|j| kmat[(k, j)] * tau[j]).sum::<f64>() + sweep.tau_ridge * cur;
        let m_kk = kmat[(k, k)] + sweep.tau_ridge;
        let d_quad = 2.0 * delta * m_tau_k + delta * delta * m_kk;
        let log_ratio =
            0.5 * delta - 0.5 * (prop.exp() - cur.exp()) * d2 - 0.5 * d_quad / sweep.zeta2;
        if log_ratio >= 0.0 || u < log_ratio.exp() {
            tau[k] = prop;
            accepted[k] = true;
        }
    }
    accepted
}

/// Random-walk move of the common level, `τ → τ + δ·1`. The random-walk
/// part of the hyper-prior is invariant to the shift, so only the `b`
/// density and the optional ridge enter the ratio.
pub fn update_tau_level(tau: &mut [f64], sweep: &TauSweep<'_>, sd: f64, rng: &mut RngStream) -> bool {
    let delta = sd * rng.standard_normal();
    let u = rng.uniform();
    if tau.iter().any(|t| (t + delta).abs() > sweep.bound) {
        return false;
    }
    let m = tau.len() as f64;
    let mut log_ratio = 0.5 * m * delta;
    for (k, t) in tau.iter().enumerate() {
        let d2 = (sweep.b[k + 1] - sweep.b[k]).powi(2);
        log_ratio -= 0.5 * ((t + delta).exp() - t.exp()) * d2;
    }
    if sweep.tau_ridge > 0.0 {
        let sum: f64 = tau.iter().sum();
        log_ratio -= 0.5 * sweep.tau_ridge * (2.0 * delta * sum + m * delta * delta) / sweep.zeta2;
    }
    if log_ratio >= 0.0 || u < log_ratio.exp() {
        for t in tau.iter_mut() {
            *t += delta;
        }
        true
    } else {
        false
    }
}

/// Conjugate draw of `t = log λ` for a single precision given `q = bᵀS₀b`
/// for a base structure `S₀` of the given rank, under `1/λ ~ IG(shape, rate)`
/// restricted to `|t| <= bound`. With `shape = rate = 0` the prior is flat
/// on `t`.
pub fn update_shared_precision_gibbs(
    quad: f64,
    rank: usize,
    prior: &InverseGammaPrior,
    bound: f64,
    rng: &mut RngStream,
) -> f64 {
    sample_truncated_log_gamma(prior.shape + 0.5 * rank as f64, prior.rate + 0.5 * quad, bound, rng)
}

/// Exact draw of `t` with density ∝ `exp(a t - r e^t)` on `[-bound, bound]`.
/// Inside the window the untruncated Gamma is used with rejection; when the
/// mode lies outside, the log-density (concave) is enveloped by its tangent
/// at the nearer end.
fn sample_truncated_log_gamma(a: f64, r: f64, bound: f64, rng: &mut RngStream) -> f64 {
    let log_f = |t: f64| a * t - r * t.exp();
    let mode = if r > 0.0 { (a / r).ln() } else { f64::INFINITY };
    if mode.abs() <= bound {
        loop {
            let t = rng.gamma(a, r).ln();
            if t.abs() <= bound {
                return t;
            }
        }
    }
    let edge = if mode > bound { bound } else { -bound };
    let slope = a - r * edge.exp();
    loop {
        let t = sample_exp_slope(slope, -bound, bound, rng.uniform());
        let log_accept = log_f(t) - log_f(edge) - slope * (t - edge);
        if log_accept >= 0.0 || rng.uniform().ln() < log_accept {
            return t;
        }
    }
}

/// Inverse-CDF draw from the density ∝ `exp(s t)` on `[lo, hi]`.
fn sample_exp_slope(s: f64, lo: f64, hi: f64, u: f64) -> f64 {
    let w = hi - lo;
    if (s * w).abs() < 1e-12 {
        lo + u * w
    } else if s > 0.0 {
        (hi + (u + (1.0 - u) * (-s * w).exp()).ln() / s).clamp(lo, hi)
    } else {
        (lo + (u + (1.0 - u) * (s * w).exp()).ln() / s).clamp(lo, hi)
    }
}

/// Log posterior kernel of `t = log λ` for a single-precision structure
/// (Jacobian included).
fn shared_log_target(t: f64, quad: f64, rank: usize, prior: &InverseGammaPrior) -> f64 {
    (0.5 * rank as f64 + prior.shape) * t - (0.5 * quad + prior.rate) * t.exp()
}

/// Log posterior kernel of `(log λ, log ρ)` for the P-spline structure.
fn pspline_log_target(t: &[f64], q_p: f64, q_i: f64, eigs: &[f64], priors: &Priors) -> f64 {
    let (lam, rho) = (t[0].exp(), t[1].exp());
    let log_det: f64 = eigs.iter().map(|mu| (lam * mu + rho).ln()).sum();
    0.5 * log_det - 0.5 * (lam * q_p + rho * q_i)
        + priors.pspline_lambda.shape * t[0]
        - priors.pspline_lambda.rate * lam
        + priors.pspline_rho.shape * t[1]
        - priors.pspline_rho.rate * rho
}

/// One retained draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub b: Vec<f64>,
    pub tau: Vec<f64>,
    pub sigma2: f64,
    pub zeta2: f64,
}

#[derive(Clone, Debug)]
pub struct ChainSamples {
    pub prior: PriorStructure,
    pub rho: f64,
    pub draws: Vec<Draw>,
    /// Post-burn-in acceptance rate of each Metropolis coordinate (empty when
    /// every penalty update is conjugate). For the adaptive structure the
    /// last entry belongs to the level shift.
    pub acceptance_rates: Vec<f64>,
    /// Proposal sds after burn-in tuning.
    pub proposal_sds: Vec<f64>,
}

/// Stateful sweep engine; [`run_chain`] drives it.
pub struct Sampler {
    data: LinearData,
    prior: PriorStructure,
    cfg: ChainConfig,
    khyper: Option<StructureMatrix>,
    base_rw: Option<StructureMatrix>,
    pspline_eigs: Vec<f64>,
    log_sds: Vec<f64>,
    accepts: Vec<u64>,
    proposals: Vec<u64>,
}

impl Sampler {
    pub fn new(data: LinearData, prior: PriorStructure, cfg: &ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let k = data.n_coef();
        if k < 2 {
            return Err(DlmError::InvalidConfig("need at least two spline coefficients".into()));
        }
        let khyper = match prior {
            PriorStructure::Adaptive if k >= 3 => Some(build_k_hyper(k - 1)?),
            PriorStructure::Adaptive => None,
            _ => None,
        };
        let base_rw = match prior {
            PriorStructure::RandomWalk | PriorStructure::PSpline => Some(build_p(k)?),
            _ => None,
        };
        let pspline_eigs = if prior == PriorStructure::PSpline { rw1_eigenvalues(k) } else { Vec::new() };
        let n_mh = match (prior, cfg.shared_update) {
            // The adaptive structure has one extra slot for the level move.
            (PriorStructure::Adaptive, _) if k >= 3 => k,
            (PriorStructure::Adaptive, _) | (PriorStructure::PSpline, _) => prior.n_tau(k),
            (_, SharedPrecisionUpdate::Metropolis) => 1,
            (_, SharedPrecisionUpdate::Gibbs) => 0,
        };
        Ok(Self {
            data,
            prior,
            cfg: cfg.clone(),
            khyper,
            base_rw,
            pspline_eigs,
            log_sds: vec![cfg.proposal_sd.ln(); n_mh],
            accepts: vec![0; n_mh],
            proposals: vec![0; n_mh],
        })
    }

    pub fn data(&self) -> &LinearData {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut LinearData {
        &mut self.data
    }

    /// Starting point: penalized least squares at unit precisions, `τ = 0`,
    /// `σ²` at the sample variance of `y`, `ζ² = 1`.
    pub fn initial_state(&self) -> Result<ChainState> {
        let k = self.data.n_coef();
        let mut tau = vec![0.0; self.prior.n_tau(k)];
        if self.prior == PriorStructure::PSpline {
            tau[1] = self.cfg.rho.max(f64::MIN_POSITIVE).ln().clamp(-self.cfg.tau_bound, self.cfg.tau_bound);
        }
        let s = prior_precision(self.prior, &tau, self.cfg.rho, k);
        let factor = cholesky(&(self.data.gram() + s))?;
        let b: Vec<f64> = factor.solve(&self.data.xty)?.iter().copied().collect();
        let y = self.data.response();
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sigma2 = if var > 0.0 && var.is_finite() { var } else { 1.0 };
        Ok(ChainState { b, tau, sigma2, zeta2: 1.0 })
    }

    fn record(&mut self, slot: usize, accepted: bool, iter: usize) {
        if iter >= self.cfg.burn_in {
            self.proposals[slot] += 1;
            if accepted {
                self.accepts[slot] += 1;
            }
        } else if self.cfg.adapt_proposals {
            let gain = ((iter + 1) as f64).powf(-0.6);
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_sds[slot] = (self.log_sds[slot] + gain * (a - TARGET_ACCEPTANCE)).clamp(-9.0, 4.0);
        }
    }

    fn mh_scalar(
        &mut self,
        slot: usize,
        current: f64,
        mut log_target: impl FnMut(f64) -> f64,
        iter: usize,
        rng: &mut RngStream,
    ) -> f64 {
        let prop = current + self.log_sds[slot].exp() * rng.standard_normal();
        let u = rng.uniform();
        let accepted = prop.abs() <= self.cfg.tau_bound && {
            let lr = log_target(prop) - log_target(current);
            lr >= 0.0 || u < lr.exp()
        };
        self.record(slot, accepted, iter);
        if accepted { prop } else { current }
    }

    /// One full sweep. `iter` drives burn-in adaptation and acceptance
    /// bookkeeping.
    pub fn sweep(&mut self, state: &mut ChainState, iter: usize, rng: &mut RngStream) -> Result<()> {
        let k = self.data.n_coef();
        let s = prior_precision(self.prior, &state.tau, self.cfg.rho, k);
        state.b = update_b(state.sigma2, &self.data, &s, rng)?;

        if !self.cfg.frozen.sigma2 {
            let resid = self.data.residuals(&state.b);
            state.sigma2 = update_sigma2(resid.as_slice(), &self.cfg.priors.sigma2, rng);
        }

        if self.cfg.frozen.penalty {
            return Ok(());
        }
        let priors = self.cfg.priors;
        match self.prior {
            PriorStructure::Adaptive => {
                let Some(khyper) = self.khyper.clone() else {
                    // K = 2: a single log-precision with a flat prior.
                    let d2 = squared_differences(&state.b);
                    let t = self.mh_scalar(0, state.tau[0], |t| 0.5 * t - 0.5 * t.exp() * d2, iter, rng);
                    state.tau[0] = t;
                    return Ok(());
                };
                let sds: Vec<f64> = self.log_sds.iter().map(|l| l.exp()).collect();
                let sweep = TauSweep {
                    b: &state.b,
                    zeta2: state.zeta2,
                    khyper: &khyper,
                    tau_ridge: priors.tau_ridge,
                    bound: self.cfg.tau_bound,
                    proposal_sds: &sds,
                };
                let flags = update_tau(&mut state.tau, &sweep, rng);
                for (slot, acc) in flags.into_iter().enumerate() {
                    self.record(slot, acc, iter);
                }
                let level = k - 1;
                let acc = update_tau_level(&mut state.tau, &sweep, self.log_sds[level].exp(), rng);
                self.record(level, acc, iter);
                state.zeta2 = update_zeta2(&state.tau, &khyper, &priors.zeta2, priors.tau_ridge, rng);
            }
            PriorStructure::IncreasingRidge | PriorStructure::RandomWalk => {
                let (quad, rank) = if self.prior == PriorStructure::IncreasingRidge {
                    (state.b.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum(), k)
                } else {
                    (squared_differences(&state.b), k - 1)
                };
                let prior = priors.shared_variance;
                state.tau[0] = match self.cfg.shared_update {
                    SharedPrecisionUpdate::Gibbs => {
                        update_shared_precision_gibbs(quad, rank, &prior, self.cfg.tau_bound, rng)
                    }
                    SharedPrecisionUpdate::Metropolis => self.mh_scalar(
                        0,
                        state.tau[0],
                        |t| shared_log_target(t, quad, rank, &prior),
                        iter,
                        rng,
                    ),
                };
            }
            PriorStructure::PSpline => {
                let q_p = self.base_rw.as_ref().map(|p| p.quadratic_form(&state.b)).unwrap_or(0.0);
                let q_i: f64 = state.b.iter().map(|v| v * v).sum();
                let eigs = std::mem::take(&mut self.pspline_eigs);
                for slot in 0..2 {
                    let mut t = state.tau.clone();
                    let cur = t[slot];
                    let new = self.mh_scalar(
                        slot,
                        cur,
                        |v| {
                            t[slot] = v;
                            pspline_log_target(&t, q_p, q_i, &eigs, &priors)
                        },
                        iter,
                        rng,
                    );
                    state.tau[slot] = new;
                }
                self.pspline_eigs = eigs;
            }
        }
        Ok(())
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepts
            .iter()
            .zip(&self.proposals)
            .map(|(&a, &n)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
            .collect()
    }

    pub fn proposal_sds(&self) -> Vec<f64> {
        self.log_sds.iter().map(|l| l.exp()).collect()
    }
}

/// Runs a chain from the default starting point.
pub fn run_chain(
    y: &[f64],
    x: &DMatrix<f64>,
    prior: PriorStructure,
    cfg: &ChainConfig,
) -> Result<ChainSamples> {
    let sampler = Sampler::new(LinearData::new(x, y)?, prior, cfg)?;
    let init = sampler.initial_state()?;
    drive(sampler, init, cfg)
}

/// Runs a chain from a caller-supplied state.
pub fn run_chain_from(
    y: &[f64],
    x: &DMatrix<f64>,
    prior: PriorStructure,
    cfg: &ChainConfig,
    init: ChainState,
) -> Result<ChainSamples> {
    let k = x.ncols();
    if init.b.len() != k || init.tau.len() != prior.n_tau(k) {
        return Err(DlmError::DimensionMismatch("initial state does not match the model".into()));
    }
    let sampler = Sampler::new(LinearData::new(x, y)?, prior, cfg)?;
    drive(sampler, init, cfg)
}

fn drive(mut sampler: Sampler, mut state: ChainState, cfg: &ChainConfig) -> Result<ChainSamples> {
    let mut rng = RngStream::new(cfg.seed);
    let mut draws = Vec::with_capacity(cfg.n_retained());
    for iter in 0..cfg.n_iter {
        sampler
            .sweep(&mut state, iter, &mut rng)
            .map_err(|e| DlmError::Sampler { iteration: iter, source: Box::new(e) })?;
        if iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 {
            draws.push(Draw {
                iteration: iter,
                b: state.b.clone(),
                tau: state.tau.clone(),
                sigma2: state.sigma2,
                zeta2: state.zeta2,
            });
        }
    }
    Ok(ChainSamples {
        prior: sampler.prior,
        rho: cfg.rho,
        draws,
        acceptance_rates: sampler.acceptance_rates(),
        proposal_sds: sampler.proposal_sds(),
    })
}

/// Posterior-mean penalty parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "snake_case")]
pub enum PenaltyEstimate {
    Adaptive { lambdas: Vec<f64>, rho: f64 },
    IncreasingRidge { lambda: f64 },
    RandomWalk { lambda: f64 },
    PSpline { lambda: f64, rho: f64 },
    /// No penalty (least-squares fits).
    Unpenalized,
}

impl PenaltyEstimate {
    pub fn from_samples(samples: &ChainSamples) -> Result<Self> {
        let n = samples.draws.len();
        if n == 0 {
            return Err(DlmError::EmptySamples);
        }
        let m = samples.draws[0].tau.len();
        let mut means = vec![0.0; m];
        for d in &samples.draws {
            for (acc, t) in means.iter_mut().zip(&d.tau) {
                *acc += t.exp();
            }
        }
        means.iter_mut().for_each(|v| *v /= n as f64);
        Ok(match samples.prior {
            PriorStructure::Adaptive => PenaltyEstimate::Adaptive { lambdas: means, rho: samples.rho },
            PriorStructure::IncreasingRidge => PenaltyEstimate::IncreasingRidge { lambda: means[0] },
            PriorStructure::RandomWalk => PenaltyEstimate::RandomWalk { lambda: means[0] },
            PriorStructure::PSpline => PenaltyEstimate::PSpline { lambda: means[0], rho: means[1] },
        })
    }

    /// Prior precision matrix evaluated at these parameters.
    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        if let PenaltyEstimate::Unpenalized = self {
            return DMatrix::zeros(k, k);
        }
        let (prior, tau, rho): (PriorStructure, Vec<f64>, f64) = match self {
            PenaltyEstimate::Adaptive { lambdas, rho } => {
                (PriorStructure::Adaptive, lambdas.iter().map(|l| l.ln()).collect(), *rho)
            }
            PenaltyEstimate::IncreasingRidge { lambda } => (PriorStructure::IncreasingRidge, vec![lambda.ln()], 0.0),
            PenaltyEstimate::RandomWalk { lambda } => (PriorStructure::RandomWalk, vec![lambda.ln()], 0.0),
            PenaltyEstimate::PSpline { lambda, rho } => {
                (PriorStructure::PSpline, vec![lambda.ln(), rho.ln()], 0.0)
            }
            PenaltyEstimate::Unpenalized => unreachable!(),
        };
        prior_precision(prior, &tau, rho, k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub beta_mean: Vec<f64>,
    pub beta_lower: Vec<f64>,
    pub beta_upper: Vec<f64>,
    pub ed: f64,
    pub acceptance_rates: Vec<f64>,
    pub sample_count: usize,
    pub sigma2_mean: f64,
    pub penalty: PenaltyEstimate,
}

/// Lag-curve posterior mean, pointwise 95% bands, and the effective
/// dimension `tr[(XᵀX + σ̂² Ŝ)⁻¹ XᵀX]` at the posterior-mean penalty.
/// `σ̂² Ŝ` is the penalty on the least-squares scale.
pub fn summarize(samples: &ChainSamples, basis: &BasisMatrix, gram: &DMatrix<f64>) -> Result<PosteriorSummary> {
    let n = samples.draws.len();
    if n == 0 {
        return Err(DlmError::EmptySamples);
    }
    let k = basis.n_basis();
    if gram.nrows() != k || samples.draws[0].b.len() != k {
        return Err(DlmError::DimensionMismatch("basis, design and samples disagree on K".into()));
    }
    let lags = basis.n_points();
    let mut curves: Vec<Vec<f64>> = vec![Vec::with_capacity(n); lags];
    for d in &samples.draws {
        for (j, v) in basis.curve(&d.b).into_iter().enumerate() {
            curves[j].push(v);
        }
    }
    let mut beta_mean = Vec::with_capacity(lags);
    let mut beta_lower = Vec::with_capacity(lags);
    let mut beta_upper = Vec::with_capacity(lags);
    for mut c in curves {
        let mean = c.iter().sum::<f64>() / n as f64;
        c.sort_by(f64::total_cmp);
        beta_lower.push(quantile_sorted(&c, 0.025).min(mean));
        beta_upper.push(quantile_sorted(&c, 0.975).max(mean));
        beta_mean.push(mean);
    }
    let sigma2_mean = samples.draws.iter().map(|d| d.sigma2).sum::<f64>() / n as f64;
    let penalty = PenaltyEstimate::from_samples(samples)?;
    let ed = effective_dimension_gram(gram, &(penalty.matrix(k) * sigma2_mean))?;
    Ok(PosteriorSummary {
        beta_mean,
        beta_lower,
        beta_upper,
        ed,
        acceptance_rates: samples.acceptance_rates.clone(),
        sample_count: n,
        sigma2_mean,
        penalty,
    })
}

/// Writes one CSV record per retained draw:
/// `iteration,b1..bK,tau1..tauM,sigma2,zeta2`.
pub fn write_samples_csv<W: Write>(samples: &ChainSamples, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = samples.draws.first() else {
        return Ok(());
    };
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=first.b.len()).map(|i| format!("b{i}")));
    header.extend((1..=first.tau.len()).map(|i| format!("tau{i}")));
    header.push("sigma2".into());
    header.push("zeta2".into());
    w.write_record(&header)?;
    for d in &samples.draws {
        let mut rec = vec![d.iteration.to_string()];
        rec.extend(d.b.iter().map(|v| v.to_string()));
        rec.extend(d.tau.iter().map(|v| v.to_string()));
        rec.push(d.sigma2.to_string());
        rec.push(d.zeta2.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
