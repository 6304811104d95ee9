//! Synthetic lag-curve scenarios, AR(1) data generation, error metrics and
//! the replicated comparison studies.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DlmError, Result};
use crate::models::{fit, ModelId, ModelOptions, ModelSpec};
use crate::numerics::{derive_seed, RngStream};
use crate::sampler::ChainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    DelayedPeak,
    DecayCurve,
    FlatResponse,
    Displacement,
    SharpPeak,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::DelayedPeak,
        Scenario::DecayCurve,
        Scenario::FlatResponse,
        Scenario::Displacement,
        Scenario::SharpPeak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DelayedPeak => "delayed_peak",
            Scenario::DecayCurve => "decay_curve",
            Scenario::FlatResponse => "flat_response",
            Scenario::Displacement => "displacement",
            Scenario::SharpPeak => "sharp_peak",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = DlmError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.as_str() {
            "delayedpeak" => Ok(Scenario::DelayedPeak),
            "decaycurve" | "decay" => Ok(Scenario::DecayCurve),
            "flatresponse" | "flat" | "nullcurve" | "null" => Ok(Scenario::FlatResponse),
            "displacement" => Ok(Scenario::Displacement),
            "sharppeak" => Ok(Scenario::SharpPeak),
            _ => Err(DlmError::InvalidConfig(format!("unknown scenario '{s}'"))),
        }
    }
}

/// Shape parameters of the true lag curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveParams {
    pub decay_amplitude: f64,
    pub decay_scale: f64,
    pub delayed_amplitude: f64,
    pub delayed_centre: f64,
    pub delayed_width: f64,
    pub sharp_amplitude: f64,
    pub sharp_scale: f64,
    pub displacement_amplitude: f64,
    pub displacement_centre: f64,
    pub displacement_width: f64,
    pub displacement_dip: f64,
    pub displacement_dip_centre: f64,
    pub displacement_dip_width: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            decay_amplitude: 0.10,
            decay_scale: 7.0,
            delayed_amplitude: 0.10,
            delayed_centre: 12.0,
            delayed_width: 5.0,
            sharp_amplitude: 0.15,
            sharp_scale: 1.5,
            displacement_amplitude: 0.10,
            displacement_centre: 4.0,
            displacement_width: 3.0,
            displacement_dip: 0.05,
            displacement_dip_centre: 18.0,
            displacement_dip_width: 6.0,
        }
    }
}

fn bump(j: f64, centre: f64, width: f64) -> f64 {
    (-(j - centre).powi(2) / (2.0 * width * width)).exp()
}

/// True coefficients `β_0..β_p` with the default shapes.
pub fn lag_curve(s: Scenario, p: usize) -> Vec<f64> {
    lag_curve_with(s, p, &CurveParams::default())
}

pub fn lag_curve_with(s: Scenario, p: usize, c: &CurveParams) -> Vec<f64> {
    (0..=p)
        .map(|j| {
            let j = j as f64;
            match s {
                Scenario::FlatResponse => 0.0,
                Scenario::DecayCurve => c.decay_amplitude * (-j / c.decay_scale).exp(),
                Scenario::SharpPeak => c.sharp_amplitude * (-j / c.sharp_scale).exp(),
                Scenario::DelayedPeak => c.delayed_amplitude * bump(j, c.delayed_centre, c.delayed_width),
                Scenario::Displacement => {
                    c.displacement_amplitude * bump(j, c.displacement_centre, c.displacement_width)
                        - c.displacement_dip * bump(j, c.displacement_dip_centre, c.displacement_dip_width)
                }
            }
        })
        .collect()
}

/// Extends a curve with zeros up to lag `p`.
pub fn pad_curve(beta: &[f64], p: usize) -> Vec<f64> {
    let mut out = beta.to_vec();
    out.resize(out.len().max(p + 1), 0.0);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p_true: usize,
    pub phi_x: f64,
    pub sd_x: f64,
    pub phi_e: f64,
    pub sd_e: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub curves: CurveParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            p_true: 50,
            phi_x: 0.5,
            sd_x: 0.1,
            phi_e: 0.2,
            sd_e: 0.1,
            reps: 200,
            master_seed: 0,
            curves: CurveParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DlmError::InvalidConfig(m));
        if !(self.phi_x.abs() < 1.0) || !(self.phi_e.abs() < 1.0) {
            return bad(format!(
                "AR coefficients must lie in (-1, 1); got phi_x = {}, phi_e = {}",
                self.phi_x, self.phi_e
            ));
        }
        if !(self.sd_x >= 0.0) || !(self.sd_e >= 0.0) {
            return bad("innovation sds must be non-negative".into());
        }
        if self.n <= self.p_true {
            return bad(format!("series length n = {} must exceed p_true = {}", self.n, self.p_true));
        }
        if self.p_true < 1 {
            return bad("p_true must be at least 1".into());
        }
        Ok(())
    }
}

/// Stationary AR(1): `z_1 ~ N(0, sd² / (1 - φ²))`, `z_t ~ N(φ z_{t-1}, sd²)`.
pub fn gen_ar1(n: usize, phi: f64, sd: f64, rng: &mut RngStream) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut z = rng.normal(0.0, sd / (1.0 - phi * phi).sqrt());
    out.push(z);
    for _ in 1..n {
        z = phi * z + sd * rng.standard_normal();
        out.push(z);
    }
    out
}

pub fn gen_covariate(cfg: &SimConfig, rng: &mut RngStream) -> Vec<f64> {
    gen_ar1(cfg.n, cfg.phi_x, cfg.sd_x, rng)
}

/// `y_t = Σ_j β_j x_{t-j} + ε_t` with AR(1) errors, defined for
/// `t >= len(β) - 1`; earlier entries are NaN.
pub fn gen_response(x: &[f64], beta: &[f64], cfg: &SimConfig, rng: &mut RngStream) -> Vec<f64> {
    let p = beta.len() - 1;
    let noise = gen_ar1(x.len(), cfg.phi_e, cfg.sd_e, rng);
    (0..x.len())
        .map(|t| {
            if t < p {
                f64::NAN
            } else {
                beta.iter().enumerate().map(|(j, b)| b * x[t - j]).sum::<f64>() + noise[t]
            }
        })
        .collect()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(DlmError::DimensionMismatch(format!(
            "curves have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Root mean squared pointwise error.
pub fn rmse(beta_hat: &[f64], beta_true: &[f64]) -> Result<f64> {
    check_lengths(beta_hat, beta_true)?;
    let sse: f64 = beta_hat.iter().zip(beta_true).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / beta_hat.len() as f64).sqrt())
}

/// Squared mean pointwise error.
pub fn bias2(beta_hat: &[f64], beta_true: &[f64]) -> Result<f64> {
    check_lengths(beta_hat, beta_true)?;
    let mean: f64 = beta_hat.iter().zip(beta_true).map(|(a, b)| a - b).sum::<f64>() / beta_hat.len() as f64;
    Ok(mean * mean)
}

/// One aggregated cell of a study table. RMSE and Bias² are scaled by 10³.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: Scenario,
    pub model: ModelId,
    pub p: usize,
    pub rmse_x1e3: f64,
    pub bias2_x1e3: f64,
    pub ed: f64,
    pub reps: usize,
    pub failures: usize,
}

/// Per-replicate outcome, unscaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub scenario: Scenario,
    pub model: ModelId,
    pub p: usize,
    pub replicate: usize,
    pub rmse: Option<f64>,
    pub bias2: Option<f64>,
    pub ed: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub rows: Vec<StudyRow>,
    pub replicates: Vec<ReplicateRecord>,
}

const DATA_STREAM: u64 = 0xD474;
const CHAIN_STREAM: u64 = 0xC4A1;

/// Simulated `(x, y)` for one scenario and replicate. The seed depends only on
/// the master seed, scenario and replicate, so every model sees the same data.
pub fn replicate_data(scenario: Scenario, replicate: usize, cfg: &SimConfig) -> (Vec<f64>, Vec<f64>) {
    let mut rng = RngStream::derive(cfg.master_seed, &[DATA_STREAM, scenario.index(), replicate as u64]);
    let beta = lag_curve_with(scenario, cfg.p_true, &cfg.curves);
    let x = gen_covariate(cfg, &mut rng);
    let y = gen_response(&x, &beta, cfg, &mut rng);
    (x, y)
}

/// Chain seed for one (scenario, model, p, replicate) cell.
pub fn replicate_chain_seed(master: u64, scenario: Scenario, model: ModelId, p: usize, replicate: usize) -> u64 {
    derive_seed(master, &[CHAIN_STREAM, scenario.index(), model.index(), p as u64, replicate as u64])
}

#[derive(Clone, Copy)]
struct Task {
    scenario: Scenario,
    model: ModelSpec,
    p: usize,
    replicate: usize,
}

fn run_task(task: Task, cfg: &SimConfig, chain: &ChainConfig, opts: &ModelOptions) -> ReplicateRecord {
    let (x, y) = replicate_data(task.scenario, task.replicate, cfg);
    let truth = pad_curve(&lag_curve_with(task.scenario, cfg.p_true, &cfg.curves), task.p);
    let chain_cfg = ChainConfig {
        seed: replicate_chain_seed(cfg.master_seed, task.scenario, task.model.id, task.p, task.replicate),
        ..chain.clone()
    };
    let base = ReplicateRecord {
        scenario: task.scenario,
        model: task.model.id,
        p: task.p,
        replicate: task.replicate,
        rmse: None,
        bias2: None,
        ed: None,
        error: None,
    };
    let outcome = fit(&task.model, &x, &y, task.p, &chain_cfg, opts).and_then(|f| {
        let r = rmse(&f.summary.beta_mean, &truth)?;
        let b = bias2(&f.summary.beta_mean, &truth)?;
        debug_assert!(r * r >= b * (1.0 - 1e-12));
        Ok((r, b, f.summary.ed, f.elapsed_s))
    });
    match outcome {
        Ok((r, b, ed, secs)) => {
            log::info!(
                "{} {} p={} rep={} rmse={:.5} ed={:.2} ({:.2}s)",
                task.scenario,
                task.model.id,
                task.p,
                task.replicate,
                r,
                ed,
                secs
            );
            ReplicateRecord { rmse: Some(r), bias2: Some(b), ed: Some(ed), ..base }
        }
        Err(e) => {
            log::warn!("{} {} p={} rep={} failed: {e}", task.scenario, task.model.id, task.p, task.replicate);
            ReplicateRecord { error: Some(e.to_string()), ..base }
        }
    }
}

fn aggregate(records: &[ReplicateRecord], scenario: Scenario, model: ModelId, p: usize) -> StudyRow {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let mean = |f: &dyn Fn(&ReplicateRecord) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    StudyRow {
        scenario,
        model,
        p,
        rmse_x1e3: 1e3 * mean(&|r| r.rmse.unwrap_or(f64::NAN)),
        bias2_x1e3: 1e3 * mean(&|r| r.bias2.unwrap_or(f64::NAN)),
        ed: mean(&|r| r.ed.unwrap_or(f64::NAN)),
        reps: ok.len(),
        failures: records.len() - ok.len(),
    }
}

fn run_cells(
    cells: &[(Scenario, ModelSpec, usize)],
    cfg: &SimConfig,
    chain: &ChainConfig,
    opts: &ModelOptions,
) -> Result<StudyOutput> {
    cfg.validate()?;
    chain.validate()?;
    if cfg.reps == 0 {
        return Err(DlmError::InvalidConfig("reps must be at least 1".into()));
    }
    let tasks: Vec<Task> = cells
        .iter()
        .flat_map(|&(scenario, model, p)| {
            (0..cfg.reps).map(move |replicate| Task { scenario, model, p, replicate })
        })
        .collect();
    // Ordered collect: the output never depends on scheduling.
    let replicates: Vec<ReplicateRecord> = tasks.par_iter().map(|&t| run_task(t, cfg, chain, opts)).collect();
    let rows = cells
        .iter()
        .zip(replicates.chunks(cfg.reps))
        .map(|(&(s, m, p), recs)| aggregate(recs, s, m.id, p))
        .collect();
    Ok(StudyOutput { rows, replicates })
}

/// Every (scenario, model) pair fitted at `p = p_true` to `reps` replicates.
pub fn run_study(
    models: &[ModelSpec],
    scenarios: &[Scenario],
    cfg: &SimConfig,
    chain: &ChainConfig,
    opts: &ModelOptions,
) -> Result<StudyOutput> {
    let cells: Vec<_> = scenarios
        .iter()
        .flat_map(|&s| models.iter().map(move |&m| (s, m, cfg.p_true)))
        .collect();
    run_cells(&cells, cfg, chain, opts)
}

/// Maximum-lag misspecification: data from the displacement curve at
/// `p_true`, each model fitted at every assumed `p` (basis size scaling with
/// `p`), errors measured against the zero-padded true curve.
pub fn run_misspec_study(
    models: &[ModelSpec],
    p_values: &[usize],
    cfg: &SimConfig,
    chain: &ChainConfig,
    opts: &ModelOptions,
) -> Result<StudyOutput> {
    if let Some(&p) = p_values.iter().find(|&&p| p < cfg.p_true) {
        return Err(DlmError::InvalidConfig(format!(
            "assumed maximum lag {p} is below the true maximum lag {}",
            cfg.p_true
        )));
    }
    if let Some(&p) = p_values.iter().find(|&&p| p >= cfg.n) {
        return Err(DlmError::SeriesTooShort { n: cfg.n, p });
    }
    let cells: Vec<_> = models
        .iter()
        .flat_map(|&m| p_values.iter().map(move |&p| (Scenario::Displacement, m, p)))
        .collect();
    run_cells(&cells, cfg, chain, opts)
}

/// Default assumed maximum lags of the misspecification study.
pub const MISSPEC_P_VALUES: [usize; 4] = [50, 75, 100, 125];
