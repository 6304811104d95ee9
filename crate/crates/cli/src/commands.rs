use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use adaptive_dlm::models::{fit_with_samples, KnotSelection, M5EdReading, ModelId};
use adaptive_dlm::report::{
    lag_curve_rows, misspec_rows, replicate_rows, table1_rows, write_csv_file, write_json_file, LAGCURVE_HEADER,
    MISSPEC_HEADER, REPLICATE_HEADER, TABLE1_HEADER,
};
use adaptive_dlm::sampler::{write_samples_csv, PenaltyEstimate};
use adaptive_dlm::simulate::{lag_curve_with, replicate_data, run_misspec_study, run_study, StudyOutput};
use serde::{Deserialize, Serialize};

use crate::config::{Resolved, Subcommand};
use crate::error::{CliError, CliResult};
use crate::input::{read_series, write_series};

/// Contents of `summary.json` written by `fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: ModelId,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_obs: usize,
    #[serde(rename = "ED")]
    pub ed: f64,
    pub m5_ed: Option<M5EdReading>,
    pub sigma2_mean: f64,
    pub acceptance_rates: Vec<f64>,
    pub sample_count: usize,
    pub penalty: PenaltyEstimate,
    pub knots: Option<KnotSelection>,
    pub seed: u64,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct TruthRow {
    lag: usize,
    beta: f64,
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub fn run(cfg: &Resolved) -> CliResult<()> {
    prepare_out(&cfg.out)?;
    write_json_file(&cfg.out.join("run_config.json"), &cfg.to_run_config())?;
    match cfg.subcommand {
        Subcommand::Fit => cmd_fit(cfg),
        Subcommand::Simulate => cmd_simulate(cfg),
        Subcommand::Study => cmd_study(cfg),
        Subcommand::Misspec => cmd_misspec(cfg),
    }
}

pub fn cmd_fit(cfg: &Resolved) -> CliResult<()> {
    let input = cfg.input.as_deref().ok_or_else(|| CliError::Config("'fit' needs --input".into()))?;
    let series = read_series(input)?;
    series.require_response_from(cfg.p)?;
    let spec = &cfg.model_specs()[0];
    log::info!("fitting {} with p = {} to {} observations", spec.id, cfg.p, series.len());
    let (fit, samples) = fit_with_samples(spec, &series.x, &series.y, cfg.p, &cfg.chain, &cfg.model_options)?;
    let s = &fit.summary;
    write_csv_file(&cfg.out.join("lagcurve.csv"), &lag_curve_rows(s), &LAGCURVE_HEADER)?;
    let summary = FitSummary {
        model: fit.model,
        p: fit.p,
        k: fit.k,
        n_obs: series.len() - cfg.p,
        ed: s.ed,
        m5_ed: (fit.model == ModelId::M5).then_some(fit.m5_ed),
        sigma2_mean: s.sigma2_mean,
        acceptance_rates: s.acceptance_rates.clone(),
        sample_count: s.sample_count,
        penalty: s.penalty.clone(),
        knots: fit.knots,
        seed: cfg.seed,
        wall_time_s: fit.elapsed_s,
    };
    write_json_file(&cfg.out.join("summary.json"), &summary)?;
    if cfg.dump_samples {
        match samples {
            Some(samples) => {
                let file = File::create(cfg.out.join("samples.csv"))?;
                write_samples_csv(&samples, BufWriter::new(file))?;
            }
            None => log::warn!("{} is not sampled; --dump-samples ignored", fit.model),
        }
    }
    log::info!("ED = {:.3}, wall time {:.2}s", s.ed, fit.elapsed_s);
    Ok(())
}

pub fn cmd_simulate(cfg: &Resolved) -> CliResult<()> {
    let scenario = cfg.scenarios[0];
    let (x, y) = replicate_data(scenario, 0, &cfg.sim);
    let t: Vec<f64> = (1..=x.len()).map(|i| i as f64).collect();
    write_series(&cfg.out.join("data.csv"), &t, &x, &y)?;
    let truth: Vec<TruthRow> = lag_curve_with(scenario, cfg.sim.p_true, &cfg.sim.curves)
        .into_iter()
        .enumerate()
        .map(|(lag, beta)| TruthRow { lag, beta })
        .collect();
    write_csv_file(&cfg.out.join("truth.csv"), &truth, &["lag", "beta"])?;
    log::info!("simulated {} observations from {}", x.len(), scenario.name());
    Ok(())
}

fn check_failures(out: &StudyOutput) -> CliResult<()> {
    for r in out.rows.iter().filter(|r| r.failures > 0) {
        log::warn!("{} / {} / p = {}: {} of {} replicates failed", r.scenario.name(), r.model, r.p, r.failures, r.reps);
    }
    if let Some(r) = out.rows.iter().find(|r| r.reps > 0 && r.failures == r.reps) {
        let msg = out
            .replicates
            .iter()
            .find(|x| x.scenario == r.scenario && x.model == r.model && x.p == r.p)
            .and_then(|x| x.error.clone())
            .unwrap_or_default();
        return Err(CliError::Numerical(format!(
            "every replicate of {} / {} / p = {} failed: {msg}",
            r.scenario.name(),
            r.model,
            r.p
        )));
    }
    Ok(())
}

pub fn cmd_study(cfg: &Resolved) -> CliResult<()> {
    let specs = cfg.model_specs();
    log::info!(
        "study: {} scenario(s) x {} model(s) x {} replicates",
        cfg.scenarios.len(),
        specs.len(),
        cfg.sim.reps
    );
    let out = with_pool(cfg.workers, || run_study(&specs, &cfg.scenarios, &cfg.sim, &cfg.chain, &cfg.model_options))??;
    let rows = table1_rows(&out.rows);
    write_csv_file(&cfg.out.join("table1.csv"), &rows, &TABLE1_HEADER)?;
    write_json_file(&cfg.out.join("table1.json"), &rows)?;
    write_csv_file(&cfg.out.join("replicates.csv"), &replicate_rows(&out.replicates), &REPLICATE_HEADER)?;
    check_failures(&out)
}

pub fn cmd_misspec(cfg: &Resolved) -> CliResult<()> {
    let specs = cfg.model_specs();
    log::info!(
        "misspec: {} model(s) x p in {:?} x {} replicates",
        specs.len(),
        cfg.p_values,
        cfg.sim.reps
    );
    let out =
        with_pool(cfg.workers, || run_misspec_study(&specs, &cfg.p_values, &cfg.sim, &cfg.chain, &cfg.model_options))??;
    let rows = misspec_rows(&out.rows);
    write_csv_file(&cfg.out.join("misspec.csv"), &rows, &MISSPEC_HEADER)?;
    write_json_file(&cfg.out.join("misspec.json"), &rows)?;
    write_csv_file(&cfg.out.join("replicates.csv"), &replicate_rows(&out.replicates), &REPLICATE_HEADER)?;
    check_failures(&out)
}
