//! Run configuration: built-in defaults, overlaid by an optional JSON file,
//! overlaid by command-line flags. Unknown JSON keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use adaptive_dlm::models::{ModelId, ModelOptions, ModelSpec};
use adaptive_dlm::sampler::ChainConfig;
use adaptive_dlm::simulate::{Scenario, SimConfig, MISSPEC_P_VALUES};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Fit,
    Simulate,
    Study,
    Misspec,
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subcommand::Fit => "fit",
            Subcommand::Simulate => "simulate",
            Subcommand::Study => "study",
            Subcommand::Misspec => "misspec",
        };
        f.write_str(s)
    }
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When present, must name the subcommand being run.
    pub subcommand: Option<Subcommand>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    /// `"M3"`, `"M1,M3"` or `"all"`.
    pub model: Option<String>,
    /// Scenario name, comma list or `"all"`.
    pub scenario: Option<String>,
    pub p: Option<usize>,
    pub p_values: Option<Vec<usize>>,
    pub workers: Option<usize>,
    pub dump_samples: Option<bool>,
    pub sim: Option<SimConfig>,
    pub chain: Option<ChainConfig>,
    pub model_options: Option<ModelOptions>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(&path.display().to_string()))
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicates per study cell.
    #[arg(long)]
    pub reps: Option<usize>,
    /// M1..M5, a comma list, or `all`.
    #[arg(long)]
    pub model: Option<String>,
    /// Scenario name, a comma list, or `all`.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Maximum lag; a comma list for `misspec`.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for replicate-level parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write every retained draw (`fit` only).
    #[arg(long)]
    pub dump_samples: bool,
    /// Input series, CSV with columns `t,x[,y]` (`fit` only).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// Fully resolved settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub subcommand: Subcommand,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub models: Vec<ModelId>,
    pub scenarios: Vec<Scenario>,
    pub p: usize,
    pub p_values: Vec<usize>,
    pub workers: Option<usize>,
    pub dump_samples: bool,
    pub sim: SimConfig,
    pub chain: ChainConfig,
    pub model_options: ModelOptions,
}

impl Resolved {
    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models.iter().map(|&m| ModelSpec::new(m, self.model_options.assignment)).collect()
    }

    /// The same settings as a config file; loading it reproduces the run.
    pub fn to_run_config(&self) -> RunConfig {
        let join = |v: Vec<String>| v.join(",");
        RunConfig {
            subcommand: Some(self.subcommand),
            input: self.input.clone(),
            out: Some(self.out.clone()),
            seed: Some(self.seed),
            reps: Some(self.sim.reps),
            model: Some(join(self.models.iter().map(|m| m.to_string()).collect())),
            scenario: Some(join(self.scenarios.iter().map(|s| s.name().to_string()).collect())),
            p: (self.subcommand != Subcommand::Misspec).then_some(self.p),
            p_values: (self.subcommand == Subcommand::Misspec).then(|| self.p_values.clone()),
            workers: self.workers,
            dump_samples: Some(self.dump_samples),
            sim: Some(self.sim.clone()),
            chain: Some(self.chain.clone()),
            model_options: Some(self.model_options),
        }
    }
}

fn parse_list<T, F>(raw: &str, all: &[T], parse: F) -> CliResult<Vec<T>>
where
    T: Copy + PartialEq,
    F: Fn(&str) -> CliResult<T>,
{
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v = parse(part)?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("empty selection '{raw}'")));
    }
    Ok(out)
}

pub fn parse_models(raw: &str) -> CliResult<Vec<ModelId>> {
    parse_list(raw, &ModelId::ALL, |s| s.parse::<ModelId>().map_err(CliError::from))
}

pub fn parse_scenarios(raw: &str) -> CliResult<Vec<Scenario>> {
    parse_list(raw, &Scenario::ALL, |s| s.parse::<Scenario>().map_err(CliError::from))
}

/// Merges defaults, the config file and flags for one subcommand.
pub fn resolve(cmd: Subcommand, flags: &Flags) -> CliResult<Resolved> {
    let file = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(sc) = file.subcommand {
        if sc != cmd {
            return Err(CliError::Config(format!("config file is for '{sc}' but '{cmd}' was run")));
        }
    }
    let mut sim = file.sim.clone().unwrap_or_default();
    let mut chain = file.chain.clone().unwrap_or_default();
    let model_options = file.model_options.unwrap_or_default();

    let seed = flags.seed.or(file.seed);
    let seed = match (cmd, seed) {
        (Subcommand::Study | Subcommand::Misspec, None) => {
            return Err(CliError::Config(format!("'{cmd}' needs a seed (--seed or \"seed\" in the config file)")))
        }
        (_, s) => s.unwrap_or(0),
    };
    sim.master_seed = seed;
    chain.seed = seed;
    if let Some(r) = flags.reps.or(file.reps) {
        sim.reps = r;
    }

    let model_default = if cmd == Subcommand::Fit { "M3" } else { "all" };
    let model_raw = flags.model.clone().or(file.model.clone()).unwrap_or_else(|| model_default.into());
    let models = parse_models(&model_raw)?;
    let scenario_default = match cmd {
        Subcommand::Simulate => "decay_curve",
        Subcommand::Misspec => "displacement",
        _ => "all",
    };
    let scenario_raw = flags.scenario.clone().or(file.scenario.clone()).unwrap_or_else(|| scenario_default.into());
    let scenarios = parse_scenarios(&scenario_raw)?;

    let (p, p_values) = match cmd {
        Subcommand::Misspec => {
            if flags.p.is_empty() && file.p.is_some() && file.p_values.is_none() {
                return Err(CliError::Config("misspec takes \"p_values\", not \"p\"".into()));
            }
            let list = if !flags.p.is_empty() {
                flags.p.clone()
            } else {
                file.p_values.clone().unwrap_or_else(|| MISSPEC_P_VALUES.to_vec())
            };
            (sim.p_true, list)
        }
        _ => {
            if flags.p.len() > 1 {
                return Err(CliError::Config(format!("'{cmd}' takes a single --p")));
            }
            let p = flags.p.first().copied().or(file.p).unwrap_or(sim.p_true);
            (p, Vec::new())
        }
    };
    if matches!(cmd, Subcommand::Study | Subcommand::Simulate) {
        sim.p_true = p;
    }
    if p == 0 {
        return Err(CliError::Config("p must be at least 1".into()));
    }

    match cmd {
        Subcommand::Fit if models.len() != 1 => {
            return Err(CliError::Config("'fit' takes exactly one model".into()));
        }
        Subcommand::Simulate if scenarios.len() != 1 => {
            return Err(CliError::Config("'simulate' takes exactly one scenario".into()));
        }
        Subcommand::Misspec if scenarios != [Scenario::Displacement] => {
            return Err(CliError::Config("'misspec' generates data from the displacement curve only".into()));
        }
        _ => {}
    }

    let input = flags.input.clone().or(file.input.clone());
    if cmd == Subcommand::Fit && input.is_none() {
        return Err(CliError::Config("'fit' needs --input <file.csv>".into()));
    }
    let workers = flags.workers.or(file.workers);
    if workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let dump_samples = flags.dump_samples || file.dump_samples.unwrap_or(false);
    let out = flags.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));

    sim.validate()?;
    chain.validate()?;
    Ok(Resolved {
        subcommand: cmd,
        input,
        out,
        seed,
        models,
        scenarios,
        p,
        p_values,
        workers,
        dump_samples,
        sim,
        chain,
        model_options,
    })
}
