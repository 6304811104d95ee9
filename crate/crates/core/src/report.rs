//! Machine-readable outputs: study tables, per-replicate audit files, lag
//! curves and JSON sidecars.
//!
//! Column orders are fixed:
//!
//! | file            | columns                                                          |
//! |-----------------|------------------------------------------------------------------|
//! | `table1.csv`    | `scenario,model,rmse_x1e3,bias2_x1e3,ed,reps,failures`           |
//! | `misspec.csv`   | `model,p,ed,rmse_x1e3,bias2_x1e3,reps,failures`                  |
//! | `lagcurve.csv`  | `lag,beta_mean,lower95,upper95`                                  |
//! | `replicates.csv`| `scenario,model,p,replicate,rmse,bias2,ed,error`                 |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::ModelId;
use crate::sampler::PosteriorSummary;
use crate::simulate::{ReplicateRecord, Scenario, StudyRow};

pub const TABLE1_HEADER: [&str; 7] = ["scenario", "model", "rmse_x1e3", "bias2_x1e3", "ed", "reps", "failures"];
pub const MISSPEC_HEADER: [&str; 7] = ["model", "p", "ed", "rmse_x1e3", "bias2_x1e3", "reps", "failures"];
pub const LAGCURVE_HEADER: [&str; 4] = ["lag", "beta_mean", "lower95", "upper95"];

/// One line of `table1.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub scenario: Scenario,
    pub model: ModelId,
    pub rmse_x1e3: f64,
    pub bias2_x1e3: f64,
    pub ed: f64,
    pub reps: usize,
    pub failures: usize,
}

impl From<&StudyRow> for Table1Row {
    fn from(r: &StudyRow) -> Self {
        Self {
            scenario: r.scenario,
            model: r.model,
            rmse_x1e3: r.rmse_x1e3,
            bias2_x1e3: r.bias2_x1e3,
            ed: r.ed,
            reps: r.reps,
            failures: r.failures,
        }
    }
}

/// One line of `misspec.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisspecRow {
    pub model: ModelId,
    pub p: usize,
    pub ed: f64,
    pub rmse_x1e3: f64,
    pub bias2_x1e3: f64,
    pub reps: usize,
    pub failures: usize,
}

impl From<&StudyRow> for MisspecRow {
    fn from(r: &StudyRow) -> Self {
        Self {
            model: r.model,
            p: r.p,
            ed: r.ed,
            rmse_x1e3: r.rmse_x1e3,
            bias2_x1e3: r.bias2_x1e3,
            reps: r.reps,
            failures: r.failures,
        }
    }
}

/// One line of `lagcurve.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagCurveRow {
    pub lag: usize,
    pub beta_mean: f64,
    pub lower95: f64,
    pub upper95: f64,
}

pub fn lag_curve_rows(summary: &PosteriorSummary) -> Vec<LagCurveRow> {
    summary
        .beta_mean
        .iter()
        .zip(&summary.beta_lower)
        .zip(&summary.beta_upper)
        .enumerate()
        .map(|(lag, ((&m, &lo), &hi))| LagCurveRow { lag, beta_mean: m, lower95: lo, upper95: hi })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], header: &[&str], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    write_csv(rows, header, BufWriter::new(File::create(path)?))
}

pub fn read_csv_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_csv(File::open(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

pub fn table1_rows(rows: &[StudyRow]) -> Vec<Table1Row> {
    rows.iter().map(Table1Row::from).collect()
}

pub fn misspec_rows(rows: &[StudyRow]) -> Vec<MisspecRow> {
    rows.iter().map(MisspecRow::from).collect()
}

/// Flattened replicate record for the audit CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub scenario: Scenario,
    pub model: ModelId,
    pub p: usize,
    pub replicate: usize,
    pub rmse: Option<f64>,
    pub bias2: Option<f64>,
    pub ed: Option<f64>,
    pub error: Option<String>,
}

pub const REPLICATE_HEADER: [&str; 8] = ["scenario", "model", "p", "replicate", "rmse", "bias2", "ed", "error"];

pub fn replicate_rows(records: &[ReplicateRecord]) -> Vec<ReplicateRow> {
    records
        .iter()
        .map(|r| ReplicateRow {
            scenario: r.scenario,
            model: r.model,
            p: r.p,
            replicate: r.replicate,
            rmse: r.rmse,
            bias2: r.bias2,
            ed: r.ed,
            error: r.error.clone(),
        })
        .collect()
}
