//! Time-series files: headered CSV with columns `t,x` and optionally `y`.
//! Column order is free; names are matched case-insensitively. An empty `y`
//! cell, `NA` or `nan` marks a missing response.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// NaN where the response is missing or the file has no `y` column.
    pub y: Vec<f64>,
    /// 1-based file line of each observation.
    pub lines: Vec<u64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Checks that a response is present wherever a model with maximum lag
    /// `p` uses it.
    pub fn require_response_from(&self, p: usize) -> CliResult<()> {
        if self.len() <= p {
            return Err(CliError::Data(format!(
                "series has n = {} observations but the maximum lag is p = {p}; need n > p",
                self.len()
            )));
        }
        match self.y[p..].iter().position(|v| !v.is_finite()) {
            Some(i) => Err(CliError::Data(format!(
                "line {}: response y is missing but is required from observation {} on (p = {p})",
                self.lines[p + i],
                p + 1
            ))),
            None => Ok(()),
        }
    }
}

fn parse_cell(raw: &str, line: u64, column: &str, optional: bool) -> CliResult<f64> {
    let s = raw.trim();
    if optional && (s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")) {
        return Ok(f64::NAN);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Data(format!("line {line}: column {column}: '{s}' is not a finite number"))),
    }
}

pub fn parse_series<R: Read>(input: R) -> CliResult<Series> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| CliError::Data(format!("line 1: {e}")))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(ti), Some(xi)) = (find("t"), find("x")) else {
        return Err(CliError::Data(format!(
            "line 1: header must contain columns 't' and 'x' (found: {})",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let yi = find("y");
    let mut s = Series { t: Vec::new(), x: Vec::new(), y: Vec::new(), lines: Vec::new() };
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Data(format!("line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let t = parse_cell(get(ti), line, "t", false)?;
        if let Some(&prev) = s.t.last() {
            if t <= prev {
                return Err(CliError::Data(format!("line {line}: t = {t} does not increase (previous {prev})")));
            }
        }
        s.t.push(t);
        s.x.push(parse_cell(get(xi), line, "x", false)?);
        s.y.push(match yi {
            Some(i) => parse_cell(get(i), line, "y", true)?,
            None => f64::NAN,
        });
        s.lines.push(line);
    }
    if s.is_empty() {
        return Err(CliError::Data("input has a header but no observations".into()));
    }
    Ok(s)
}

pub fn read_series(path: &Path) -> CliResult<Series> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_series(file).map_err(|e| e.context(&path.display().to_string()))
}

/// Writes `t,x,y`; a NaN response becomes an empty cell.
pub fn write_series(path: &Path, t: &[f64], x: &[f64], y: &[f64]) -> CliResult<()> {
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["t", "x", "y"]).map_err(io)?;
    for i in 0..t.len() {
        let yv = if y[i].is_finite() { y[i].to_string() } else { String::new() };
        w.write_record([t[i].to_string(), x[i].to_string(), yv]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
