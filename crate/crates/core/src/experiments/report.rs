use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundValue, Family};
use crate::error::{Error, Result};
use crate::estimators::{MgfCheck, Status, TailEstimate};

pub const CSV_HEADER: &str = "scenario,R,trials,successes,empirical,ci_low,ci_high,bound,verdict,seed,dt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// Tail probability against a bound; `successes` counts exceedances.
    Tail,
    /// Mean of an exponential supermartingale against 1; `R` holds lambda,
    /// `successes` the number of finite exponents averaged and the interval
    /// is a normal one for the mean.
    Mgf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(rename = "R")]
    pub r: f64,
    pub kind: RowKind,
    pub trials: u64,
    pub successes: u64,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: BoundValue,
    pub verdict: Status,
}

impl Row {
    pub(crate) fn tail(r: f64, est: &TailEstimate, bound: BoundValue, verdict: Status) -> Self {
        Self {
            r,
            kind: RowKind::Tail,
            trials: est.trials,
            successes: est.successes,
            empirical: est.point,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            bound,
            verdict,
        }
    }

    pub(crate) fn mgf(lambda: f64, trials: u64, check: &MgfCheck, bound: BoundValue) -> Self {
        let e = check.estimate;
        // a violation needs the whole interval above 1
        let verdict = if e.ci_low > bound.value {
            Status::Violation
        } else if e.ci_high <= bound.value {
            Status::Dominated
        } else {
            Status::Inconclusive
        };
        Self {
            r: lambda,
            kind: RowKind::Mgf,
            trials,
            successes: e.n,
            empirical: e.mean,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            bound,
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub trials: u64,
    pub completed: u64,
    pub aborted: u64,
    pub dt: f64,
    pub level: f64,
    pub normalization: String,
    pub functional: String,
    pub family: Family,
    pub two_sided: bool,
    pub params: BTreeMap<String, f64>,
    /// Which realized side condition entered the joint event.
    pub side_condition: String,
    pub notes: Vec<String>,
    pub diagnostics: BTreeMap<String, f64>,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub rows: Vec<Row>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::param("format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

impl ScenarioReport {
    /// CSV rows only. Unlike the JSON form it carries no wall time, so runs
    /// with equal inputs render identically.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for row in &self.rows {
            w.write_record([
                self.scenario.clone(),
                row.r.to_string(),
                row.trials.to_string(),
                row.successes.to_string(),
                row.empirical.to_string(),
                row.ci_low.to_string(),
                row.ci_high.to_string(),
                row.bound.value.to_string(),
                row.verdict.to_string(),
                self.metadata.seed.to_string(),
                self.metadata.dt.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

pub fn write_report(report: &ScenarioReport, path: &Path, format: Format) -> Result<()> {
    let text = report.render(format)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
