//! Named scenarios that couple a process, a functional and a bound, and the
//! engine that runs them over many independent trials.
//!
//! Trial `k` of a run with seed `s` draws all of its randomness from stream
//! `(s, k)`. Trials are evaluated in parallel, collected in index order and
//! reduced sequentially, so reports do not depend on the worker count.

mod config;
mod report;
mod scenarios;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundValue, Family};
use crate::error::{Error, Result};
use crate::estimators::{domination, Status, TailEstimate, DEFAULT_LEVEL};
use crate::rng::{derive_stream, SeedContext};

pub use config::{apply_config, parse_config, parse_config_str, ConfigFile};
pub use report::{write_report, Format, Metadata, Row, RowKind, ScenarioReport, CSV_HEADER};

/// Which scale `R` lives on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `S_T - E S_T >= R`.
    Raw,
    /// `(S_T - E S_T) / T >= R`.
    TimeAvg,
    /// `(S_T - E S_T) / T^2 >= R`.
    T2Avg,
    /// `(S_T - E S_T) / T^q >= R` for the recorded power `q`.
    TPow(f64),
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::Raw => f.write_str("raw"),
            Normalization::TimeAvg => f.write_str("time_avg"),
            Normalization::T2Avg => f.write_str("t2_avg"),
            Normalization::TPow(q) => write!(f, "t_pow({q})"),
        }
    }
}

/// A fully parameterized scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Process and bound parameters, all numeric.
    pub params: BTreeMap<String, f64>,
    pub functional: String,
    pub family: Family,
    pub r_grid: Vec<f64>,
    pub trials: u64,
    pub dt: f64,
    pub seed: u64,
    pub normalization: Normalization,
    pub level: f64,
}

impl ScenarioSpec {
    pub fn param(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::param(key, format!("missing from scenario `{}`", self.name)))
    }

    /// Overrides one parameter. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "trials" => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                    return Err(Error::param(
                        "trials",
                        format!("must be a positive integer, got {value}"),
                    ));
                }
                self.trials = value as u64;
            }
            "dt" => self.dt = value,
            "level" => self.level = value,
            _ => match self.params.get_mut(key) {
                Some(slot) => *slot = value,
                None => {
                    let known: Vec<&str> = self.params.keys().map(String::as_str).collect();
                    return Err(Error::param(
                        key,
                        format!(
                            "unknown for scenario `{}` (known: trials, dt, level, {})",
                            self.name,
                            known.join(", ")
                        ),
                    ));
                }
            },
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::param("level", format!("must lie in (0, 1), got {}", self.level)));
        }
        let signed = self.name == "mart_mgf";
        for &r in &self.r_grid {
            if !r.is_finite() || (!signed && r <= 0.0) {
                return Err(Error::param("R", format!("grid value {r} is not admissible")));
            }
        }
        Ok(())
    }
}

/// Per-trial output. `dev` is the normalized centered deviation; `side_ok`
/// records whether the realized side condition of the joint event held.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Trial {
    pub dev: f64,
    pub side_ok: bool,
    pub extra: Vec<f64>,
}

impl Trial {
    pub fn new(dev: f64, side_ok: bool) -> Self {
        Self {
            dev,
            side_ok,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, extra: Vec<f64>) -> Self {
        self.extra = extra;
        self
    }
}

pub(crate) type Diagnostics = BTreeMap<String, f64>;

pub(crate) trait Scenario: Sync {
    fn trial(&self, ctx: SeedContext) -> Result<Trial>;

    fn bound(&self, r: f64) -> Result<BoundValue>;

    fn two_sided(&self) -> bool {
        false
    }

    fn side_condition(&self) -> String;

    fn notes(&self) -> Vec<String> {
        Vec::new()
    }

    fn rows(&self, trials: &[Trial], r_grid: &[f64], level: f64) -> Result<Vec<Row>> {
        tail_rows(self, trials, r_grid, level)
    }

    fn diagnostics(&self, _trials: &[Trial], _rows: &[Row]) -> Result<Diagnostics> {
        Ok(Diagnostics::new())
    }
}

pub(crate) fn exceeds(dev: f64, r: f64, two_sided: bool) -> bool {
    if two_sided {
        dev.abs() >= r
    } else {
        dev >= r
    }
}

fn tail_rows<S: Scenario + ?Sized>(s: &S, trials: &[Trial], r_grid: &[f64], level: f64) -> Result<Vec<Row>> {
    let mut grid = r_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.into_iter()
        .map(|r| {
            let hits = trials
                .iter()
                .filter(|t| t.side_ok && exceeds(t.dev, r, s.two_sided()))
                .count() as u64;
            let estimate = TailEstimate::from_counts(hits, trials.len() as u64, level)?;
            let bound = s.bound(r)?;
            let verdict = domination(&bound, &estimate);
            Ok(Row::tail(r, &estimate, bound, verdict.status))
        })
        .collect()
}

/// Static description of a registered scenario.
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
}

pub fn registry() -> Vec<ScenarioSpec> {
    scenarios::DEFAULTS.iter().map(|d| d.spec()).collect()
}

pub fn scenario_infos() -> Vec<ScenarioInfo> {
    scenarios::DEFAULTS
        .iter()
        .map(|d| ScenarioInfo {
            name: d.name,
            summary: d.summary,
        })
        .collect()
}

/// Default spec of a named scenario.
pub fn lookup(name: &str) -> Result<ScenarioSpec> {
    scenarios::DEFAULTS
        .iter()
        .find(|d| d.name == name)
        .map(|d| d.spec())
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

/// Runs `spec` on `workers` threads (0 picks the number of cores).
pub fn run(spec: &ScenarioSpec, workers: usize) -> Result<ScenarioReport> {
    spec.validate()?;
    let scenario = scenarios::build(spec)?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<Trial>> = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|k| scenario.trial(derive_stream(spec.seed, k)))
            .collect()
    });

    let mut trials = Vec::with_capacity(outcomes.len());
    let mut aborted = 0u64;
    let mut first_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(t) => trials.push(t),
            Err(e) => {
                aborted += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    // more than 0.1% aborted trials fails the scenario
    if aborted * 1000 > spec.trials || trials.len() < 2 {
        return Err(Error::TooManyAborts {
            aborted,
            trials: spec.trials,
            first: first_error.unwrap_or_default(),
        });
    }

    let rows = scenario.rows(&trials, &spec.r_grid, spec.level)?;
    let mut diagnostics = scenario.diagnostics(&trials, &rows)?;
    // JSON has no encoding for NaN or infinities
    diagnostics.retain(|_, v| v.is_finite());
    let wall_time_ms = started.elapsed().as_millis() as u64;
    Ok(ScenarioReport {
        scenario: spec.name.clone(),
        rows,
        metadata: Metadata {
            seed: spec.seed,
            trials: spec.trials,
            completed: trials.len() as u64,
            aborted,
            dt: spec.dt,
            level: spec.level,
            normalization: scenarios::effective_normalization(spec)?.to_string(),
            functional: spec.functional.clone(),
            family: spec.family,
            two_sided: scenario.two_sided(),
            params: spec.params.clone(),
            side_condition: scenario.side_condition(),
            notes: scenario.notes(),
            diagnostics,
            wall_time_ms,
        },
    })
}

impl ScenarioReport {
    pub fn has_violation(&self) -> bool {
        self.rows.iter().any(|r| r.verdict == Status::Violation)
    }
}

/// Spec with defaults for the level, used by the scenario table.
pub(crate) fn default_level() -> f64 {
    DEFAULT_LEVEL
}
