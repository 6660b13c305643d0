//! Reference scenarios: parameters, time-step subsequences, toroidal
//! resolution schedule, and the chained executions that replay them.
//!
//! Parameters come in three categories. Hardcoded ones (compiled into the
//! simulation) and input-file ones (fed on standard input) live in the
//! scenario file. Environment ones (MPI processes, threads, libraries) live
//! only in [`LaunchEnvironment`], so a scenario file is machine-portable.

mod launch;
mod plan;
mod registry;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::kv::{Document, KvError, Section};
use crate::metric::{MetricSpec, DEFAULT_THRESHOLD, DEFAULT_TIME_MATCH_TOL};
use crate::timeseries::Quantity;

pub use launch::{launch, LaunchEnvironment, LaunchError, RunDirectory, RunMeta};
pub use plan::{plan_executions, ExecutionPlan, ExecutionStep, StepKind, MAX_CHAIN, MIN_CHAIN};
pub use registry::{load_scenario, Registry, ScenarioSource, BUILTIN_MODELS};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("model {0} is not registered")]
    UnknownModel(u32),
    #[error("invalid scenario file: {0}")]
    InvalidScenarioFile(String),
    #[error("execution index {index} out of range 1..={max}")]
    ScheduleIndexOutOfRange { index: usize, max: usize },
}

impl From<KvError> for ScenarioError {
    fn from(e: KvError) -> Self {
        ScenarioError::InvalidScenarioFile(e.to_string())
    }
}

/// Paired vectors of step durations and step counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsequence {
    pub tstep_n: Vec<f64>,
    pub nstep_n: Vec<u64>,
}

impl Subsequence {
    pub fn new(tstep_n: Vec<f64>, nstep_n: Vec<u64>) -> Result<Self, String> {
        let s = Subsequence { tstep_n, nstep_n };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.tstep_n.len() != self.nstep_n.len() {
            return Err(format!(
                "tstep_n has {} entries but nstep_n has {}",
                self.tstep_n.len(),
                self.nstep_n.len()
            ));
        }
        if self.tstep_n.is_empty() {
            return Err("empty subsequence".into());
        }
        if self.tstep_n.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err("time steps must be positive".into());
        }
        if self.nstep_n.contains(&0) {
            return Err("step counts must be at least 1".into());
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.nstep_n.iter().sum()
    }

    pub fn duration(&self) -> f64 {
        self.tstep_n
            .iter()
            .zip(&self.nstep_n)
            .map(|(&dt, &n)| dt * n as f64)
            .sum()
    }

    /// Concatenates subsequences into one (used to drive the toy simulator
    /// over a whole scenario).
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Subsequence>) -> Subsequence {
        let mut out = Subsequence {
            tstep_n: Vec::new(),
            nstep_n: Vec::new(),
        };
        for p in parts {
            out.tstep_n.extend_from_slice(&p.tstep_n);
            out.nstep_n.extend_from_slice(&p.nstep_n);
        }
        out
    }

    /// Simulation times `0, t1, ..., t_N` visited by the subsequence. Each
    /// block is computed as `start + j * dt` to avoid accumulating rounding.
    pub fn time_grid(&self) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.total_steps() as usize + 1);
        let mut start = 0.0;
        times.push(start);
        for (&dt, &n) in self.tstep_n.iter().zip(&self.nstep_n) {
            for j in 1..=n {
                times.push(start + j as f64 * dt);
            }
            start += dt * n as f64;
        }
        times
    }

    pub(crate) fn from_section(section: &Section) -> Result<Self, KvError> {
        Ok(Subsequence {
            tstep_n: section.require("tstep_n")?.reals()?,
            nstep_n: section.require("nstep_n")?.ints()?,
        })
    }
}

/// Geometric ramp of the axisymmetric establishment run: time steps start
/// at `tstep_min` and double until they reach the first evolve time step.
#[derive(Debug, Clone, PartialEq)]
pub struct EstablishRamp {
    pub tstep_min: f64,
    pub steps_per_level: u64,
}

impl Default for EstablishRamp {
    fn default() -> Self {
        EstablishRamp {
            tstep_min: 0.01,
            steps_per_level: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model_id: u32,
    /// Category A.
    pub hardcoded_params: BTreeMap<String, String>,
    /// Category B.
    pub input_params: BTreeMap<String, String>,
    pub subsequences: Vec<Subsequence>,
    /// `(evolve execution index, n_tor)`, 1-based; `n_tor` holds from that
    /// execution onward.
    pub n_tor_schedule: Vec<(usize, u32)>,
    pub establish: EstablishRamp,
    pub metric_defaults: MetricSpec,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let doc = Document::parse(text)?;
        let bad = |msg: String| ScenarioError::InvalidScenarioFile(msg);
        let model_id: u32 = doc.root().require("model")?.int()?;

        let to_map = |name: &str| -> BTreeMap<String, String> {
            doc.section(name)
                .map(|s| {
                    s.entries
                        .iter()
                        .map(|e| (e.key.clone(), e.value.clone()))
                        .collect()
                })
                .unwrap_or_default()
        };
        let mut hardcoded_params = to_map("hardcoded");
        hardcoded_params.insert("model".into(), model_id.to_string());
        let input_params = to_map("input");

        let subsequences = doc
            .sections_named("subsequence")
            .map(Subsequence::from_section)
            .collect::<Result<Vec<_>, _>>()?;

        let mut n_tor_schedule = Vec::new();
        if let Some(section) = doc.section("n_tor_schedule") {
            for e in &section.entries {
                let index: usize = e
                    .key
                    .parse()
                    .map_err(|_| bad(format!("line {}: schedule key must be an execution index", e.line)))?;
                n_tor_schedule.push((index, e.int()?));
            }
            n_tor_schedule.sort_by_key(|&(i, _)| i);
        }

        let mut establish = EstablishRamp::default();
        if let Some(section) = doc.section("establish") {
            if let Some(e) = section.get("tstep_min") {
                establish.tstep_min = e.real()?;
            }
            if let Some(e) = section.get("steps_per_level") {
                establish.steps_per_level = e.int()?;
            }
        }

        let metric = doc
            .section("metric")
            .ok_or_else(|| bad("missing [metric] section".into()))?;
        let quantities = match metric.get("quantities") {
            Some(e) => e
                .value
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<Vec<Quantity>, _>>()
                .map_err(bad)?,
            None => Quantity::ALL.to_vec(),
        };
        let mut metric_defaults = MetricSpec {
            t_start: metric.require("t_start")?.real()?,
            t_end: metric.require("t_end")?.real()?,
            thr: match metric.get("thr") {
                Some(e) => e.real()?,
                None => DEFAULT_THRESHOLD,
            },
            quantities,
            modes: metric.require("modes")?.ints()?,
            time_match_tol: DEFAULT_TIME_MATCH_TOL,
        };
        if let Some(e) = metric.get("time_match_tol") {
            metric_defaults.time_match_tol = e.real()?;
        }

        let scenario = Scenario {
            model_id,
            hardcoded_params,
            input_params,
            subsequences,
            n_tor_schedule,
            establish,
            metric_defaults,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ScenarioError::InvalidScenarioFile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::InvalidScenarioFile(msg));
        if self.subsequences.is_empty() {
            return bad("at least one [subsequence] is required".into());
        }
        for (i, s) in self.subsequences.iter().enumerate() {
            if let Err(e) = s.validate() {
                return bad(format!("subsequence {}: {e}", i + 1));
            }
        }
        let n_tor = self.base_n_tor().map_err(ScenarioError::InvalidScenarioFile)?;
        for n in std::iter::once(n_tor).chain(self.n_tor_schedule.iter().map(|&(_, n)| n)) {
            if n % 2 == 0 {
                return bad(format!("n_tor = {n} does not give an integer number of harmonics"));
            }
        }
        if !(self.establish.tstep_min > 0.0) || self.establish.steps_per_level == 0 {
            return bad("establish ramp needs tstep_min > 0 and steps_per_level >= 1".into());
        }
        if self.establish.tstep_min > self.subsequences[0].tstep_n[0] {
            return bad("establish tstep_min exceeds the first evolve time step".into());
        }
        self.metric_defaults
            .validate()
            .or_else(|e| bad(e.to_string()))?;
        Ok(())
    }

    /// `n_tor` from the hardcoded parameters (default 1).
    pub fn base_n_tor(&self) -> Result<u32, String> {
        match self.hardcoded_params.get("n_tor") {
            None => Ok(1),
            Some(v) => v
                .parse::<u32>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| format!("invalid n_tor `{v}`")),
        }
    }

    /// Category B flag `xpoint`, accepting Fortran logicals.
    pub fn xpoint(&self) -> bool {
        self.input_params
            .get("xpoint")
            .map(|v| matches!(v.to_ascii_lowercase().as_str(), ".t." | ".true." | "true"))
            .unwrap_or(false)
    }

    /// All evolve subsequences back to back.
    pub fn evolve_subsequence(&self) -> Subsequence {
        Subsequence::concat(&self.subsequences)
    }
}

/// Number of independent harmonic systems, `(n_tor + 1) / 2`.
pub fn harmonics(n_tor: u32) -> u32 {
    n_tor.div_ceil(2)
}
