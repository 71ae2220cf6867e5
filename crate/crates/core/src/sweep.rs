//! Parameter sweeps over omega, the arrival rate, or the power cap.
//!
//! Every (value, policy, replication) cell is an independent run; cells run
//! on a worker pool and their results are merged into one long-format table
//! in a fixed order once all of them finish. A failing cell is recorded with
//! its error and does not stop the others.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyKind};
use crate::sim::{self, SimSummary};
use crate::trace_io::fmt_real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Omega,
    Lambda,
    Pmax,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Omega => "omega",
            SweepParameter::Lambda => "lambda",
            SweepParameter::Pmax => "pmax",
        }
    }

    /// Returns `base` with this parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            SweepParameter::Omega => cfg.omega = value,
            SweepParameter::Lambda => cfg.set_arrival_rate(value),
            SweepParameter::Pmax => cfg.radio.max_power = value,
        }
        cfg
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(SweepParameter::Omega),
            "lambda" => Ok(SweepParameter::Lambda),
            "pmax" => Ok(SweepParameter::Pmax),
            _ => Err(Error::config(
                "parameter",
                format!("unknown sweep parameter `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    #[serde(default = "one")]
    pub replications: u32,
    /// Replication `r` runs with seed `base_seed + r`; defaults to the
    /// scenario seed.
    #[serde(default)]
    pub base_seed: Option<u64>,
}

fn one() -> u32 {
    1
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("values", "at least one value is required"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "at least one policy is required"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<sweep>".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.values.len() * self.policies.len() * self.replications as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub policy: PolicyKind,
    pub replication: u32,
    pub seed: u64,
    /// The run's summary, or its error message.
    pub outcome: std::result::Result<SimSummary, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub num_services: usize,
    pub rows: Vec<SweepRow>,
}

/// Mean and sample standard deviation over the replications of one
/// (value, policy) pair. Failed cells are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub value: f64,
    pub policy: PolicyKind,
    pub runs: usize,
    pub avg_power_mean: f64,
    pub avg_power_sd: f64,
    pub avg_delay_mean: f64,
    pub avg_delay_sd: f64,
    pub feasible_fraction: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Successful summaries for one policy, ordered by parameter value.
    pub fn series(&self, policy: PolicyKind) -> Vec<(f64, &SimSummary)> {
        self.rows
            .iter()
            .filter(|r| r.policy == policy)
            .filter_map(|r| r.outcome.as_ref().ok().map(|s| (r.value, s)))
            .collect()
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out: Vec<AggregateRow> = Vec::new();
        let mut keys: Vec<(f64, PolicyKind)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|&(v, p)| v == r.value && p == r.policy) {
                keys.push((r.value, r.policy));
            }
        }
        for (value, policy) in keys {
            let ok: Vec<&SimSummary> = self
                .rows
                .iter()
                .filter(|r| r.value == value && r.policy == policy)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            if ok.is_empty() {
                continue;
            }
            let powers: Vec<f64> = ok.iter().map(|s| s.avg_power).collect();
            let delays: Vec<f64> = ok.iter().map(|s| s.mean_delay()).collect();
            let (avg_power_mean, avg_power_sd) = mean_sd(&powers);
            let (avg_delay_mean, avg_delay_sd) = mean_sd(&delays);
            out.push(AggregateRow {
                value,
                policy,
                runs: ok.len(),
                avg_power_mean,
                avg_power_sd,
                avg_delay_mean,
                avg_delay_sd,
                feasible_fraction: ok.iter().filter(|s| s.feasible()).count() as f64
                    / ok.len() as f64,
            });
        }
        out
    }

    /// Long format: one row per cell.
    pub fn render_long(&self) -> String {
        let k = self.num_services;
        let mut out =
            String::from("parameter,value,policy,replication,seed,status,avg_power,mean_delay");
        for i in 1..=k {
            write!(out, ",delay_{i}").unwrap();
        }
        out.push_str(",delay_ok,power_ok,drops,error\n");
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{}",
                self.parameter,
                fmt_real(r.value),
                r.policy,
                r.replication,
                r.seed
            )
            .unwrap();
            match &r.outcome {
                Ok(s) => {
                    write!(
                        out,
                        ",ok,{},{}",
                        fmt_real(s.avg_power),
                        fmt_real(s.mean_delay())
                    )
                    .unwrap();
                    for d in &s.avg_delay {
                        write!(out, ",{}", fmt_real(*d)).unwrap();
                    }
                    writeln!(
                        out,
                        ",{},{},{},",
                        s.all_delay_ok(),
                        s.power_ok,
                        s.total_drops.iter().sum::<u64>()
                    )
                    .unwrap();
                }
                Err(msg) => {
                    out.push_str(",failed,,");
                    out.push_str(&",".repeat(k));
                    writeln!(out, ",,,\"{}\"", msg.replace('"', "'")).unwrap();
                }
            }
        }
        out
    }

    pub fn render_aggregate(&self) -> String {
        let mut out = String::from(
            "parameter,value,policy,runs,avg_power_mean,avg_power_sd,mean_delay_mean,mean_delay_sd,feasible_fraction\n",
        );
        for a in self.aggregate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.parameter,
                fmt_real(a.value),
                a.policy,
                a.runs,
                fmt_real(a.avg_power_mean),
                fmt_real(a.avg_power_sd),
                fmt_real(a.avg_delay_mean),
                fmt_real(a.avg_delay_sd),
                fmt_real(a.feasible_fraction)
            )
            .unwrap();
        }
        out
    }
}

fn run_cell(
    base: &ScenarioConfig,
    param: SweepParameter,
    value: f64,
    policy: PolicyKind,
    seed: u64,
) -> Result<SimSummary> {
    let cfg = param.apply(base, value);
    cfg.validate()?;
    let policy = Policy::build(policy, &cfg)?;
    sim::run_summary(&cfg, &policy, seed)
}

/// Runs every cell of `spec` on `workers` threads (0 = all cores).
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig, workers: usize) -> Result<SweepTable> {
    spec.validate()?;
    let base_seed = spec.base_seed.unwrap_or(base.seed);
    let mut cells = Vec::with_capacity(spec.cell_count());
    for &value in &spec.values {
        for &policy in &spec.policies {
            for r in 0..spec.replications {
                cells.push((value, policy, r, base_seed.wrapping_add(r as u64)));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let rows = pool.install(|| {
        cells
            .into_par_iter()
            .map(|(value, policy, replication, seed)| SweepRow {
                value,
                policy,
                replication,
                seed,
                outcome: run_cell(base, spec.parameter, value, policy, seed)
                    .map_err(|e| e.to_string()),
            })
            .collect()
    });
    Ok(SweepTable {
        parameter: spec.parameter,
        num_services: base.num_services(),
        rows,
    })
}
