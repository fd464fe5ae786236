//! Simulation configuration files, the parallel driver and the summary tables.
//!
//! Runs are executed on a rayon pool but collected in run order, and each run draws from
//! its own stream, so every output byte is independent of the number of threads.

use std::path::Path;

use cnma_core::simulator::{
    run_replication, summarize, Mode, Scenario, ScenarioConfig, SimulationSummary, TABLE_MODELS,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn connected() -> OneOrMany<Mode> {
    OneOrMany::One(Mode::Connected)
}

/// Contents of a simulation config file. `scenario`, `tau2` and `mode` may each be a single
/// value or a list; the grid is their product. Other fields override the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(alias = "scenarios")]
    pub scenario: OneOrMany<Scenario>,
    pub tau2: OneOrMany<f64>,
    #[serde(default = "connected", alias = "modes")]
    pub mode: OneOrMany<Mode>,
    pub runs: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub odds_ratios: Option<[f64; 4]>,
    #[serde(default)]
    pub interaction_ratio: Option<f64>,
    #[serde(default)]
    pub baseline_p: Option<f64>,
    #[serde(default)]
    pub arm_size: Option<(u64, u64)>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub placebo_inactive: Option<bool>,
    #[serde(default)]
    pub layout: Option<Vec<(String, String)>>,
}

impl SimulationConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    /// One resolved configuration per grid cell, ordered by mode, scenario, then tau2 as
    /// listed. `seed` overrides the file's seed.
    pub fn cells(&self, seed: Option<u64>) -> Result<Vec<ScenarioConfig>> {
        if self.runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        let seed = seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        let mut out = Vec::new();
        for mode in self.mode.to_vec() {
            for scenario in self.scenario.to_vec() {
                for tau2 in self.tau2.to_vec() {
                    let mut c = ScenarioConfig::new(scenario, tau2, mode, self.runs, seed);
                    if let Some(v) = self.odds_ratios {
                        c.odds_ratios = v;
                    }
                    c.interaction_ratio = self.interaction_ratio;
                    if let Some(v) = self.baseline_p {
                        c.baseline_p = v;
                    }
                    if let Some(v) = self.arm_size {
                        c.arm_size = v;
                    }
                    if let Some(v) = self.threshold {
                        c.threshold = v;
                    }
                    if let Some(v) = self.level {
                        c.level = v;
                    }
                    if let Some(v) = self.placebo_inactive {
                        c.placebo_inactive = v;
                    }
                    if let Some(v) = &self.layout {
                        c.layout = v.clone();
                    }
                    c.validate()?;
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Run one grid cell on `pool`.
pub fn run_cell(config: &ScenarioConfig, pool: &rayon::ThreadPool) -> Result<SimulationSummary> {
    config.validate()?;
    let outcomes = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|run| run_replication(config, run))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    Ok(summarize(config, &outcomes))
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryFile<'a> {
    pub schema_version: u32,
    pub cells: &'a [SimulationSummary],
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        let _ = w.write_record(r);
    }
    w.into_inner().unwrap_or_default()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Model selection counts per cell, one row per (mode, scenario, tau2).
pub fn selection_table(cells: &[SimulationSummary]) -> Vec<u8> {
    let mut header: Vec<String> = ["mode", "scenario", "tau2", "runs"].map(String::from).to_vec();
    header.extend(TABLE_MODELS.iter().map(|m| m.to_string()));
    header.push("other".into());
    header.push("n_diff".into());
    let mut rows = vec![header];
    for c in cells {
        let mut row = vec![
            c.mode.name().to_string(),
            c.scenario.name().to_string(),
            num(c.tau2),
            c.runs.to_string(),
        ];
        let mut listed = 0;
        for m in TABLE_MODELS {
            let n = c.selection_counts.get(m).copied().unwrap_or(0);
            listed += n;
            row.push(n.to_string());
        }
        row.push((c.runs - listed).to_string());
        row.push(c.n_diff.map_or(String::new(), |n| n.to_string()));
        rows.push(row);
    }
    csv_bytes(rows)
}

/// Average MSE and coverage per (mode, scenario, tau2, model).
pub fn performance_table(cells: &[SimulationSummary]) -> Vec<u8> {
    let mut rows = vec![[
        "mode", "scenario", "tau2", "model", "mse", "cp", "cp_low", "cp_high", "cp_within_limits", "inestimable",
    ]
    .map(String::from)
    .to_vec()];
    for c in cells {
        for (model, perf) in &c.models {
            rows.push(vec![
                c.mode.name().to_string(),
                c.scenario.name().to_string(),
                num(c.tau2),
                model.clone(),
                num(perf.mse.average),
                num(perf.coverage.average),
                num(perf.coverage.limits.0),
                num(perf.coverage.limits.1),
                perf.coverage.within_limits.to_string(),
                perf.mse.inestimable.to_string(),
            ]);
        }
    }
    csv_bytes(rows)
}

/// MSE and coverage of each effect against placebo.
pub fn effects_table(cells: &[SimulationSummary]) -> Vec<u8> {
    let mut rows = vec![["mode", "scenario", "tau2", "model", "comparison", "true_effect", "mse", "cp"]
        .map(String::from)
        .to_vec()];
    for c in cells {
        for (model, perf) in &c.models {
            for (j, comparison) in c.comparisons.iter().enumerate() {
                rows.push(vec![
                    c.mode.name().to_string(),
                    c.scenario.name().to_string(),
                    num(c.tau2),
                    model.clone(),
                    comparison.clone(),
                    num(c.true_effects[j]),
                    perf.mse.by_comparison[j].map_or(String::new(), num),
                    perf.coverage.by_comparison[j].map_or(String::new(), num),
                ]);
            }
        }
    }
    csv_bytes(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_accepts_single_values_and_lists() {
        let c: SimulationConfig =
            serde_json::from_str(r#"{"scenario": "A", "tau2": 0.0, "runs": 5}"#).unwrap();
        let cells = c.cells(None).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].seed, DEFAULT_SEED);
        assert_eq!(cells[0].mode, Mode::Connected);

        let c: SimulationConfig = serde_json::from_str(
            r#"{"scenarios": ["A", "C1"], "tau2": [0.0, 0.1], "mode": ["connected", "disconnected"],
                "runs": 5, "seed": 7, "arm_size": [20, 40]}"#,
        )
        .unwrap();
        let cells = c.cells(Some(9)).unwrap();
        assert_eq!(cells.len(), 8);
        assert!(cells.iter().all(|c| c.seed == 9 && c.arm_size == (20, 40)));
    }

    #[test]
    fn config_rejects_unknown_fields_and_bad_values() {
        assert!(serde_json::from_str::<SimulationConfig>(r#"{"scenario": "A", "tau2": 0, "runs": 5, "tua2": 1}"#).is_err());
        assert!(serde_json::from_str::<SimulationConfig>(r#"{"scenario": "Z", "tau2": 0, "runs": 5}"#).is_err());
        let c: SimulationConfig =
            serde_json::from_str(r#"{"scenario": "A", "tau2": -1, "runs": 5}"#).unwrap();
        assert!(c.cells(None).is_err());
    }
}
