//! Run configuration shared by all CLI commands.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::DEFAULT_EPSILON;
use crate::sim::{Mode, Perturbation, RunOptions, DEFAULT_CFL};
use crate::topology::{Network, NetworkTopology, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid network: {0}")]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSpec {
    #[serde(rename = "Q", alias = "q")]
    pub flux: f64,
    #[serde(rename = "H0", alias = "h0")]
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon_start: f64,
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        LyapunovSpec { epsilon_start: DEFAULT_EPSILON }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_snapshot_prefix")]
    pub snapshot_prefix: String,
    #[serde(default = "default_summary")]
    pub summary: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { trace: default_trace(), snapshot_prefix: default_snapshot_prefix(), summary: default_summary() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    #[serde(default)]
    pub mode: Mode,
    #[serde(rename = "T", alias = "t_final", default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// Times at which cell-center snapshots are written.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    /// Window `[t1, t2]` for the decay fit; the whole run when absent.
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            mode: Mode::Linear,
            t_final: default_t_final(),
            cfl: DEFAULT_CFL,
            perturbation: Perturbation::default(),
            sample_stride: default_stride(),
            snapshots: Vec::new(),
            fit_window: None,
            outputs: OutputSpec::default(),
        }
    }
}

impl SimulationSpec {
    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            t_final: self.t_final,
            cfl: self.cfl,
            sample_stride: self.sample_stride,
            snapshot_times: self.snapshots.clone(),
        }
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_cfl() -> f64 {
    DEFAULT_CFL
}
fn default_t_final() -> f64 {
    100.0
}
fn default_stride() -> usize {
    1
}
fn default_trace() -> String {
    "trace.csv".into()
}
fn default_snapshot_prefix() -> String {
    "snapshot".into()
}
fn default_summary() -> String {
    "simulate.json".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub network: NetworkTopology,
    pub root: RootSpec,
    /// Feedback gain per terminal channel id.
    #[serde(default)]
    pub gains: BTreeMap<usize, f64>,
    #[serde(default)]
    pub lyapunov: LyapunovSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn network(&self) -> Result<Network, ConfigError> {
        Ok(Network::new(self.network.clone())?)
    }

    /// Terminal channels without a gain entry.
    pub fn missing_gains(&self, net: &Network) -> Vec<usize> {
        net.terminals().iter().copied().filter(|t| !self.gains.contains_key(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STAR: &str = r#"{
        "network": {
            "channels": [
                {"id": 1, "length": 400, "friction": 0.002, "friction_exponent": 1},
                {"id": 2, "length": 250, "friction": 0.002, "friction_exponent": 1},
                {"id": 3, "length": 250, "friction": 0.002, "friction_exponent": 1}
            ],
            "root_channel": 1,
            "junctions": [{"incoming": 1, "outgoing": [2, 3], "split_fractions": [0.5, 0.5]}]
        },
        "root": {"Q": 1.5, "H0": 2.0},
        "gains": {"2": 4.0},
        "simulation": {"mode": "nonlinear", "T": 50, "perturbation": {"amplitude": 1e-3, "bumps": [{"channel": 1}]}}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_json(STAR).unwrap();
        assert_eq!(cfg.root.flux, 1.5);
        assert_eq!(cfg.lyapunov.epsilon_start, DEFAULT_EPSILON);
        assert_eq!(cfg.simulation.mode, Mode::Nonlinear);
        assert_eq!(cfg.simulation.cfl, DEFAULT_CFL);
        assert_eq!(cfg.simulation.perturbation.bumps[0].width, 0.5);
        let net = cfg.network().unwrap();
        assert_eq!(cfg.missing_gains(&net), vec![3]);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = RunConfig::from_json(STAR).unwrap();
        let once = cfg.to_json();
        let again = RunConfig::from_json(&once).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(once, again.to_json());
    }
}
