//! Command-line front end: `steady`, `gains`, `certify` and `simulate`.
//!
//! Exit codes: 0 ok, 1 configuration or I/O error, 2 steady-state failure,
//! 3 bad gain input, 4 certificate failed, 5 simulation failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::certificate::{certify_network, channel_bases, CertError, NetworkCertificate};
use crate::config::{ConfigError, RunConfig};
use crate::gains::{is_admissible, GainError, GainRecord};
use crate::io::{write_json, write_snapshot_csv, write_steady_csv, write_trace_csv};
use crate::sim::{Mode, SimError, Simulator};
use crate::steady::{solve_network_steady, NetworkSteady, SteadyError};
use crate::topology::Network;

#[derive(Debug, Parser)]
#[command(name = "svnet", version, about = "Saint-Venant channel networks: steady states, gains, certificates, simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady profiles of every channel.
    Steady(CommonArgs),
    /// Forbidden gain intervals and admissibility verdicts.
    Gains(CommonArgs),
    /// Lyapunov certificate for the configured gains.
    Certify(CommonArgs),
    /// Time-domain run with Lyapunov trace and decay fit.
    Simulate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Reserved; perturbations are fully determined by the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("steady state failed{}: {source}", .source.channel().map(|c| format!(" on channel {c}")).unwrap_or_default())]
    Steady { source: SteadyError },
    #[error("missing gains for terminal channels {0:?}")]
    MissingGain(Vec<usize>),
    #[error("bad gain input: {0}")]
    Gain(#[from] GainError),
    #[error("certificate failed: {0}")]
    CertificateFailed(String),
    #[error("certificate computation failed: {0}")]
    Certificate(CertError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Steady { .. } => 2,
            CliError::MissingGain(_) | CliError::Gain(_) => 3,
            CliError::CertificateFailed(_) | CliError::Certificate(_) => 4,
            CliError::Simulation(_) => 5,
        }
    }
}

impl From<SteadyError> for CliError {
    fn from(source: SteadyError) -> Self {
        CliError::Steady { source }
    }
}

impl From<CertError> for CliError {
    fn from(e: CertError) -> Self {
        match e {
            CertError::MissingGain(m) => CliError::MissingGain(m),
            CertError::Gain(g) => CliError::Gain(g),
            other => CliError::Certificate(other),
        }
    }
}

type Handler = fn(&RunConfig, &Path) -> Result<(), CliError>;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (args, cmd): (&CommonArgs, Handler) = match &cli.command {
        Command::Steady(a) => (a, cmd_steady),
        Command::Gains(a) => (a, cmd_gains),
        Command::Certify(a) => (a, cmd_certify),
        Command::Simulate(a) => (a, cmd_simulate),
    };
    let cfg = RunConfig::from_path(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    cmd(&cfg, &args.out)
}

fn solve(cfg: &RunConfig) -> Result<(Network, NetworkSteady), CliError> {
    let net = cfg.network()?;
    let steady = solve_network_steady(&net, cfg.root.flux, cfg.root.depth)?;
    Ok((net, steady))
}

fn gains_for(cfg: &RunConfig, net: &Network) -> Result<BTreeMap<usize, f64>, CliError> {
    let missing = cfg.missing_gains(net);
    if !missing.is_empty() {
        return Err(CliError::MissingGain(missing));
    }
    Ok(net.terminals().iter().map(|t| (*t, cfg.gains[t])).collect())
}

#[derive(Serialize)]
struct ChannelSummary {
    channel: usize,
    length: f64,
    cells: usize,
    flux: f64,
    h_0: f64,
    h_l: f64,
    v_0: f64,
    v_l: f64,
    critical_depth: f64,
    blowup_bound: f64,
    blowup_margin: f64,
    depth_ratio: f64,
}

/// Writes `steady_<id>.csv` per channel and `steady_summary.json`.
pub fn cmd_steady(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (net, steady) = solve(cfg)?;
    let mut summary = Vec::new();
    for &id in net.order() {
        let p = steady.get(id);
        write_steady_csv(&out.join(format!("steady_{id}.csv")), p)?;
        summary.push(ChannelSummary {
            channel: id,
            length: p.length,
            cells: p.cells,
            flux: p.flux,
            h_0: p.h0(),
            h_l: p.h_end(),
            v_0: p.v_star[0],
            v_l: p.v_end(),
            critical_depth: p.critical_depth,
            blowup_bound: p.blowup_bound,
            blowup_margin: p.blowup_bound - p.length,
            depth_ratio: p.depth_ratio,
        });
    }
    write_json(&out.join("steady_summary.json"), &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct GainsReport {
    all_admissible: bool,
    terminals: Vec<GainRecord>,
}

/// Writes `gains.json` with the forbidden interval and verdict per terminal.
/// Inadmissible gains are reported, not treated as failures.
pub fn cmd_gains(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (net, steady) = solve(cfg)?;
    let gains = gains_for(cfg, &net)?;
    let bases = channel_bases(&net, &steady)?;
    let mut terminals = Vec::new();
    for (&id, &k) in &gains {
        let b = &bases[&id];
        let last = b.phi.phi.len() - 1;
        let eta = b.eta_bar.as_ref().map(|e| e[last]);
        terminals.push(is_admissible(steady.get(id), k, eta, Some(b.phi.phi[last]))?);
    }
    let report = GainsReport { all_admissible: terminals.iter().all(|r| r.admissible), terminals };
    write_json(&out.join("gains.json"), &report)?;
    Ok(())
}

/// Writes `certificate.json`; fails with exit code 4 when not certified.
pub fn cmd_certify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (net, steady) = solve(cfg)?;
    let gains = gains_for(cfg, &net)?;
    let cert = certify_network(&net, &steady, &gains, cfg.lyapunov.epsilon_start)?;
    write_json(&out.join("certificate.json"), &cert)?;
    if cert.certified {
        Ok(())
    } else {
        Err(CliError::CertificateFailed(format!("failing checks {:?}", cert.failed_checks)))
    }
}

#[derive(Serialize)]
struct SimulateReport {
    mode: Mode,
    nu_hat: f64,
    r2: f64,
    zero_trace: bool,
    fit_window: (f64, f64),
    #[serde(rename = "V0")]
    v0: f64,
    #[serde(rename = "VT")]
    vt: f64,
    #[serde(rename = "V_ext0")]
    v_ext0: f64,
    #[serde(rename = "V_extT")]
    v_ext_t: f64,
    cfl_dt: f64,
    steps: usize,
    certified: bool,
    weights: &'static str,
    mass_residual: Option<f64>,
    junction_residual: f64,
    snapshot_times: Vec<f64>,
}

/// Writes the trace CSV, snapshots and the summary JSON.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (net, steady) = solve(cfg)?;
    let gains = gains_for(cfg, &net)?;
    let spec = &cfg.simulation;
    // Weights come from the certificate search; exploratory runs with
    // uncertifiable gains fall back to the last attempt or unit weights.
    let cert: Option<NetworkCertificate> = match certify_network(&net, &steady, &gains, cfg.lyapunov.epsilon_start) {
        Ok(c) => Some(c),
        Err(CertError::Gain(g)) => return Err(g.into()),
        Err(_) => None,
    };
    let weights = cert.as_ref().and_then(|c| c.weights.as_ref());
    let mut sim = Simulator::new(&net, &steady, cfg.root.flux, &gains, weights, spec.mode)?;
    let init = sim.initial_state(&spec.perturbation);
    let run = sim.run(init, &spec.run_options())?;

    write_trace_csv(&out.join(&spec.outputs.trace), &run.trace)?;
    for (i, snap) in run.snapshots.iter().enumerate() {
        write_snapshot_csv(&out.join(format!("{}_{i:04}.csv", spec.outputs.snapshot_prefix)), snap)?;
    }
    let zero_trace = run.trace.is_zero();
    let window = spec.fit_window.unwrap_or((0.0, run.trace.samples.last().unwrap().t));
    let (nu_hat, r2) = if zero_trace {
        (0.0, 1.0)
    } else {
        let fit = run.trace.fit(Some(window))?;
        (fit.nu_hat, fit.r2)
    };
    let first = &run.trace.samples[0];
    let last = run.trace.samples.last().unwrap();
    let report = SimulateReport {
        mode: spec.mode,
        nu_hat,
        r2,
        zero_trace,
        fit_window: window,
        v0: first.v,
        vt: last.v,
        v_ext0: first.v_ext,
        v_ext_t: last.v_ext,
        cfl_dt: run.dt,
        steps: run.steps,
        certified: cert.as_ref().is_some_and(|c| c.certified),
        weights: if weights.is_some() { "certificate" } else { "unit" },
        mass_residual: run.mass_residual,
        junction_residual: run.junction_residual,
        snapshot_times: run.snapshots.iter().map(|s| s.time).collect(),
    };
    write_json(&out.join(&spec.outputs.summary), &report)?;
    Ok(())
}
