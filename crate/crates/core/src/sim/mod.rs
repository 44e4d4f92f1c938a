//! Time-domain simulation of the network in deviation form.
//!
//! Fields are stored as deviations `(h, v)` from the steady profile at cell
//! centers. The semi-discrete right-hand side only involves differences
//! `F(U* + u) - F(U*)` and `S(U* + u) - S(U*)`, so the steady state is an
//! exact fixed point. Interface fluxes are upwinded along the characteristic
//! directions of the frozen steady state and time stepping is the two-stage
//! strong-stability-preserving Runge–Kutta method.
//!
//! Linear mode replaces both differences by their Jacobians at `U*`.

mod boundary;
mod lyapunov;
mod perturb;

pub use boundary::{dsqrt, invariants, junction_faces, newton, root_face, terminal_face, Face, NEWTON_MAX_ITER, NEWTON_TOL};
pub use lyapunov::{decay_fit, diff, DecayFit, LyapunovTrace, TraceSample};
pub use perturb::{Bump, Perturbation};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::NetworkWeights;
use crate::characteristics::{coupling_coefficients, CoeffError};
use crate::quadrature::trapezoid;
use crate::steady::NetworkSteady;
use crate::topology::Network;

pub const DEFAULT_CFL: f64 = 0.9;
/// Stability bound on `dt max(|V| + sqrt(gH)) / dx`, asserted every step.
pub const CFL_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("t = {time}: time step {dt} exceeds the stability bound {limit}")]
    CflViolation { time: f64, dt: f64, limit: f64 },
    #[error("t = {time}: channel {channel} cell {cell} left the subcritical regime")]
    SubcriticalLoss { channel: usize, cell: usize, time: f64 },
    #[error("t = {time}: non-finite value in channel {channel} cell {cell}")]
    NonFinite { channel: usize, cell: usize, time: f64 },
    #[error("t = {time}: junction solve at the outlet of channel {channel} did not converge")]
    JunctionDivergence { channel: usize, time: f64 },
    #[error("t = {time}: root inflow solve did not converge")]
    RootSolveFailure { time: f64 },
    #[error("t = {time}: terminal solve on channel {channel} failed")]
    TerminalSolveFailure { channel: usize, time: f64 },
    #[error("missing feedback gain for terminal channel(s) {0:?}")]
    MissingGain(Vec<usize>),
    #[error("Lyapunov value is not positive at t = {time}")]
    NonPositiveV { time: f64 },
    #[error("invalid run options: {0}")]
    BadOptions(String),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

impl SimError {
    pub fn time(&self) -> Option<f64> {
        match self {
            SimError::CflViolation { time, .. }
            | SimError::SubcriticalLoss { time, .. }
            | SimError::NonFinite { time, .. }
            | SimError::JunctionDivergence { time, .. }
            | SimError::RootSolveFailure { time }
            | SimError::TerminalSolveFailure { time, .. }
            | SimError::NonPositiveV { time } => Some(*time),
            _ => None,
        }
    }
}

/// Deviation fields of one channel at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub h: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    /// One field per channel, in network traversal order.
    pub fields: Vec<Field>,
}

impl SimState {
    pub fn max_abs(&self) -> f64 {
        self.fields
            .iter()
            .flat_map(|f| f.h.iter().chain(&f.v))
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Sup-norm distance between two states on the same grid.
    pub fn max_diff(&self, other: &SimState) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .flat_map(|(a, b)| a.h.iter().zip(&b.h).chain(a.v.iter().zip(&b.v)))
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }
}

/// Characteristic fields and their time derivatives on the sample nodes
/// `[0, cell centers, L]` of one channel.
#[derive(Debug, Clone)]
pub struct CharFields {
    pub channel: usize,
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub dy1: Vec<f64>,
    pub dy2: Vec<f64>,
    pub ddy1: Vec<f64>,
    pub ddy2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotRow {
    pub channel: usize,
    pub x: f64,
    #[serde(rename = "H")]
    pub depth: f64,
    #[serde(rename = "V")]
    pub velocity: f64,
    pub h: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub rows: Vec<SnapshotRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub t_final: f64,
    pub cfl: f64,
    pub sample_stride: usize,
    pub snapshot_times: Vec<f64>,
}

impl RunOptions {
    pub fn new(t_final: f64) -> Self {
        RunOptions { t_final, cfl: DEFAULT_CFL, sample_stride: 1, snapshot_times: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dt: f64,
    pub steps: usize,
    pub trace: LyapunovTrace,
    pub snapshots: Vec<Snapshot>,
    pub final_state: SimState,
    /// Worst `|d/dt ∫ΣH - (Q_in - Q_out)|` per step (nonlinear mode).
    pub mass_residual: Option<f64>,
    /// Worst junction mass residual relative to the incoming flux.
    pub junction_residual: f64,
    /// Worst `|H V - Q| / Q` at the root face.
    pub root_flux_error: f64,
}

enum Outlet {
    Terminal(f64),
    Junction(Vec<usize>),
}

struct Chan {
    id: usize,
    n: usize,
    dx: f64,
    g: f64,
    friction: f64,
    exponent: f64,
    hc: Vec<f64>,
    vc: Vec<f64>,
    hf: Vec<f64>,
    vf: Vec<f64>,
    is_root: bool,
    outlet: Outlet,
    // sample nodes [0, centers, L]
    xs: Vec<f64>,
    hn: Vec<f64>,
    vn: Vec<f64>,
    lambda1: Vec<f64>,
    lambda2: Vec<f64>,
    gamma1: Vec<f64>,
    delta1: Vec<f64>,
    gamma2: Vec<f64>,
    delta2: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
}

pub struct Simulator {
    mode: Mode,
    q_root: f64,
    chans: Vec<Chan>,
    faces: Vec<[Face; 2]>,
    junction_residual: f64,
    root_flux_error: f64,
}

fn dflux(mode: Mode, hs: f64, vs: f64, g: f64, h: f64, v: f64) -> [f64; 2] {
    match mode {
        Mode::Linear => [vs * h + hs * v, g * h + vs * v],
        Mode::Nonlinear => [vs * h + hs * v + h * v, g * h + vs * v + 0.5 * v * v],
    }
}

#[allow(clippy::too_many_arguments)]
fn dsource(mode: Mode, hs: f64, vs: f64, c: f64, p: f64, g: f64, h: f64, v: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    match mode {
        Mode::Linear => g * c * (2.0 * vs.abs() * v / hs.powf(p) - p * vs * vs.abs() * h / hs.powf(p + 1.0)),
        Mode::Nonlinear => {
            let (big_h, big_v) = (hs + h, vs + v);
            g * c * (big_v * big_v.abs() / big_h.powf(p) - vs * vs.abs() / hs.powf(p))
        }
    }
}

/// Flux at an interior interface: the forward characteristic part from the
/// left cell plus the backward part from the right cell.
fn upwind(mode: Mode, hs: f64, vs: f64, g: f64, l: (f64, f64), r: (f64, f64)) -> [f64; 2] {
    let s = (g / hs).sqrt();
    let fl = dflux(mode, hs, vs, g, l.0, l.1);
    let fr = dflux(mode, hs, vs, g, r.0, r.1);
    [
        0.5 * (fl[0] + fr[0]) + (fl[1] - fr[1]) / (2.0 * s),
        0.5 * s * (fl[0] - fr[0]) + 0.5 * (fl[1] + fr[1]),
    ]
}

impl Simulator {
    /// Builds the simulator. Without `weights` the Lyapunov trace uses unit
    /// weights, i.e. the plain energy of the characteristic fields.
    pub fn new(
        net: &Network,
        steady: &NetworkSteady,
        q_root: f64,
        gains: &BTreeMap<usize, f64>,
        weights: Option<&NetworkWeights>,
        mode: Mode,
    ) -> Result<Self, SimError> {
        let missing: Vec<usize> = net.terminals().iter().copied().filter(|t| !gains.contains_key(t)).collect();
        if !missing.is_empty() {
            return Err(SimError::MissingGain(missing));
        }
        let pos: BTreeMap<usize, usize> = net.order().iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut chans = Vec::new();
        for &id in net.order() {
            let p = steady.get(id);
            let coeffs = coupling_coefficients(p)?;
            let n = p.cells;
            let mut idx = vec![p.interface_index(0)];
            idx.extend((0..n).map(|k| p.center_index(k)));
            idx.push(p.interface_index(n));
            let pick = |f: &[f64]| idx.iter().map(|&i| f[i]).collect::<Vec<f64>>();
            let (f1, f2) = match weights {
                Some(w) => {
                    let cw = w.get(id);
                    (pick(&cw.f1), pick(&cw.f2))
                }
                None => (vec![1.0; n + 2], vec![1.0; n + 2]),
            };
            let outlet = if net.is_terminal(id) {
                Outlet::Terminal(gains[&id])
            } else {
                let (kids, _) = net.children(id).expect("internal channel has children");
                Outlet::Junction(kids.iter().map(|k| pos[k]).collect())
            };
            let centers: Vec<usize> = (0..n).map(|k| p.center_index(k)).collect();
            let ifaces: Vec<usize> = (0..=n).map(|k| p.interface_index(k)).collect();
            chans.push(Chan {
                id,
                n,
                dx: p.dx(),
                g: p.gravity,
                friction: p.friction,
                exponent: p.friction_exponent,
                hc: centers.iter().map(|&i| p.h_star[i]).collect(),
                vc: centers.iter().map(|&i| p.v_star[i]).collect(),
                hf: ifaces.iter().map(|&i| p.h_star[i]).collect(),
                vf: ifaces.iter().map(|&i| p.v_star[i]).collect(),
                is_root: id == net.root(),
                outlet,
                xs: pick(&p.x),
                hn: pick(&p.h_star),
                vn: pick(&p.v_star),
                lambda1: pick(&coeffs.lambda1),
                lambda2: pick(&coeffs.lambda2),
                gamma1: pick(&coeffs.gamma1),
                delta1: pick(&coeffs.delta1),
                gamma2: pick(&coeffs.gamma2),
                delta2: pick(&coeffs.delta2),
                f1,
                f2,
            });
        }
        let faces = vec![[Face::default(); 2]; chans.len()];
        Ok(Simulator { mode, q_root, chans, faces, junction_residual: 0.0, root_flux_error: 0.0 })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Channel ids in state order.
    pub fn channel_ids(&self) -> Vec<usize> {
        self.chans.iter().map(|c| c.id).collect()
    }

    /// Cell-center abscissae of the channel at state position `i`.
    pub fn centers(&self, i: usize) -> Vec<f64> {
        let c = &self.chans[i];
        (0..c.n).map(|k| (k as f64 + 0.5) * c.dx).collect()
    }

    /// Steady `(H*, V*)` at the cell centers of channel position `i`.
    pub fn steady_centers(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.chans[i].hc, &self.chans[i].vc)
    }

    pub fn dx(&self, i: usize) -> f64 {
        self.chans[i].dx
    }

    /// Face values from the most recent face solve, `[x = 0, x = L]`.
    pub fn faces(&self) -> &[[Face; 2]] {
        &self.faces
    }

    pub fn steady_state(&self) -> SimState {
        let fields = self.chans.iter().map(|c| Field { h: vec![0.0; c.n], v: vec![0.0; c.n] }).collect();
        SimState { time: 0.0, fields }
    }

    pub fn initial_state(&self, pert: &Perturbation) -> SimState {
        let fields = self
            .chans
            .iter()
            .map(|c| {
                let len = c.dx * c.n as f64;
                let (h, v) = (0..c.n)
                    .map(|k| pert.eval(c.id, (k as f64 + 0.5) * c.dx, len, c.dx, c.hc[k], c.g))
                    .unzip();
                Field { h, v }
            })
            .collect();
        SimState { time: 0.0, fields }
    }

    /// `min dx / max(|V| + sqrt(gH))` over all cells. Linear mode uses the
    /// steady speeds, which are the characteristic speeds of the linear
    /// system.
    pub fn cfl_bound(&self, fields: &[Field]) -> f64 {
        let mut bound = f64::INFINITY;
        for (c, f) in self.chans.iter().zip(fields) {
            let mut top: f64 = 0.0;
            for k in 0..c.n {
                let (h, v) = match self.mode {
                    Mode::Linear => (c.hc[k], c.vc[k]),
                    Mode::Nonlinear => (c.hc[k] + f.h[k], c.vc[k] + f.v[k]),
                };
                top = top.max(v.abs() + (c.g * h).sqrt());
            }
            bound = bound.min(c.dx / top);
        }
        bound
    }

    fn check(&self, fields: &[Field], time: f64) -> Result<(), SimError> {
        for (c, f) in self.chans.iter().zip(fields) {
            for k in 0..c.n {
                let (h, v) = (f.h[k], f.v[k]);
                if !(h.is_finite() && v.is_finite()) {
                    return Err(SimError::NonFinite { channel: c.id, cell: k, time });
                }
                if self.mode == Mode::Nonlinear {
                    let (big_h, big_v) = (c.hc[k] + h, c.vc[k] + v);
                    if !(big_h > 0.0 && c.g * big_h - big_v * big_v > 0.0) {
                        return Err(SimError::SubcriticalLoss { channel: c.id, cell: k, time });
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves every boundary face for the given interior fields.
    pub fn solve_faces(&mut self, fields: &[Field], time: f64) -> Result<(), SimError> {
        let mode = self.mode;
        let Simulator { chans, faces, q_root, junction_residual, root_flux_error, .. } = self;
        for (i, c) in chans.iter().enumerate() {
            let f = &fields[i];
            let n = c.n;
            if c.is_root {
                let (_, y2) = invariants(mode, c.hc[0], c.g, f.h[0], f.v[0]);
                let face = root_face(mode, c.hf[0], c.vf[0], *q_root, c.g, y2, faces[i][0].h)
                    .ok_or(SimError::RootSolveFailure { time })?;
                if mode == Mode::Nonlinear && *q_root > 0.0 {
                    let err = ((c.hf[0] + face.h) * (c.vf[0] + face.v) - *q_root).abs() / *q_root;
                    *root_flux_error = root_flux_error.max(err);
                }
                faces[i][0] = face;
            }
            let (y1, _) = invariants(mode, c.hc[n - 1], c.g, f.h[n - 1], f.v[n - 1]);
            match &c.outlet {
                Outlet::Terminal(k) => {
                    faces[i][1] = terminal_face(mode, c.hf[n], *k, c.g, y1, faces[i][1].h)
                        .ok_or(SimError::TerminalSolveFailure { channel: c.id, time })?;
                }
                Outlet::Junction(kids) => {
                    let y2: Vec<f64> = kids
                        .iter()
                        .map(|&j| {
                            let d = &chans[j];
                            invariants(mode, d.hc[0], d.g, fields[j].h[0], fields[j].v[0]).1
                        })
                        .collect();
                    let hs = c.hf[n];
                    let (fi, fo) = junction_faces(mode, hs, c.g, y1, &y2, faces[i][1].h)
                        .ok_or(SimError::JunctionDivergence { channel: c.id, time })?;
                    let flux = |vs: f64, face: &Face| match mode {
                        Mode::Linear => hs * vs + hs * face.v + vs * face.h,
                        Mode::Nonlinear => (hs + face.h) * (vs + face.v),
                    };
                    let mut res = flux(c.vf[n], &fi);
                    for (&j, fj) in kids.iter().zip(&fo) {
                        res -= flux(chans[j].vf[0], fj);
                        faces[j][0] = *fj;
                    }
                    let q_in = hs * c.vf[n];
                    let scale = if q_in > 0.0 { q_in } else { hs * (c.g * hs).sqrt() };
                    *junction_residual = junction_residual.max(res.abs() / scale);
                    faces[i][1] = fi;
                }
            }
        }
        Ok(())
    }

    /// Semi-discrete right-hand side using the current face values.
    fn rhs(&self, fields: &[Field]) -> Vec<Field> {
        let mode = self.mode;
        self.chans
            .iter()
            .zip(fields)
            .zip(&self.faces)
            .map(|((c, f), faces)| {
                let n = c.n;
                let mut flux = Vec::with_capacity(n + 1);
                flux.push(dflux(mode, c.hf[0], c.vf[0], c.g, faces[0].h, faces[0].v));
                for k in 1..n {
                    flux.push(upwind(mode, c.hf[k], c.vf[k], c.g, (f.h[k - 1], f.v[k - 1]), (f.h[k], f.v[k])));
                }
                flux.push(dflux(mode, c.hf[n], c.vf[n], c.g, faces[1].h, faces[1].v));
                let mut dh = vec![0.0; n];
                let mut dv = vec![0.0; n];
                for k in 0..n {
                    dh[k] = -(flux[k + 1][0] - flux[k][0]) / c.dx;
                    dv[k] = -(flux[k + 1][1] - flux[k][1]) / c.dx
                        - dsource(mode, c.hc[k], c.vc[k], c.friction, c.exponent, c.g, f.h[k], f.v[k]);
                }
                Field { h: dh, v: dv }
            })
            .collect()
    }

    fn eval(&mut self, fields: &[Field], time: f64) -> Result<Vec<Field>, SimError> {
        self.check(fields, time)?;
        self.solve_faces(fields, time)?;
        Ok(self.rhs(fields))
    }

    /// Inflow minus terminal outflow at the current faces.
    fn boundary_flux(&self) -> f64 {
        let mut total = 0.0;
        for (c, faces) in self.chans.iter().zip(&self.faces) {
            let n = c.n;
            let phys = |hs: f64, vs: f64, face: &Face| match self.mode {
                Mode::Linear => hs * vs + hs * face.v + vs * face.h,
                Mode::Nonlinear => (hs + face.h) * (vs + face.v),
            };
            if c.is_root {
                total += phys(c.hf[0], c.vf[0], &faces[0]);
            }
            if let Outlet::Terminal(_) = c.outlet {
                total -= phys(c.hf[n], c.vf[n], &faces[1]);
            }
        }
        total
    }

    /// Total deviation volume `Σ ∫ h dx` (midpoint rule).
    pub fn volume(&self, state: &SimState) -> f64 {
        self.chans.iter().zip(&state.fields).map(|(c, f)| c.dx * f.h.iter().sum::<f64>()).sum()
    }

    /// One SSP-RK2 step. Returns the boundary mass rate averaged over the
    /// two stages, which is the exact discrete volume rate of the step.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn step(&mut self, state: &mut SimState, dt: f64) -> Result<f64, SimError> {
        let t = state.time;
        let limit = CFL_LIMIT * self.cfl_bound(&state.fields);
        if !(dt <= limit) {
            return Err(SimError::CflViolation { time: t, dt, limit });
        }
        let k0 = self.eval(&state.fields, t)?;
        let b0 = self.boundary_flux();
        let stage: Vec<Field> = state
            .fields
            .iter()
            .zip(&k0)
            .map(|(f, k)| Field {
                h: f.h.iter().zip(&k.h).map(|(a, b)| a + dt * b).collect(),
                v: f.v.iter().zip(&k.v).map(|(a, b)| a + dt * b).collect(),
            })
            .collect();
        let k1 = self.eval(&stage, t + dt)?;
        let b1 = self.boundary_flux();
        for ((f, s), k) in state.fields.iter_mut().zip(&stage).zip(&k1) {
            for i in 0..f.h.len() {
                f.h[i] = 0.5 * (f.h[i] + s.h[i] + dt * k.h[i]);
                f.v[i] = 0.5 * (f.v[i] + s.v[i] + dt * k.v[i]);
            }
        }
        state.time = t + dt;
        self.check(&state.fields, state.time)?;
        Ok(0.5 * (b0 + b1))
    }

    /// Characteristic fields on the sample nodes together with `∂t y` and
    /// `∂tt y` from the PDE with centered differences in space.
    ///
    /// Linear mode applies the characteristic form
    /// `∂t y1 = -λ1 ∂x y1 - γ1 y1 - δ1 y2`, `∂t y2 = λ2 ∂x y2 - γ2 y1 - δ2 y2`
    /// twice. Nonlinear mode differentiates the conservative form in `(h, v)`
    /// and maps through the exact invariants, which is the same system
    /// written in different variables.
    pub fn characteristic_fields(&mut self, state: &SimState) -> Result<Vec<CharFields>, SimError> {
        self.check(&state.fields, state.time)?;
        self.solve_faces(&state.fields, state.time)?;
        let mode = self.mode;
        let mut out = Vec::with_capacity(self.chans.len());
        for ((c, f), faces) in self.chans.iter().zip(&state.fields).zip(&self.faces) {
            let mut h = Vec::with_capacity(c.n + 2);
            h.push(faces[0].h);
            h.extend_from_slice(&f.h);
            h.push(faces[1].h);
            let mut v = Vec::with_capacity(c.n + 2);
            v.push(faces[0].v);
            v.extend_from_slice(&f.v);
            v.push(faces[1].v);
            let m = h.len();
            let (y1, y2): (Vec<f64>, Vec<f64>) = (0..m).map(|j| invariants(mode, c.hn[j], c.g, h[j], v[j])).unzip();
            let cf = match mode {
                Mode::Linear => {
                    let op = |a: &[f64], b: &[f64]| -> (Vec<f64>, Vec<f64>) {
                        let da = diff(&c.xs, a);
                        let db = diff(&c.xs, b);
                        (0..m)
                            .map(|j| {
                                (
                                    -c.lambda1[j] * da[j] - c.gamma1[j] * a[j] - c.delta1[j] * b[j],
                                    c.lambda2[j] * db[j] - c.gamma2[j] * a[j] - c.delta2[j] * b[j],
                                )
                            })
                            .unzip()
                    };
                    let (dy1, dy2) = op(&y1, &y2);
                    let (ddy1, ddy2) = op(&dy1, &dy2);
                    CharFields { channel: c.id, x: c.xs.clone(), y1, y2, dy1, dy2, ddy1, ddy2 }
                }
                Mode::Nonlinear => {
                    let (g, cf, p) = (c.g, c.friction, c.exponent);
                    let big_h: Vec<f64> = (0..m).map(|j| c.hn[j] + h[j]).collect();
                    let big_v: Vec<f64> = (0..m).map(|j| c.vn[j] + v[j]).collect();
                    let (fm, fv): (Vec<f64>, Vec<f64>) = (0..m)
                        .map(|j| {
                            let fl = dflux(mode, c.hn[j], c.vn[j], g, h[j], v[j]);
                            (fl[0], fl[1])
                        })
                        .unzip();
                    let dfm = diff(&c.xs, &fm);
                    let dfv = diff(&c.xs, &fv);
                    let dh: Vec<f64> = (0..m).map(|j| -dfm[j]).collect();
                    let dv: Vec<f64> = (0..m)
                        .map(|j| -dfv[j] - dsource(mode, c.hn[j], c.vn[j], cf, p, g, h[j], v[j]))
                        .collect();
                    let am: Vec<f64> = (0..m).map(|j| big_v[j] * dh[j] + big_h[j] * dv[j]).collect();
                    let av: Vec<f64> = (0..m).map(|j| g * dh[j] + big_v[j] * dv[j]).collect();
                    let dam = diff(&c.xs, &am);
                    let dav = diff(&c.xs, &av);
                    let mut dy1 = vec![0.0; m];
                    let mut dy2 = vec![0.0; m];
                    let mut ddy1 = vec![0.0; m];
                    let mut ddy2 = vec![0.0; m];
                    for j in 0..m {
                        let (hh, vv) = (big_h[j], big_v[j]);
                        let (s_h, s_v) = if cf == 0.0 {
                            (0.0, 0.0)
                        } else {
                            (-p * g * cf * vv * vv.abs() / hh.powf(p + 1.0), 2.0 * g * cf * vv.abs() / hh.powf(p))
                        };
                        let ddh = -dam[j];
                        let ddv = -dav[j] - s_h * dh[j] - s_v * dv[j];
                        let r = (g / hh).sqrt();
                        let corr = 0.5 * g.sqrt() * hh.powf(-1.5) * dh[j] * dh[j];
                        dy1[j] = dv[j] + r * dh[j];
                        dy2[j] = dv[j] - r * dh[j];
                        ddy1[j] = ddv + r * ddh - corr;
                        ddy2[j] = ddv - r * ddh + corr;
                    }
                    CharFields { channel: c.id, x: c.xs.clone(), y1, y2, dy1, dy2, ddy1, ddy2 }
                }
            };
            out.push(cf);
        }
        Ok(out)
    }

    /// `V`, `V_ext`, the boundary term `B` and L² norms of a state.
    pub fn sample(&mut self, state: &SimState) -> Result<TraceSample, SimError> {
        let fields = self.characteristic_fields(state)?;
        let mut v0 = 0.0;
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        let mut boundary = 0.0;
        let mut channel_l2 = Vec::with_capacity(fields.len());
        for ((c, cf), f) in self.chans.iter().zip(&fields).zip(&state.fields) {
            let energy = |a: &[f64], b: &[f64]| {
                let e: Vec<f64> = (0..a.len()).map(|j| c.f1[j] * a[j] * a[j] + c.f2[j] * b[j] * b[j]).collect();
                trapezoid(&c.xs, &e)
            };
            v0 += energy(&cf.y1, &cf.y2);
            v1 += energy(&cf.dy1, &cf.dy2);
            v2 += energy(&cf.ddy1, &cf.ddy2);
            let end = |j: usize| {
                c.f1[j] * c.lambda1[j] * cf.y1[j] * cf.y1[j] - c.f2[j] * c.lambda2[j] * cf.y2[j] * cf.y2[j]
            };
            boundary += end(cf.x.len() - 1) - end(0);
            let sq: f64 = f.h.iter().zip(&f.v).map(|(h, v)| h * h + v * v).sum();
            channel_l2.push((c.dx * sq).sqrt());
        }
        let l2 = channel_l2.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(TraceSample { t: state.time, v: v0, v_ext: v0 + v1 + v2, l2, boundary, channel_l2 })
    }

    pub fn snapshot(&self, state: &SimState) -> Snapshot {
        let mut rows = Vec::new();
        for (c, f) in self.chans.iter().zip(&state.fields) {
            for k in 0..c.n {
                rows.push(SnapshotRow {
                    channel: c.id,
                    x: (k as f64 + 0.5) * c.dx,
                    depth: c.hc[k] + f.h[k],
                    velocity: c.vc[k] + f.v[k],
                    h: f.h[k],
                    v: f.v[k],
                });
            }
        }
        Snapshot { time: state.time, rows }
    }

    /// Fixed time step for a run: `T / ceil(T / (cfl · bound))`.
    pub fn time_step(&self, state: &SimState, t_final: f64, cfl: f64) -> (f64, usize) {
        let steps = (t_final / (cfl * self.cfl_bound(&state.fields))).ceil().max(1.0) as usize;
        (t_final / steps as f64, steps)
    }

    /// Advances `init` to `opts.t_final`, sampling the Lyapunov trace every
    /// `sample_stride` steps and at the final time.
    pub fn run(&mut self, init: SimState, opts: &RunOptions) -> Result<RunOutput, SimError> {
        if !(opts.t_final > 0.0 && opts.t_final.is_finite()) {
            return Err(SimError::BadOptions(format!("final time {}", opts.t_final)));
        }
        if !(opts.cfl > 0.0 && opts.cfl <= CFL_LIMIT) {
            return Err(SimError::BadOptions(format!("cfl {} outside (0, {CFL_LIMIT}]", opts.cfl)));
        }
        if opts.sample_stride == 0 {
            return Err(SimError::BadOptions("sample_stride must be positive".into()));
        }
        self.junction_residual = 0.0;
        self.root_flux_error = 0.0;
        let mut state = init;
        state.time = 0.0;
        self.check(&state.fields, 0.0)?;
        let (dt, steps) = self.time_step(&state, opts.t_final, opts.cfl);
        let mut snap_at: Vec<usize> =
            opts.snapshot_times.iter().map(|&t| ((t / dt).round().max(0.0) as usize).min(steps)).collect();
        snap_at.sort_unstable();
        snap_at.dedup();

        let mut trace = LyapunovTrace { channels: self.channel_ids(), samples: vec![self.sample(&state)?] };
        let mut snapshots = Vec::new();
        if snap_at.first() == Some(&0) {
            snapshots.push(self.snapshot(&state));
        }
        let mut mass = match self.mode {
            Mode::Nonlinear => Some(0.0f64),
            Mode::Linear => None,
        };
        for n in 1..=steps {
            let before = self.volume(&state);
            let rate = self.step(&mut state, dt)?;
            state.time = n as f64 * dt;
            if let Some(m) = mass.as_mut() {
                let res = ((self.volume(&state) - before) / dt - rate).abs();
                *m = m.max(res);
            }
            if n % opts.sample_stride == 0 || n == steps {
                trace.samples.push(self.sample(&state)?);
            }
            if snap_at.binary_search(&n).is_ok() {
                snapshots.push(self.snapshot(&state));
            }
        }
        Ok(RunOutput {
            dt,
            steps,
            trace,
            snapshots,
            final_state: state,
            mass_residual: mass,
            junction_residual: self.junction_residual,
            root_flux_error: self.root_flux_error,
        })
    }
}
