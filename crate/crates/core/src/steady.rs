//! Subcritical steady states along channels and through junctions.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ode::{Dopri5, OdeError};
use crate::topology::{ChannelSpec, Network, TopologyError};

/// Relative subcritical margin below which the steady ODE is considered to
/// have reached its singular point.
pub const MARGIN_TOL: f64 = 1e-6;

/// Fine-grid refinement factor relative to the simulation cells.
pub const REFINE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyError {
    #[error("negative flux {0}")]
    NegativeFlux(f64),
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("supercritical state: H = {h}, Q = {q} (gH - V^2 <= 0)")]
    SupercriticalState { h: f64, q: f64 },
    #[error("channel {channel}: inlet depth {h0} is not subcritical (critical depth {critical})")]
    SupercriticalStart { channel: usize, h0: f64, critical: f64 },
    #[error("channel {channel}: steady state blows up at x = {x_reached} before reaching L = {length}")]
    SteadyStateBlowup { channel: usize, x_reached: f64, length: f64 },
    #[error("channel {channel}: steady integration failed: {source}")]
    Integration { channel: usize, source: OdeError },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl SteadyError {
    pub fn channel(&self) -> Option<usize> {
        match self {
            Self::SupercriticalStart { channel, .. }
            | Self::SteadyStateBlowup { channel, .. }
            | Self::Integration { channel, .. } => Some(*channel),
            _ => None,
        }
    }
}

pub fn critical_depth(q: f64, g: f64) -> Result<f64, SteadyError> {
    if q < 0.0 {
        return Err(SteadyError::NegativeFlux(q));
    }
    Ok((q / g.sqrt()).powf(2.0 / 3.0))
}

/// Slope `dH/dx` of the steady depth.
pub fn steady_rhs(h: f64, q: f64, c: f64, p: f64, g: f64) -> Result<f64, SteadyError> {
    if h <= 0.0 {
        return Err(SteadyError::NonPositiveDepth(h));
    }
    let v = q / h;
    let margin = g * h - v * v;
    if margin <= 0.0 {
        return Err(SteadyError::SupercriticalState { h, q });
    }
    Ok(-g * c * v * v / (h.powf(p - 1.0) * margin))
}

fn rhs_unchecked(h: f64, q: f64, c: f64, p: f64, g: f64) -> f64 {
    let v = q / h;
    -g * c * v * v / (h.powf(p - 1.0) * (g * h - v * v))
}

/// Abscissa at which the steady depth starting from `h0` reaches `h`,
/// obtained by integrating `dx/dH` exactly. Infinite for a flat profile.
pub fn position_of_depth(h: f64, h0: f64, q: f64, c: f64, p: f64, g: f64) -> f64 {
    if c == 0.0 || q == 0.0 {
        return f64::INFINITY;
    }
    let q2 = q * q;
    let flux_term = if p.abs() < 1e-14 {
        q2 * (h0 / h).ln()
    } else {
        q2 * (h0.powf(p) - h.powf(p)) / p
    };
    (g * (h0.powf(p + 3.0) - h.powf(p + 3.0)) / (p + 3.0) - flux_term) / (g * c * q2)
}

/// Depth at which the relative subcritical margin `(gH - V^2)/(g H0)` equals
/// [`MARGIN_TOL`].
pub fn margin_depth(h0: f64, q: f64, g: f64) -> f64 {
    let target = MARGIN_TOL * g * h0;
    let f = |h: f64| g * h - q * q / (h * h) - target;
    let mut lo = (q / g.sqrt()).powf(2.0 / 3.0);
    let mut hi = h0;
    if f(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// Exact distance to the critical point for a channel starting at `h0`.
pub fn blowup_distance(h0: f64, q: f64, c: f64, p: f64, g: f64) -> f64 {
    let hc = (q / g.sqrt()).powf(2.0 / 3.0);
    position_of_depth(hc, h0, q, c, p, g)
}

/// Distance at which the margin tolerance is reached; the certified bound.
pub fn certified_blowup_bound(h0: f64, q: f64, c: f64, p: f64, g: f64) -> f64 {
    position_of_depth(margin_depth(h0, q, g), h0, q, c, p, g)
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyProfile {
    pub channel: usize,
    pub flux: f64,
    pub length: f64,
    pub friction: f64,
    pub friction_exponent: f64,
    pub gravity: f64,
    pub cells: usize,
    /// Fine grid with `REFINE * cells + 1` uniform nodes. Cell interfaces
    /// sit at nodes `REFINE * k`, cell centers at `REFINE * k + REFINE / 2`.
    pub x: Vec<f64>,
    pub h_star: Vec<f64>,
    pub v_star: Vec<f64>,
    pub critical_depth: f64,
    pub blowup_bound: f64,
    pub depth_ratio: f64,
}

impl SteadyProfile {
    pub fn h0(&self) -> f64 {
        self.h_star[0]
    }

    pub fn h_end(&self) -> f64 {
        *self.h_star.last().unwrap()
    }

    pub fn v_end(&self) -> f64 {
        *self.v_star.last().unwrap()
    }

    pub fn nodes(&self) -> usize {
        self.x.len()
    }

    /// Spacing of the fine grid.
    pub fn fine_dx(&self) -> f64 {
        self.length / (self.x.len() - 1) as f64
    }

    /// Width of a simulation cell.
    pub fn dx(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn interface_index(&self, k: usize) -> usize {
        REFINE * k
    }

    pub fn center_index(&self, k: usize) -> usize {
        REFINE * k + REFINE / 2
    }

    pub fn centers(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.cells).map(move |k| {
            let i = self.center_index(k);
            (self.x[i], self.h_star[i], self.v_star[i])
        })
    }

    pub fn interfaces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..=self.cells).map(move |k| {
            let i = self.interface_index(k);
            (self.x[i], self.h_star[i], self.v_star[i])
        })
    }

    /// Analytic slope `dH*/dx` at fine node `i`.
    pub fn slope(&self, i: usize) -> f64 {
        rhs_unchecked(self.h_star[i], self.flux, self.friction, self.friction_exponent, self.gravity)
    }

    pub fn max_flux_error(&self) -> f64 {
        let scale = self.flux.abs().max(f64::MIN_POSITIVE);
        self.h_star
            .iter()
            .zip(&self.v_star)
            .map(|(h, v)| (h * v - self.flux).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn min_margin(&self) -> f64 {
        let g = self.gravity;
        self.h_star.iter().zip(&self.v_star).map(|(h, v)| g * h - v * v).fold(f64::INFINITY, f64::min)
    }
}

/// Integrates the steady depth along one channel from inlet depth `h0`.
pub fn integrate_channel_steady(h0: f64, q: f64, spec: &ChannelSpec) -> Result<SteadyProfile, SteadyError> {
    integrate_with(h0, q, spec, Dopri5::with_tol(1e-13, 1e-15))
}

pub fn integrate_with(h0: f64, q: f64, spec: &ChannelSpec, solver: Dopri5) -> Result<SteadyProfile, SteadyError> {
    let (c, p, g, l) = (spec.friction, spec.friction_exponent, spec.gravity, spec.length);
    if h0 <= 0.0 || !h0.is_finite() {
        return Err(SteadyError::NonPositiveDepth(h0));
    }
    let hc = critical_depth(q, g)?;
    if g * h0 - (q / h0).powi(2) <= MARGIN_TOL * g * h0 {
        return Err(SteadyError::SupercriticalStart { channel: spec.id, h0, critical: hc });
    }
    let bound = certified_blowup_bound(h0, q, c, p, g);
    if l >= bound {
        return Err(SteadyError::SteadyStateBlowup { channel: spec.id, x_reached: bound, length: l });
    }

    let n = REFINE * spec.cells + 1;
    let x: Vec<f64> = (0..n).map(|i| l * i as f64 / (n - 1) as f64).collect();
    let h_star: Vec<f64> = if c == 0.0 || q == 0.0 {
        vec![h0; n]
    } else {
        let floor = MARGIN_TOL * g * h0;
        let ys = solver
            .integrate(
                |_, y: &[f64; 1]| [rhs_unchecked(y[0], q, c, p, g)],
                0.0,
                [h0],
                &x[1..],
                |_, y| y[0] > 0.0 && g * y[0] - (q / y[0]).powi(2) > floor,
            )
            .map_err(|e| match e {
                OdeError::Guard { x } => SteadyError::SteadyStateBlowup { channel: spec.id, x_reached: x, length: l },
                source => SteadyError::Integration { channel: spec.id, source },
            })?;
        std::iter::once(h0).chain(ys.into_iter().map(|y| y[0])).collect()
    };
    let v_star: Vec<f64> = h_star.iter().map(|h| q / h).collect();
    let depth_ratio = h_star[n - 1] / h0;
    Ok(SteadyProfile {
        channel: spec.id,
        flux: q,
        length: l,
        friction: c,
        friction_exponent: p,
        gravity: g,
        cells: spec.cells,
        x,
        h_star,
        v_star,
        critical_depth: hc,
        blowup_bound: bound,
        depth_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkSteady {
    pub profiles: BTreeMap<usize, SteadyProfile>,
}

impl NetworkSteady {
    pub fn get(&self, id: usize) -> &SteadyProfile {
        &self.profiles[&id]
    }
}

/// Solves every channel in root-first order, handing the parent's outlet
/// depth and a share of its flux to each child.
pub fn solve_network_steady(net: &Network, q_root: f64, h_root: f64) -> Result<NetworkSteady, SteadyError> {
    if q_root < 0.0 {
        return Err(SteadyError::NegativeFlux(q_root));
    }
    let mut profiles = BTreeMap::new();
    let mut inlet: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    inlet.insert(net.root(), (h_root, q_root));
    for &id in net.order() {
        let (h0, q) = inlet[&id];
        let prof = integrate_channel_steady(h0, q, net.channel(id))?;
        if let Some((kids, split)) = net.children(id) {
            let h_out = prof.h_end();
            let mut assigned = 0.0;
            for (n, (&kid, &s)) in kids.iter().zip(split).enumerate() {
                // The last branch takes the remainder so the fluxes add up.
                let qk = if n + 1 == kids.len() { q - assigned } else { s * q };
                assigned += qk;
                inlet.insert(kid, (h_out, qk));
            }
        }
        profiles.insert(id, prof);
    }
    Ok(NetworkSteady { profiles })
}

/// Affine outlet law `V = V*(L) + k (H - H*(L))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackLaw {
    pub h_ref: f64,
    pub v_ref: f64,
    pub gain: f64,
}

impl FeedbackLaw {
    pub fn eval(&self, h: f64) -> f64 {
        self.v_ref + self.gain * (h - self.h_ref)
    }

    pub fn derivative(&self) -> f64 {
        self.gain
    }
}

pub fn feedback_law(profile: &SteadyProfile, k: f64) -> FeedbackLaw {
    FeedbackLaw { h_ref: profile.h_end(), v_ref: profile.v_end(), gain: k }
}
