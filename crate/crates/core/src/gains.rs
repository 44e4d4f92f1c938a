//! Admissible outlet gains.

use serde::Serialize;
use thiserror::Error;

use crate::steady::SteadyProfile;
use crate::weights::m_at;

/// Relative width below which the finite interval degenerates to a half-line.
pub const HALF_LINE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("channel {0}: zero flux, boundary constants undefined")]
    DegenerateFlux(usize),
    #[error("gain {k} is the reflection pole sqrt(g/H) = {pole}")]
    ReflectionPole { k: f64, pole: f64 },
    #[error("channel {0}: gain is not a finite number")]
    NotAdmissibleInput(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryConstants {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub m_l: f64,
    pub h_l: f64,
    pub gravity: f64,
}

pub fn boundary_constants(profile: &SteadyProfile) -> Result<BoundaryConstants, GainError> {
    let q = profile.flux;
    if q == 0.0 {
        return Err(GainError::DegenerateFlux(profile.channel));
    }
    let (g, h) = (profile.gravity, profile.h_end());
    let sq = (g * h).sqrt();
    let v = q / h;
    let (num, den) = m_at(h, profile.h0(), q, profile.friction_exponent, g);
    Ok(BoundaryConstants { lambda_plus: sq + v, lambda_minus: sq - v, m_l: num / den, h_l: h, gravity: g })
}

/// Closed forbidden set `[lower, upper]`; `lower = None` means `-∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForbiddenInterval {
    pub lower: Option<f64>,
    pub upper: f64,
    pub half_line: bool,
}

impl ForbiddenInterval {
    pub fn contains(&self, k: f64) -> bool {
        k <= self.upper && self.lower.is_none_or(|a| k >= a)
    }

    pub fn scale(&self) -> f64 {
        self.upper.abs().max(self.lower.map_or(0.0, f64::abs)).max(1.0)
    }
}

pub fn forbidden_interval(lambda_plus: f64, lambda_minus: f64, m_l: f64, h_l: f64, g: f64) -> ForbiddenInterval {
    let s = (g / h_l).sqrt();
    let diff = lambda_plus - m_l * lambda_minus;
    let sum = lambda_plus + m_l * lambda_minus;
    if diff.abs() <= HALF_LINE_TOL * lambda_plus {
        // the upper end tends to zero with the denominator of the lower end
        ForbiddenInterval { lower: None, upper: 0.0, half_line: true }
    } else {
        ForbiddenInterval { lower: Some(-s * sum / diff), upper: -s * diff / sum, half_line: false }
    }
}

pub fn interval_for(consts: &BoundaryConstants) -> ForbiddenInterval {
    forbidden_interval(consts.lambda_plus, consts.lambda_minus, consts.m_l, consts.h_l, consts.gravity)
}

/// `c = (1 + X)/(X - 1)` with `X = k sqrt(H/g)`.
pub fn reflection_coefficient(k: f64, h: f64, g: f64) -> Result<f64, GainError> {
    let x = k * (h / g).sqrt();
    if (x - 1.0).abs() <= 1e-14 {
        return Err(GainError::ReflectionPole { k, pole: (g / h).sqrt() });
    }
    Ok((1.0 + x) / (x - 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct GainRecord {
    pub channel: usize,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub half_line: bool,
    pub k: f64,
    pub admissible: bool,
    pub c: f64,
    #[serde(rename = "eta_bar_L")]
    pub eta_bar_l: Option<f64>,
    #[serde(rename = "phi_L")]
    pub phi_l: Option<f64>,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    #[serde(rename = "m_L")]
    pub m_l: Option<f64>,
    /// Whether the interval verdict agrees with `c² > η̄²/φ²`.
    pub consistent: bool,
}

/// Verdict for gain `k` at the outlet of `profile`, cross-checked against
/// the reflection criterion using `η̄(L)` and `φ(L)` from the weight module.
pub fn is_admissible(profile: &SteadyProfile, k: f64, eta_bar_l: Option<f64>, phi_l: Option<f64>) -> Result<GainRecord, GainError> {
    if !k.is_finite() {
        return Err(GainError::NotAdmissibleInput(profile.channel));
    }
    let (g, h) = (profile.gravity, profile.h_end());
    let c = reflection_coefficient(k, h, g)?;
    let sq = (g * h).sqrt();
    let v = profile.v_end();
    if profile.flux == 0.0 {
        let admissible = k > 0.0;
        return Ok(GainRecord {
            channel: profile.channel,
            a: None,
            b: Some(0.0),
            half_line: true,
            k,
            admissible,
            c,
            eta_bar_l: None,
            phi_l,
            lambda_plus: sq + v,
            lambda_minus: sq - v,
            m_l: None,
            consistent: admissible == (c * c > 1.0),
        });
    }
    let consts = boundary_constants(profile)?;
    let interval = interval_for(&consts);
    let admissible = !interval.contains(k);
    let consistent = match (eta_bar_l, phi_l) {
        (Some(e), Some(p)) => admissible == (c * c > (e / p).powi(2)),
        _ => true,
    };
    Ok(GainRecord {
        channel: profile.channel,
        a: interval.lower,
        b: Some(interval.upper),
        half_line: interval.half_line,
        k,
        admissible,
        c,
        eta_bar_l,
        phi_l,
        lambda_plus: consts.lambda_plus,
        lambda_minus: consts.lambda_minus,
        m_l: Some(consts.m_l),
        consistent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleChannelVerdict {
    pub inlet_ok: bool,
    pub outlet_ok: bool,
    pub c0: f64,
    pub ok: bool,
}

/// Inlet gain `k0` and outlet gain `kl` for an isolated channel with
/// feedback at both ends.
pub fn single_channel_conditions(profile: &SteadyProfile, k0: f64, kl: f64) -> Result<SingleChannelVerdict, GainError> {
    let (g, h0) = (profile.gravity, profile.h0());
    let sq = (g * h0).sqrt();
    let den = k0 * h0 - sq;
    let c0 = if den == 0.0 { f64::INFINITY } else { (k0 * h0 + sq) / den };
    let inlet_ok = c0 * c0 <= 1.0;
    let outlet_ok = if profile.flux == 0.0 {
        kl > 0.0
    } else {
        !interval_for(&boundary_constants(profile)?).contains(kl)
    };
    Ok(SingleChannelVerdict { inlet_ok, outlet_ok, c0, ok: inlet_ok && outlet_ok })
}
