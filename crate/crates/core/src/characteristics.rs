//! Characteristic speeds, coupling coefficients and Riemann-type variables.

use serde::Serialize;
use thiserror::Error;

use crate::steady::SteadyProfile;

pub const FORM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("supercritical state: H = {h}, V = {v}")]
    SupercriticalState { h: f64, v: f64 },
    #[error("non-positive depth {0}")]
    NegativeDepth(f64),
    #[error("coefficient forms disagree by {gap:e} at x = {x} in channel {channel}")]
    FormMismatch { channel: usize, x: f64, gap: f64 },
}

pub fn eigenvalues(h: f64, v: f64, g: f64) -> Result<(f64, f64), CoeffError> {
    if h <= 0.0 {
        return Err(CoeffError::NegativeDepth(h));
    }
    if g * h - v * v <= 0.0 {
        return Err(CoeffError::SupercriticalState { h, v });
    }
    let c = (g * h).sqrt();
    Ok((v + c, c - v))
}

/// Pointwise coupling coefficients `(γ1, δ1, γ2, δ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupling {
    pub gamma1: f64,
    pub delta1: f64,
    pub gamma2: f64,
    pub delta2: f64,
}

impl Coupling {
    fn from_scale(scale: f64, h: f64, v: f64, g: f64, p: f64) -> Self {
        if scale == 0.0 {
            return Self { gamma1: 0.0, delta1: 0.0, gamma2: 0.0, delta2: 0.0 };
        }
        let c = (g * h).sqrt();
        let (l1, l2) = (v + c, c - v);
        let half_p = p / (2.0 * c);
        let inv_v = 1.0 / v;
        Self {
            gamma1: scale * (-0.75 / l1 + inv_v - half_p),
            delta1: scale * (-0.25 / l1 + inv_v + half_p),
            gamma2: scale * (0.25 / l2 + inv_v - half_p),
            delta2: scale * (0.75 / l2 + inv_v + half_p),
        }
    }

    fn max_rel_gap(&self, other: &Self) -> f64 {
        let pairs = [
            (self.gamma1, other.gamma1),
            (self.delta1, other.delta1),
            (self.gamma2, other.gamma2),
            (self.delta2, other.delta2),
        ];
        pairs
            .iter()
            .map(|(a, b)| {
                let s = a.abs().max(b.abs());
                if s == 0.0 { 0.0 } else { (a - b).abs() / s }
            })
            .fold(0.0, f64::max)
    }
}

/// Coefficients from the friction law.
pub fn coupling_friction(h: f64, v: f64, c: f64, p: f64, g: f64) -> Coupling {
    let scale = if c == 0.0 || v == 0.0 { 0.0 } else { g * c * v * v / h.powf(p) };
    Coupling::from_scale(scale, h, v, g, p)
}

/// Coefficients expressed through the steady slope `hx = dH*/dx`.
pub fn coupling_gradient(h: f64, v: f64, hx: f64, p: f64, g: f64) -> Coupling {
    let c = (g * h).sqrt();
    let scale = if hx == 0.0 || v == 0.0 { 0.0 } else { -(hx / h) * (v + c) * (c - v) };
    Coupling::from_scale(scale, h, v, g, p)
}

/// Coefficient profiles sampled on the fine grid of a steady profile.
#[derive(Debug, Clone, Serialize)]
pub struct CharCoeffs {
    pub channel: usize,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub delta1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub delta2: Vec<f64>,
    /// Largest relative gap between the two algebraic forms.
    pub form_gap: f64,
}

impl CharCoeffs {
    pub fn len(&self) -> usize {
        self.lambda1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda1.is_empty()
    }

    pub fn coupling(&self, i: usize) -> Coupling {
        Coupling { gamma1: self.gamma1[i], delta1: self.delta1[i], gamma2: self.gamma2[i], delta2: self.delta2[i] }
    }
}

pub fn coupling_coefficients(profile: &SteadyProfile) -> Result<CharCoeffs, CoeffError> {
    let n = profile.nodes();
    let (g, c, p) = (profile.gravity, profile.friction, profile.friction_exponent);
    let mut out = CharCoeffs {
        channel: profile.channel,
        lambda1: Vec::with_capacity(n),
        lambda2: Vec::with_capacity(n),
        gamma1: Vec::with_capacity(n),
        delta1: Vec::with_capacity(n),
        gamma2: Vec::with_capacity(n),
        delta2: Vec::with_capacity(n),
        form_gap: 0.0,
    };
    for i in 0..n {
        let (h, v) = (profile.h_star[i], profile.v_star[i]);
        let (l1, l2) = eigenvalues(h, v, g)?;
        let a = coupling_friction(h, v, c, p, g);
        let b = coupling_gradient(h, v, profile.slope(i), p, g);
        let gap = a.max_rel_gap(&b);
        if gap > FORM_TOL {
            return Err(CoeffError::FormMismatch { channel: profile.channel, x: profile.x[i], gap });
        }
        out.form_gap = out.form_gap.max(gap);
        out.lambda1.push(l1);
        out.lambda2.push(l2);
        out.gamma1.push(a.gamma1);
        out.delta1.push(a.delta1);
        out.gamma2.push(a.gamma2);
        out.delta2.push(a.delta2);
    }
    Ok(out)
}

pub fn riemann_forward(h: f64, v: f64, h_star: f64, g: f64) -> (f64, f64) {
    let s = (g / h_star).sqrt();
    (v + h * s, v - h * s)
}

pub fn riemann_inverse(y1: f64, y2: f64, h_star: f64, g: f64) -> (f64, f64) {
    let s = (g / h_star).sqrt();
    ((y1 - y2) / (2.0 * s), 0.5 * (y1 + y2))
}

pub fn nonlinear_change(h: f64, v: f64, h_star: f64, v_star: f64, g: f64) -> Result<(f64, f64), CoeffError> {
    if h <= 0.0 {
        return Err(CoeffError::NegativeDepth(h));
    }
    if h_star <= 0.0 {
        return Err(CoeffError::NegativeDepth(h_star));
    }
    let d = 2.0 * ((g * h).sqrt() - (g * h_star).sqrt());
    let dv = v - v_star;
    Ok((dv + d, dv - d))
}

pub fn nonlinear_inverse(y1: f64, y2: f64, h_star: f64, v_star: f64, g: f64) -> Result<(f64, f64), CoeffError> {
    let root = (g * h_star).sqrt() + 0.25 * (y1 - y2);
    if root <= 0.0 {
        return Err(CoeffError::NegativeDepth(root));
    }
    Ok((root * root / g, v_star + 0.5 * (y1 + y2)))
}
