//! Per-channel Lyapunov weight profiles.
//!
//! Everything here lives on the fine grid of a [`SteadyProfile`]. The
//! Riccati-type equations are integrated together with the steady depth and
//! the exponential factors, so the ODE solutions never depend on the
//! quadrature used for the closed-form profiles.

use serde::Serialize;
use thiserror::Error;

use crate::characteristics::{coupling_friction, CharCoeffs};
use crate::ode::{Dopri5, OdeError};
use crate::quadrature::cumulative_simpson;
use crate::steady::SteadyProfile;

/// Values of `η/φ` above this are treated as a finite-distance blow-up.
/// Scaling by `φ` keeps long weakly damped channels, where `φ` itself grows
/// past any fixed level, from being reported as blow-ups.
pub const BLOWUP_LEVEL: f64 = 1e12;
pub const RICCATI_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("channel {0}: zero flux, m(x) is undefined")]
    DegenerateFlux(usize),
    #[error("channel {channel}: m(x) denominator not positive at x = {x}")]
    BadDenominator { channel: usize, x: f64 },
    #[error("channel {channel}: Riccati solution blows up near x = {x}")]
    RiccatiBlowup { channel: usize, x: f64 },
    #[error("channel {channel}: epsilon {epsilon:e} too large, solution blows up near x = {x}")]
    EpsilonTooLarge { channel: usize, epsilon: f64, x: f64 },
    #[error("channel {channel}: integration failed: {source}")]
    Integration { channel: usize, source: OdeError },
    #[error("channel {0}: junction weight W is zero")]
    ZeroW(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiProfiles {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi: Vec<f64>,
}

/// `φ1 = exp ∫ γ1/λ1`, `φ2 = exp(-∫ δ2/λ2)` and their ratio.
pub fn phi_profiles(profile: &SteadyProfile, coeffs: &CharCoeffs) -> PhiProfiles {
    let h = profile.fine_dx();
    let a: Vec<f64> = coeffs.gamma1.iter().zip(&coeffs.lambda1).map(|(g, l)| g / l).collect();
    let b: Vec<f64> = coeffs.delta2.iter().zip(&coeffs.lambda2).map(|(d, l)| d / l).collect();
    let ia = cumulative_simpson(&a, h);
    let ib = cumulative_simpson(&b, h);
    let phi1: Vec<f64> = ia.iter().map(|v| v.exp()).collect();
    let phi2: Vec<f64> = ib.iter().map(|v| (-v).exp()).collect();
    let phi = ia.iter().zip(&ib).map(|(x, y)| (x + y).exp()).collect();
    PhiProfiles { phi1, phi2, phi }
}

/// `η0 = (λ2/λ1) φ`.
pub fn eta_zero(coeffs: &CharCoeffs, phi: &PhiProfiles) -> Vec<f64> {
    coeffs.lambda2.iter().zip(&coeffs.lambda1).zip(&phi.phi).map(|((l2, l1), f)| l2 / l1 * f).collect()
}

/// Right-hand side of the weight Riccati equation at one point.
pub fn riccati_rhs(lambda1: f64, lambda2: f64, delta1: f64, gamma2: f64, phi: f64, eta: f64) -> f64 {
    delta1 * phi / lambda1 + gamma2 * eta * eta / (lambda2 * phi)
}

/// Sup-norm residual of the `η0` equation, with `η0'` from the chain rule
/// through the steady slope.
pub fn eta_zero_residual(profile: &SteadyProfile, coeffs: &CharCoeffs, phi: &PhiProfiles, eta0: &[f64]) -> f64 {
    let g = profile.gravity;
    (0..profile.nodes())
        .map(|i| {
            let (h, v) = (profile.h_star[i], profile.v_star[i]);
            let hx = profile.slope(i);
            let c = (g * h).sqrt();
            let (l1, l2) = (coeffs.lambda1[i], coeffs.lambda2[i]);
            let dl1 = hx * (-v / h + g / (2.0 * c));
            let dl2 = hx * (v / h + g / (2.0 * c));
            let dphi = coeffs.gamma1[i] / l1 + coeffs.delta2[i] / l2;
            let deta = eta0[i] * (dl2 / l2 - dl1 / l1 + dphi);
            let r = riccati_rhs(l1, l2, coeffs.delta1[i], coeffs.gamma2[i], phi.phi[i], eta0[i]);
            (deta - r).abs()
        })
        .fold(0.0, f64::max)
}

/// Closed-form `m` at depth `h` for a channel entering at depth `h0`.
pub fn m_at(h: f64, h0: f64, q: f64, p: f64, g: f64) -> (f64, f64) {
    let sg = g.sqrt();
    let a = (3.0 + 2.0 * p) / 2.0;
    let common = sg / ((3.0 + p) * q) * h.powf(3.0 + p)
        + (1.0 + p) * sg / (2.0 * (3.0 + p) * q) * h0.powf(3.0 + p)
        + q / (2.0 * sg) * (h.powf(p) - h0.powf(p));
    let half = 0.5 * h.powf(a);
    (common + half, common - half)
}

pub fn m_profile(profile: &SteadyProfile) -> Result<Vec<f64>, WeightError> {
    let q = profile.flux;
    if q == 0.0 {
        return Err(WeightError::DegenerateFlux(profile.channel));
    }
    let (p, g, h0) = (profile.friction_exponent, profile.gravity, profile.h0());
    profile
        .h_star
        .iter()
        .zip(&profile.x)
        .map(|(&h, &x)| {
            let (num, den) = m_at(h, h0, q, p, g);
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(WeightError::BadDenominator { channel: profile.channel, x })
            }
        })
        .collect()
}

/// `η̄ = m η0`.
pub fn eta_bar_closed(profile: &SteadyProfile, coeffs: &CharCoeffs, phi: &PhiProfiles) -> Result<Vec<f64>, WeightError> {
    let m = m_profile(profile)?;
    Ok(m.iter().zip(eta_zero(coeffs, phi)).map(|(m, e)| m * e).collect())
}

/// Solution of the weight Riccati equation on the fine grid.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiProfile {
    pub eta: Vec<f64>,
    /// `η'` including the `ε` shift.
    pub slope: Vec<f64>,
    pub epsilon: f64,
}

/// Integrates `[H, ln φ1, ln φ2, η]` from the inlet with `η(0) = eta_init`
/// and `η' = r(η) + ε`.
pub fn riccati_solve(profile: &SteadyProfile, eta_init: f64, eps: f64) -> Result<RiccatiProfile, OdeError> {
    let (q, c, p, g) = (profile.flux, profile.friction, profile.friction_exponent, profile.gravity);
    let flat = c == 0.0 || q == 0.0;
    let rhs = move |_: f64, y: &[f64; 4]| {
        let h = y[0];
        let v = q / h;
        let sq = (g * h).sqrt();
        let (l1, l2) = (v + sq, sq - v);
        let k = coupling_friction(h, v, c, p, g);
        let phi = (y[1] - y[2]).exp();
        let hx = if flat { 0.0 } else { -g * c * v * v / (h.powf(p - 1.0) * (g * h - v * v)) };
        [hx, k.gamma1 / l1, -k.delta2 / l2, riccati_rhs(l1, l2, k.delta1, k.gamma2, phi, y[3]) + eps]
    };
    let ys = Dopri5::with_tol(RICCATI_TOL, RICCATI_TOL).integrate(
        rhs,
        0.0,
        [profile.h0(), 0.0, 0.0, eta_init],
        &profile.x[1..],
        |_, y| (y[3] * (y[2] - y[1]).exp()).abs() < BLOWUP_LEVEL && y[0] > 0.0,
    )?;
    let mut eta = Vec::with_capacity(profile.nodes());
    let mut slope = Vec::with_capacity(profile.nodes());
    let first = [profile.h0(), 0.0, 0.0, eta_init];
    for y in std::iter::once(&first).chain(ys.iter()) {
        eta.push(y[3]);
        slope.push(rhs(0.0, y)[3]);
    }
    Ok(RiccatiProfile { eta, slope, epsilon: eps })
}

/// Independent `η̄` from direct integration of the Riccati equation.
pub fn eta_bar_ode_oracle(profile: &SteadyProfile) -> Result<Vec<f64>, WeightError> {
    riccati_solve(profile, 1.0, 0.0).map(|r| r.eta).map_err(|e| match e {
        OdeError::Guard { x } => WeightError::RiccatiBlowup { channel: profile.channel, x },
        source => WeightError::Integration { channel: profile.channel, source },
    })
}

/// `ε`-perturbed weight profile. The trunk starts at `λ2(0)/λ1(0) + ε`,
/// every other channel at `1 + ε`.
pub fn eta_eps(profile: &SteadyProfile, coeffs: &CharCoeffs, eps: f64, is_trunk: bool) -> Result<RiccatiProfile, WeightError> {
    let init = if is_trunk { coeffs.lambda2[0] / coeffs.lambda1[0] + eps } else { 1.0 + eps };
    riccati_solve(profile, init, eps).map_err(|e| match e {
        OdeError::Guard { x } => WeightError::EpsilonTooLarge { channel: profile.channel, epsilon: eps, x },
        source => WeightError::Integration { channel: profile.channel, source },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthBoundCheck {
    pub rhs: f64,
    /// `rhs - lhs(x)` on the fine grid.
    pub margins: Vec<f64>,
    pub min_margin: f64,
}

/// Margin of the integral inequality bounding the growth of `η̄`.
pub fn growth_bound_check(profile: &SteadyProfile, coeffs: &CharCoeffs, phi: &PhiProfiles) -> GrowthBoundCheck {
    let h = profile.fine_dx();
    let inner: Vec<f64> = coeffs.gamma2.iter().zip(&coeffs.lambda1).map(|(g, l)| 2.0 * g / l).collect();
    let inner = cumulative_simpson(&inner, h);
    let integrand: Vec<f64> = (0..profile.nodes())
        .map(|i| inner[i].exp() * coeffs.gamma2[i] / (coeffs.lambda2[i] * phi.phi[i]))
        .collect();
    let lhs = cumulative_simpson(&integrand, h);
    let rhs = coeffs.lambda1[0] / (coeffs.lambda1[0] - coeffs.lambda2[0]);
    let margins: Vec<f64> = lhs.iter().map(|l| rhs - l).collect();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    GrowthBoundCheck { rhs, margins, min_margin }
}

/// `f1 = α φ1² / (λ1 η)`, `f2 = α φ2² η / λ2`.
pub fn weights(coeffs: &CharCoeffs, phi: &PhiProfiles, eta: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let n = eta.len();
    let f1 = (0..n).map(|i| alpha * phi.phi1[i].powi(2) / (coeffs.lambda1[i] * eta[i])).collect();
    let f2 = (0..n).map(|i| alpha * phi.phi2[i].powi(2) * eta[i] / coeffs.lambda2[i]).collect();
    (f1, f2)
}

/// `Z̃ = λ1 f1 - λ2 f2` and `W̃ = λ1 f1 + λ2 f2` at unit `α`, evaluated at one node.
pub fn z_w_tilde(phi: &PhiProfiles, eta: &[f64], i: usize) -> (f64, f64) {
    let a = phi.phi1[i].powi(2) / eta[i];
    let b = phi.phi2[i].powi(2) * eta[i];
    (a - b, a + b)
}

/// Interior dissipation matrix at node `i`, assembled from its definition
/// with the weight derivatives taken analytically.
pub fn interior_matrix(
    coeffs: &CharCoeffs,
    phi: &PhiProfiles,
    riccati: &RiccatiProfile,
    alpha: f64,
    i: usize,
) -> [[f64; 2]; 2] {
    let (l1, l2) = (coeffs.lambda1[i], coeffs.lambda2[i]);
    let k = coeffs.coupling(i);
    let (p1, p2, eta, deta) = (phi.phi1[i], phi.phi2[i], riccati.eta[i], riccati.slope[i]);
    let f1 = alpha * p1 * p1 / (l1 * eta);
    let f2 = alpha * p2 * p2 * eta / l2;
    // (f1 λ1)' = α (φ1²/η)' and (f2 λ2)' = α (φ2² η)'.
    let dp1 = k.gamma1 / l1;
    let dp2 = -k.delta2 / l2;
    let d_f1l1 = alpha * p1 * p1 * (2.0 * dp1 / eta - deta / (eta * eta));
    let d_f2l2 = alpha * p2 * p2 * (2.0 * dp2 * eta + deta);
    let off = f1 * k.delta1 + f2 * k.gamma2;
    [[-d_f1l1 + 2.0 * f1 * k.gamma1, off], [off, d_f2l2 + 2.0 * f2 * k.delta2]]
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
pub fn min_eig_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let hi = mean + rad;
    // a d - b² = λmin λmax avoids cancellation in mean - rad.
    if hi > 0.0 { (a * d - b * b) / hi } else { mean - rad }
}
