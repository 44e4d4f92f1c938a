//! Network-level Lyapunov certificate.
//!
//! Assembles the per-channel weights, fixes the scaling `α` of each channel
//! from its parent, and checks every strict inequality that makes the
//! boundary form and the interior dissipation positive.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::characteristics::{coupling_coefficients, CharCoeffs, CoeffError};
use crate::gains::{reflection_coefficient, GainError};
use crate::steady::NetworkSteady;
use crate::topology::Network;
use crate::weights::{
    eta_bar_closed, eta_eps, interior_matrix, min_eig_2x2, phi_profiles, weights, z_w_tilde, PhiProfiles,
    RiccatiProfile, WeightError,
};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const MAX_HALVINGS: usize = 20;
/// Relative eigenvalue floor for declaring a matrix positive definite.
pub const POSITIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertError {
    #[error("missing gains for terminal channels {0:?}")]
    MissingGain(Vec<usize>),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
}

/// Quantities that do not depend on `ε`.
#[derive(Debug, Clone)]
pub struct ChannelBase {
    pub coeffs: CharCoeffs,
    pub phi: PhiProfiles,
    /// `η̄` in closed form; `None` for zero-flux channels.
    pub eta_bar: Option<Vec<f64>>,
}

pub fn channel_bases(net: &Network, steady: &NetworkSteady) -> Result<BTreeMap<usize, ChannelBase>, CertError> {
    let mut out = BTreeMap::new();
    for &id in net.order() {
        let prof = steady.get(id);
        let coeffs = coupling_coefficients(prof)?;
        let phi = phi_profiles(prof, &coeffs);
        let eta_bar = if prof.flux == 0.0 { None } else { Some(eta_bar_closed(prof, &coeffs, &phi)?) };
        out.insert(id, ChannelBase { coeffs, phi, eta_bar });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ChannelWeights {
    pub channel: usize,
    pub is_trunk: bool,
    pub alpha: f64,
    pub riccati: RiccatiProfile,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub z_tilde: (f64, f64),
    pub w_tilde: (f64, f64),
}

impl ChannelWeights {
    pub fn z(&self) -> (f64, f64) {
        (self.alpha * self.z_tilde.0, self.alpha * self.z_tilde.1)
    }

    pub fn w(&self) -> (f64, f64) {
        (self.alpha * self.w_tilde.0, self.alpha * self.w_tilde.1)
    }
}

/// All channel weights for one value of `ε`.
#[derive(Debug, Clone)]
pub struct NetworkWeights {
    pub epsilon: f64,
    pub channels: BTreeMap<usize, ChannelWeights>,
}

impl NetworkWeights {
    pub fn get(&self, id: usize) -> &ChannelWeights {
        &self.channels[&id]
    }
}

/// Propagates `α` from the root: each outgoing channel gets
/// `α_parent W̃_parent(L) / W̃_child(0)`, which makes `W` continuous across
/// every junction.
pub fn alpha_select(net: &Network, w_tilde: &BTreeMap<usize, (f64, f64)>, alpha_root: f64) -> Result<BTreeMap<usize, f64>, WeightError> {
    let mut alpha = BTreeMap::new();
    alpha.insert(net.root(), alpha_root);
    for &id in net.order() {
        if let Some((kids, _)) = net.children(id) {
            let a = alpha[&id] * w_tilde[&id].1;
            for &k in kids {
                let w0 = w_tilde[&k].0;
                if w0 == 0.0 {
                    return Err(WeightError::ZeroW(k));
                }
                alpha.insert(k, a / w0);
            }
        }
    }
    Ok(alpha)
}

pub fn network_weights(
    net: &Network,
    bases: &BTreeMap<usize, ChannelBase>,
    steady: &NetworkSteady,
    eps: f64,
    alpha_root: f64,
) -> Result<NetworkWeights, WeightError> {
    let mut ric = BTreeMap::new();
    let mut zt = BTreeMap::new();
    let mut wt = BTreeMap::new();
    for &id in net.order() {
        let base = &bases[&id];
        let is_trunk = id == net.root();
        let r = eta_eps(steady.get(id), &base.coeffs, eps, is_trunk)?;
        let last = r.eta.len() - 1;
        let (z0, w0) = z_w_tilde(&base.phi, &r.eta, 0);
        let (zl, wl) = z_w_tilde(&base.phi, &r.eta, last);
        zt.insert(id, (z0, zl));
        wt.insert(id, (w0, wl));
        ric.insert(id, r);
    }
    let alpha = alpha_select(net, &wt, alpha_root)?;
    let mut channels = BTreeMap::new();
    for &id in net.order() {
        let base = &bases[&id];
        let r = ric.remove(&id).unwrap();
        let (f1, f2) = weights(&base.coeffs, &base.phi, &r.eta, alpha[&id]);
        channels.insert(
            id,
            ChannelWeights {
                channel: id,
                is_trunk: id == net.root(),
                alpha: alpha[&id],
                riccati: r,
                f1,
                f2,
                z_tilde: zt[&id],
                w_tilde: wt[&id],
            },
        );
    }
    Ok(NetworkWeights { epsilon: eps, channels })
}

#[derive(Debug, Clone, Serialize)]
pub struct JunctionReport {
    pub channel: usize,
    pub degree: usize,
    pub outgoing: Vec<usize>,
    pub z_in_l: f64,
    pub z_out_0: Vec<f64>,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub zeta: f64,
    /// Full matrix before `ω` is dropped.
    pub matrix: Vec<Vec<f64>>,
    pub matrix_bar: Vec<Vec<f64>>,
    pub min_eig: f64,
    pub min_eig_bar: f64,
    pub max_abs_omega: f64,
    /// Leading-minor determinants from LU and from the row/column elimination.
    pub minors_lu: Vec<f64>,
    pub minors_elimination: Vec<f64>,
    pub elimination_consistent: bool,
    pub positive: bool,
}

fn sym_min_eig(m: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    let min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = e.iter().map(|v| v.abs()).fold(0.0, f64::max);
    (min, norm)
}

/// Junction matrix for the node after channel `id`, using the `α`-scaled
/// boundary combinations of the incoming and outgoing channels.
#[allow(clippy::too_many_arguments)]
pub fn junction_matrix(
    id: usize,
    outgoing: &[usize],
    z_in_l: f64,
    w_in_l: f64,
    z_out_0: &[f64],
    w_out_0: &[f64],
    h_l: f64,
    g: f64,
) -> JunctionReport {
    let n = outgoing.len();
    let deg = n + 1;
    let theta: Vec<f64> = z_out_0.iter().map(|z| z_in_l - z).collect();
    let omega: Vec<f64> = w_out_0.iter().map(|w| (g * h_l).sqrt() * (w_in_l - w) / h_l).collect();
    let zeta = g / h_l * (z_in_l - z_out_0.iter().sum::<f64>());

    let mut m = DMatrix::<f64>::from_element(deg, deg, z_in_l);
    for l in 0..n {
        m[(l, l)] = theta[l];
        m[(l, n)] = omega[l];
        m[(n, l)] = omega[l];
    }
    m[(n, n)] = zeta;
    let mut mbar = m.clone();
    for l in 0..n {
        mbar[(l, n)] = 0.0;
        mbar[(n, l)] = 0.0;
    }

    let (min_eig, _) = sym_min_eig(&m);
    let (min_eig_bar, norm_bar) = sym_min_eig(&mbar);

    let mut minors_lu = Vec::with_capacity(n);
    let mut minors_elimination = Vec::with_capacity(n);
    for k in 1..=n {
        minors_lu.push(mbar.view((0, 0), (k, k)).into_owned().determinant());
        let d2 = z_out_0[0];
        let theta2 = z_in_l - d2 + z_out_0[1..k].iter().map(|dl| d2 * z_in_l / dl).sum::<f64>();
        minors_elimination.push(theta2 * z_out_0[1..k].iter().map(|dl| -dl).product::<f64>());
    }
    let elimination_consistent = minors_lu.iter().zip(&minors_elimination).all(|(a, b)| a.signum() == b.signum());
    let to_rows = |x: &DMatrix<f64>| (0..deg).map(|r| (0..deg).map(|c| x[(r, c)]).collect()).collect();

    JunctionReport {
        channel: id,
        degree: deg,
        outgoing: outgoing.to_vec(),
        z_in_l,
        z_out_0: z_out_0.to_vec(),
        max_abs_omega: omega.iter().map(|v| v.abs()).fold(0.0, f64::max),
        theta,
        omega,
        zeta,
        matrix: to_rows(&m),
        matrix_bar: to_rows(&mbar),
        min_eig,
        min_eig_bar,
        minors_lu,
        minors_elimination,
        elimination_consistent,
        positive: min_eig_bar > POSITIVITY_TOL * norm_bar,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootReport {
    pub channel: usize,
    pub f1: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TerminalReport {
    pub channel: usize,
    pub k: f64,
    pub c: f64,
    pub margin: f64,
    pub zero_flux: bool,
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelReport {
    pub channel: usize,
    pub alpha: f64,
    pub z_0: f64,
    pub z_l: f64,
    pub w_0: f64,
    pub w_l: f64,
    pub eta_0: f64,
    pub eta_l: f64,
    pub phi_l: f64,
    pub eta_bar_l: Option<f64>,
    pub min_eig_n: f64,
    /// Smallest ratio of minimum to maximum eigenvalue of the interior matrix.
    pub min_eig_n_rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub worst: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkCertificate {
    pub certified: bool,
    pub epsilon: f64,
    pub halvings: usize,
    pub failed_checks: Vec<&'static str>,
    pub checks: Vec<CheckResult>,
    pub root: Option<RootReport>,
    pub junctions: Vec<JunctionReport>,
    pub terminals: Vec<TerminalReport>,
    pub channels: Vec<ChannelReport>,
    #[serde(skip)]
    pub weights: Option<NetworkWeights>,
}

pub const CHECK_INTERNAL_Z: &str = "internal_outlet_z";
pub const CHECK_BRANCH_Z: &str = "branch_inlet_z";
pub const CHECK_JUNCTION: &str = "junction_matrix";
pub const CHECK_ROOT: &str = "root_f1";
pub const CHECK_TERMINAL: &str = "terminal_margin";
pub const CHECK_INTERIOR: &str = "interior_matrix";
pub const CHECK_EXISTENCE: &str = "eta_existence";

/// Evaluates every check for a fixed set of weights.
pub fn evaluate(
    net: &Network,
    steady: &NetworkSteady,
    bases: &BTreeMap<usize, ChannelBase>,
    w: NetworkWeights,
    gains: &BTreeMap<usize, f64>,
    halvings: usize,
) -> Result<NetworkCertificate, CertError> {
    let mut channels = Vec::new();
    let mut interior_worst = f64::INFINITY;
    for &id in net.order() {
        let cw = w.get(id);
        let base = &bases[&id];
        let mut min_eig = f64::INFINITY;
        let mut min_rel = f64::INFINITY;
        for i in 0..cw.riccati.eta.len() {
            let nm = interior_matrix(&base.coeffs, &base.phi, &cw.riccati, cw.alpha, i);
            let e = min_eig_2x2(&nm);
            let mean = 0.5 * (nm[0][0] + nm[1][1]);
            let rad = (0.25 * (nm[0][0] - nm[1][1]).powi(2) + nm[0][1].powi(2)).sqrt();
            let norm = mean.abs() + rad;
            min_eig = min_eig.min(e);
            min_rel = min_rel.min(if norm > 0.0 { e / norm } else { 0.0 });
        }
        interior_worst = interior_worst.min(min_rel);
        let last = cw.riccati.eta.len() - 1;
        let (z0, zl) = cw.z();
        let (w0, wl) = cw.w();
        channels.push(ChannelReport {
            channel: id,
            alpha: cw.alpha,
            z_0: z0,
            z_l: zl,
            w_0: w0,
            w_l: wl,
            eta_0: cw.riccati.eta[0],
            eta_l: cw.riccati.eta[last],
            phi_l: base.phi.phi[last],
            eta_bar_l: base.eta_bar.as_ref().map(|e| e[last]),
            min_eig_n: min_eig,
            min_eig_n_rel: min_rel,
        });
    }

    // (a) and (b)
    let internal_worst = net.internals().iter().map(|&i| w.get(i).z().1).fold(f64::INFINITY, f64::min);
    let branch_worst = net
        .order()
        .iter()
        .filter(|&&i| i != net.root())
        .map(|&i| -w.get(i).z().0)
        .fold(f64::INFINITY, f64::min);

    // (c)
    let mut junctions = Vec::new();
    for &id in net.internals() {
        let (kids, _) = net.children(id).unwrap();
        let cw = w.get(id);
        let z_out: Vec<f64> = kids.iter().map(|&k| w.get(k).z().0).collect();
        let w_out: Vec<f64> = kids.iter().map(|&k| w.get(k).w().0).collect();
        let prof = steady.get(id);
        junctions.push(junction_matrix(id, kids, cw.z().1, cw.w().1, &z_out, &w_out, prof.h_end(), prof.gravity));
    }
    let junction_worst = junctions.iter().map(|j| j.min_eig_bar).fold(f64::INFINITY, f64::min);
    let junction_ok = junctions.iter().all(|j| j.positive);

    // (d)
    let root = net.root();
    let rp = steady.get(root);
    let rb = &bases[&root];
    let rw = w.get(root);
    let (l1, l2) = (rb.coeffs.lambda1[0], rb.coeffs.lambda2[0]);
    let v0 = rp.v_star[0];
    let f1 = if v0 != 0.0 {
        (l2 * l1 * l1 * rw.f2[0] - l1 * l2 * l2 * rw.f1[0]) / (v0 * v0)
    } else {
        // Zero inflow pins v(0) = 0; the root term is then quadratic in h(0).
        -rw.z().0 * rp.gravity / rp.h0()
    };
    let root_report = RootReport { channel: root, f1, positive: f1 > 0.0 };

    // (e)
    let mut terminals = Vec::new();
    for &id in net.terminals() {
        let k = gains[&id];
        let prof = steady.get(id);
        let c = reflection_coefficient(k, prof.h_end(), prof.gravity)?;
        let cw = w.get(id);
        let b = &bases[&id];
        let last = cw.f1.len() - 1;
        let margin = cw.f1[last] * b.coeffs.lambda1[last] * c * c - cw.f2[last] * b.coeffs.lambda2[last];
        let zero_flux = prof.flux == 0.0;
        let positive = if zero_flux { k > 0.0 } else { margin > 0.0 };
        terminals.push(TerminalReport { channel: id, k, c, margin, zero_flux, positive });
    }
    let terminal_worst = terminals.iter().map(|t| t.margin).fold(f64::INFINITY, f64::min);

    let checks = vec![
        CheckResult { name: CHECK_INTERNAL_Z, passed: internal_worst > 0.0, worst: internal_worst },
        CheckResult { name: CHECK_BRANCH_Z, passed: branch_worst > 0.0, worst: branch_worst },
        CheckResult { name: CHECK_JUNCTION, passed: junction_ok, worst: junction_worst },
        CheckResult { name: CHECK_ROOT, passed: root_report.positive, worst: f1 },
        CheckResult { name: CHECK_TERMINAL, passed: terminals.iter().all(|t| t.positive), worst: terminal_worst },
        CheckResult { name: CHECK_INTERIOR, passed: interior_worst > POSITIVITY_TOL, worst: interior_worst },
    ];
    let failed_checks: Vec<&'static str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(NetworkCertificate {
        certified: failed_checks.is_empty(),
        epsilon: w.epsilon,
        halvings,
        failed_checks,
        checks,
        root: Some(root_report),
        junctions,
        terminals,
        channels,
        weights: Some(w),
    })
}

/// Searches `ε = eps_start / 2^j`, `j = 0..=20`, and returns the first
/// certified result, or the last attempt if none certifies.
pub fn certify_network(
    net: &Network,
    steady: &NetworkSteady,
    gains: &BTreeMap<usize, f64>,
    eps_start: f64,
) -> Result<NetworkCertificate, CertError> {
    certify_network_scaled(net, steady, gains, eps_start, 1.0)
}

/// As [`certify_network`] with the root weight scaled by `alpha_root`.
pub fn certify_network_scaled(
    net: &Network,
    steady: &NetworkSteady,
    gains: &BTreeMap<usize, f64>,
    eps_start: f64,
    alpha_root: f64,
) -> Result<NetworkCertificate, CertError> {
    if !(eps_start > 0.0 && eps_start.is_finite()) {
        return Err(CertError::BadEpsilon(eps_start));
    }
    let missing: Vec<usize> = net.terminals().iter().copied().filter(|t| !gains.contains_key(t)).collect();
    if !missing.is_empty() {
        return Err(CertError::MissingGain(missing));
    }
    let bases = channel_bases(net, steady)?;
    let mut last = None;
    for j in 0..=MAX_HALVINGS {
        let eps = eps_start / f64::powi(2.0, j as i32);
        match network_weights(net, &bases, steady, eps, alpha_root) {
            Ok(w) => {
                let cert = evaluate(net, steady, &bases, w, gains, j)?;
                if cert.certified {
                    return Ok(cert);
                }
                last = Some(cert);
            }
            Err(WeightError::EpsilonTooLarge { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(last.unwrap_or_else(|| NetworkCertificate {
        certified: false,
        epsilon: eps_start / f64::powi(2.0, MAX_HALVINGS as i32),
        halvings: MAX_HALVINGS,
        failed_checks: vec![CHECK_EXISTENCE],
        checks: vec![CheckResult { name: CHECK_EXISTENCE, passed: false, worst: f64::NAN }],
        root: None,
        junctions: vec![],
        terminals: vec![],
        channels: vec![],
        weights: None,
    }))
}
