//! Shared fixtures and random generators for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use svnet::gains::{boundary_constants, interval_for};
use svnet::steady::{certified_blowup_bound, integrate_channel_steady, solve_network_steady, NetworkSteady, SteadyProfile};
use svnet::topology::{ChannelSpec, Junction, Network, NetworkTopology, DEFAULT_GRAVITY};

pub const G: f64 = DEFAULT_GRAVITY;
pub const EXPONENTS: [f64; 4] = [0.0, 1.0, 4.0 / 3.0, 2.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inflow parameters of a random subcritical channel: `(H0, Q, C, p)`.
pub fn random_inflow(r: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    loop {
        let h0: f64 = r.gen_range(0.6..5.0);
        let q = r.gen_range(0.2..3.0);
        let c = r.gen_range(1e-4..5e-3);
        let p = EXPONENTS[r.gen_range(0..EXPONENTS.len())];
        // keep the inlet Froude number below 0.9
        if q * q < 0.81 * G * h0.powi(3) {
            return (h0, q, c, p);
        }
    }
}

/// Random subcritical channel of length `fraction · blowup_bound`.
pub fn random_profile(r: &mut ChaCha8Rng, fraction: f64, cells: usize) -> SteadyProfile {
    let (h0, q, c, p) = random_inflow(r);
    let bound = certified_blowup_bound(h0, q, c, p, G);
    let spec = ChannelSpec::new(1, fraction * bound, c, p).with_cells(cells);
    integrate_channel_steady(h0, q, &spec).expect("random channel is below its blow-up bound")
}

/// Three-branch star used by the simulation criteria.
pub const STAR_Q: f64 = 1.5;
pub const STAR_H0: f64 = 2.0;

pub fn star(branches: usize, cells: usize) -> (Network, NetworkSteady) {
    let trunk = ChannelSpec::new(1, 400.0, 0.002, 1.0).with_cells(cells);
    let br = (0..branches).map(|i| ChannelSpec::new(i + 2, 250.0, 0.002, 1.0).with_cells(cells)).collect();
    let net = Network::new(NetworkTopology::star(trunk, br)).unwrap();
    let s = solve_network_steady(&net, STAR_Q, STAR_H0).unwrap();
    (net, s)
}

/// Gains `offset · sqrt(g/H*(L))` above each forbidden interval.
pub fn gains_above(net: &Network, s: &NetworkSteady, offset: f64) -> BTreeMap<usize, f64> {
    net.terminals()
        .iter()
        .map(|&t| {
            let p = s.get(t);
            let iv = interval_for(&boundary_constants(p).unwrap());
            (t, iv.upper + offset * (p.gravity / p.h_end()).sqrt())
        })
        .collect()
}

/// Random gain outside the forbidden interval of `p`, on either side.
///
/// Below the interval the reflection coefficient flattens like `1 + 2s/k`,
/// so the distance to the lower end is scaled by `|a|` rather than by
/// `s = sqrt(g/H*(L))`.
/// Gain outside the forbidden interval with a margin the certificate's
/// smallest epsilon can still resolve.
///
/// Below the interval the reflection coefficient only spans `(r, 1)` with
/// `r = m λ- / λ+`, so that side is used only when `1/r² - 1` is not tiny, and
/// it is sampled in `c` rather than `k`.
pub fn random_admissible_gain(r: &mut ChaCha8Rng, p: &SteadyProfile) -> f64 {
    let consts = boundary_constants(p).unwrap();
    let iv = interval_for(&consts);
    let s = (p.gravity / p.h_end()).sqrt();
    let u = r.gen_range(0.1..3.0);
    let ratio = consts.m_l * consts.lambda_minus / consts.lambda_plus;
    let lower_ok = iv.lower.is_some() && ratio > 0.0 && 1.0 / (ratio * ratio) - 1.0 > LOWER_SIDE_MIN_MARGIN;
    if lower_ok && r.gen_bool(0.5) {
        let c = ratio + r.gen_range(0.1..0.9) * (1.0 - ratio);
        (c + 1.0) / (c - 1.0) * s
    } else {
        iv.upper + u * s
    }
}

pub const LOWER_SIDE_MIN_MARGIN: f64 = 1e-2;

fn child_specs(r: &mut ChaCha8Rng, first_id: usize, n: usize, h0: f64, q: f64) -> (Vec<ChannelSpec>, Vec<f64>) {
    let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let splits: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let specs = splits
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let c = r.gen_range(1e-4..5e-3);
            let p = EXPONENTS[r.gen_range(0..EXPONENTS.len())];
            let bound = certified_blowup_bound(h0, s * q, c, p, G);
            let len = (r.gen_range(0.2..0.8) * bound).min(r.gen_range(100.0..1500.0));
            ChannelSpec::new(first_id + i, len, c, p)
        })
        .collect();
    (specs, splits)
}

fn trunk_spec(r: &mut ChaCha8Rng) -> (ChannelSpec, f64, f64, f64) {
    let (h0, q, c, p) = random_inflow(r);
    let bound = certified_blowup_bound(h0, q, c, p, G);
    let len = (r.gen_range(0.2..0.8) * bound).min(r.gen_range(100.0..1500.0));
    let spec = ChannelSpec::new(1, len, c, p);
    let h_end = integrate_channel_steady(h0, q, &spec).unwrap().h_end();
    (spec, h0, q, h_end)
}

/// Smallest Froude number allowed anywhere in a random network. Below this the
/// friction coupling that separates the weights from their limits is so weak
/// that the gaps drop under what the smallest epsilon can resolve.
pub const NETWORK_MIN_FROUDE: f64 = 0.05;

fn min_froude(net: &Network, q: f64, h0: f64) -> f64 {
    let Ok(s) = solve_network_steady(net, q, h0) else { return 0.0 };
    net.order()
        .iter()
        .flat_map(|&id| {
            let p = s.get(id);
            (0..p.x.len()).map(move |i| p.v_star[i].abs() / (p.gravity * p.h_star[i]).sqrt())
        })
        .fold(f64::INFINITY, f64::min)
}

fn resample(r: &mut ChaCha8Rng, build: impl Fn(&mut ChaCha8Rng) -> (Network, f64, f64)) -> (Network, f64, f64) {
    loop {
        let (net, q, h0) = build(r);
        if min_froude(&net, q, h0) >= NETWORK_MIN_FROUDE {
            return (net, q, h0);
        }
    }
}

/// Random star with `branches` outgoing channels: `(net, Q, H0)`.
pub fn random_star(r: &mut ChaCha8Rng, branches: usize) -> (Network, f64, f64) {
    resample(r, |r| star_once(r, branches))
}

/// Random two-level tree: a trunk feeding 2–3 channels, each of which
/// feeds 2–3 terminal channels with probability one half.
pub fn random_tree(r: &mut ChaCha8Rng) -> (Network, f64, f64) {
    resample(r, tree_once)
}

fn star_once(r: &mut ChaCha8Rng, branches: usize) -> (Network, f64, f64) {
    let (trunk, h0, q, h_end) = trunk_spec(r);
    let (kids, splits) = child_specs(r, 2, branches, h_end, q);
    let junction = Junction { incoming: 1, outgoing: kids.iter().map(|k| k.id).collect(), split_fractions: splits };
    let mut channels = vec![trunk];
    channels.extend(kids);
    let net = Network::new(NetworkTopology { channels, root_channel: 1, junctions: vec![junction] }).unwrap();
    (net, q, h0)
}

fn tree_once(r: &mut ChaCha8Rng) -> (Network, f64, f64) {
    let (trunk, h0, q, h_end) = trunk_spec(r);
    let n1 = r.gen_range(2..=3);
    let (mid, splits) = child_specs(r, 2, n1, h_end, q);
    let mut junctions =
        vec![Junction { incoming: 1, outgoing: mid.iter().map(|k| k.id).collect(), split_fractions: splits.clone() }];
    let mut channels = vec![trunk];
    let mut next = 2 + n1;
    let mut leaves = Vec::new();
    let mut grown = false;
    for (i, m) in mid.iter().enumerate() {
        if r.gen_bool(0.5) || (!grown && i + 1 == mid.len()) {
            grown = true;
            // flux through m: the last child takes the remainder
            let qm = if i + 1 == mid.len() { q - splits[..i].iter().map(|s| s * q).sum::<f64>() } else { splits[i] * q };
            let hm = integrate_channel_steady(h_end, qm, m).unwrap().h_end();
            let n2 = r.gen_range(2..=3);
            let (kids, s2) = child_specs(r, next, n2, hm, qm);
            next += n2;
            junctions.push(Junction { incoming: m.id, outgoing: kids.iter().map(|k| k.id).collect(), split_fractions: s2 });
            leaves.extend(kids);
        }
    }
    channels.extend(mid);
    channels.extend(leaves);
    let net = Network::new(NetworkTopology { channels, root_channel: 1, junctions }).unwrap();
    (net, q, h0)
}

/// Longest root-to-terminal travel time at the slower characteristic speed.
pub fn transit_time(net: &Network, s: &NetworkSteady) -> f64 {
    fn walk(net: &Network, s: &NetworkSteady, id: usize) -> f64 {
        let p = s.get(id);
        let slow = (0..p.x.len())
            .map(|i| (p.gravity * p.h_star[i]).sqrt() - p.v_star[i].abs())
            .fold(f64::INFINITY, f64::min);
        let own = p.length / slow;
        own + net.children(id).map_or(0.0, |(kids, _)| kids.iter().map(|&k| walk(net, s, k)).fold(0.0, f64::max))
    }
    walk(net, s, net.root())
}
