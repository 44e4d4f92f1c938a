//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a non-zero status if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use common::*;
use svnet::certificate::{certify_network, CHECK_TERMINAL, DEFAULT_EPSILON};
use svnet::characteristics::{coupling_coefficients, coupling_friction, coupling_gradient};
use svnet::gains::{boundary_constants, interval_for, is_admissible};
use svnet::sim::{Bump, Mode, Perturbation, RunOptions, Simulator};
use svnet::steady::{integrate_channel_steady, solve_network_steady, steady_rhs};
use svnet::topology::ChannelSpec;
use svnet::weights::{eta_bar_closed, eta_bar_ode_oracle, growth_bound_check, m_profile, phi_profiles};

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

const SUITE: usize = 100;
const SUITE_CELLS: usize = 256;

fn closed_form_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..SUITE {
        let p = random_profile(&mut r, 0.8, SUITE_CELLS);
        let coeffs = coupling_coefficients(&p).unwrap();
        let phi = phi_profiles(&p, &coeffs);
        let closed = eta_bar_closed(&p, &coeffs, &phi).unwrap();
        let ode = eta_bar_ode_oracle(&p).unwrap();
        let gap = closed.iter().zip(&ode).map(|(c, o)| rel(*c, *o)).fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    let secs = start.elapsed().as_secs_f64();
    (worst <= 1e-8 && secs <= 10.0, format!("{SUITE} channels, sup rel gap {worst:.3e} (<= 1e-8), {secs:.2} s (<= 10 s)"))
}

fn phi_margin() -> Outcome {
    let mut r = rng(1);
    let mut min_margin = f64::INFINITY;
    let mut eta0_err: f64 = 0.0;
    let mut m0_err: f64 = 0.0;
    for _ in 0..SUITE {
        let p = random_profile(&mut r, 0.8, SUITE_CELLS);
        let coeffs = coupling_coefficients(&p).unwrap();
        let phi = phi_profiles(&p, &coeffs);
        let eta = eta_bar_closed(&p, &coeffs, &phi).unwrap();
        let m = m_profile(&p).unwrap();
        for (f, e) in phi.phi.iter().zip(&eta).skip(1) {
            min_margin = min_margin.min((f - e) / f);
        }
        eta0_err = eta0_err.max((eta[0] - 1.0).abs());
        m0_err = m0_err.max(rel(m[0], coeffs.lambda1[0] / coeffs.lambda2[0]));
    }
    (
        min_margin > 0.0 && eta0_err <= 1e-10 && m0_err <= 1e-10,
        format!("min (phi - eta_bar)/phi = {min_margin:.3e} (> 0), |eta_bar(0) - 1| = {eta0_err:.1e}, m(0) rel err = {m0_err:.1e}"),
    )
}

fn quadrature_margin() -> Outcome {
    let mut r = rng(3);
    let mut worst = f64::INFINITY;
    for _ in 0..SUITE {
        let p = random_profile(&mut r, 0.99, SUITE_CELLS);
        let coeffs = coupling_coefficients(&p).unwrap();
        let phi = phi_profiles(&p, &coeffs);
        let chk = growth_bound_check(&p, &coeffs, &phi);
        worst = worst.min(chk.min_margin / chk.rhs);
    }
    (worst > 0.0, format!("{SUITE} channels up to 0.99 x blow-up bound, min relative margin {worst:.3e} (> 0)"))
}

fn gain_equivalence() -> Outcome {
    let mut r = rng(4);
    let mut disagreements = 0;
    let mut checked = 0;
    let mut worst_product: f64 = 0.0;
    for _ in 0..500 {
        let p = random_profile(&mut r, 0.8, SUITE_CELLS);
        let coeffs = coupling_coefficients(&p).unwrap();
        let phi = phi_profiles(&p, &coeffs);
        let eta = eta_bar_closed(&p, &coeffs, &phi).unwrap();
        let last = eta.len() - 1;
        let iv = interval_for(&boundary_constants(&p).unwrap());
        let (a, b) = (iv.lower.unwrap(), iv.upper);
        worst_product = worst_product.max(rel(a * b, p.gravity / p.h_end()));
        let k = match r.gen_range(0..4) {
            0 => a - r.gen_range(1e-8..1e-4) * (b - a),
            1 => b + r.gen_range(1e-8..1e-4) * (b - a),
            _ => a + r.gen_range(-1.0..2.0) * (b - a),
        };
        let scale = a.abs().max(b.abs()).max(1.0);
        if (k - a).abs() <= 1e-9 * scale || (k - b).abs() <= 1e-9 * scale {
            continue;
        }
        let rec = is_admissible(&p, k, Some(eta[last]), Some(phi.phi[last])).unwrap();
        checked += 1;
        if !rec.consistent {
            disagreements += 1;
        }
    }
    let flat = ChannelSpec::new(1, 300.0, 0.0, 1.0);
    let fp = integrate_channel_steady(2.0, 1.0, &flat).unwrap();
    let fi = interval_for(&boundary_constants(&fp).unwrap());
    let half_line = fi.half_line && fi.lower.is_none() && fi.upper == 0.0 && fi.contains(-1e9) && !fi.contains(1e-12);
    (
        disagreements == 0 && worst_product <= 1e-12 && half_line,
        format!(
            "{checked} pairs, {disagreements} disagreements, max rel |a b - g/H(L)| = {worst_product:.1e}, frictionless interval (-inf, 0]: {half_line}"
        ),
    )
}

fn certificate_positivity() -> Outcome {
    let mut r = rng(5);
    let mut failures = Vec::new();
    let mut endpoint_misses = 0;
    let mut endpoint_tests = 0;
    let mut worst_junction = f64::INFINITY;
    for case in 0..70 {
        let (net, q, h0) = if case < 50 {
            let n = r.gen_range(2..=6);
            random_star(&mut r, n)
        } else {
            random_tree(&mut r)
        };
        let s = solve_network_steady(&net, q, h0).unwrap();
        let gains: BTreeMap<usize, f64> =
            net.terminals().iter().map(|&t| (t, random_admissible_gain(&mut r, s.get(t)))).collect();
        let cert = certify_network(&net, &s, &gains, DEFAULT_EPSILON).unwrap();
        let all_positive = cert.junctions.iter().all(|j| j.min_eig_bar > 0.0)
            && cert.root.as_ref().is_some_and(|rt| rt.f1 > 0.0)
            && cert.terminals.iter().all(|t| t.margin > 0.0)
            && cert.channels.iter().all(|c| c.min_eig_n > 0.0);
        worst_junction = cert.junctions.iter().map(|j| j.min_eig_bar).fold(worst_junction, f64::min);
        if !(cert.certified && all_positive) {
            failures.push((case, cert.failed_checks.clone()));
        }
        if case % 7 == 0 {
            endpoint_tests += 1;
            let t = net.terminals()[0];
            let iv = interval_for(&boundary_constants(s.get(t)).unwrap());
            let mut g2 = gains.clone();
            g2.insert(t, if r.gen_bool(0.5) { iv.upper } else { iv.lower.unwrap() });
            let c2 = certify_network(&net, &s, &g2, DEFAULT_EPSILON).unwrap();
            if c2.certified || !c2.failed_checks.contains(&CHECK_TERMINAL) {
                endpoint_misses += 1;
            }
        }
    }
    (
        failures.is_empty() && endpoint_misses == 0,
        format!(
            "50 stars + 20 trees, uncertified {:?}; min junction eigenvalue {worst_junction:.3e}; endpoint gains failing terminal_margin {}/{endpoint_tests}",
            failures,
            endpoint_tests - endpoint_misses
        ),
    )
}

fn well_balanced() -> Outcome {
    let (net, s) = star(3, 64);
    let gains = gains_above(&net, &s, 3.0);
    let mut sim = Simulator::new(&net, &s, STAR_Q, &gains, None, Mode::Nonlinear).unwrap();
    let mut state = sim.steady_state();
    let (dt, _) = sim.time_step(&state, 1.0, 0.9);
    for _ in 0..10_000 {
        sim.step(&mut state, dt).unwrap();
    }
    let drift = state.max_abs();
    (drift <= 1e-10, format!("3-branch star, nonlinear, 10^4 steps: max drift {drift:.1e} (<= 1e-10)"))
}

/// Mixed depth/velocity bumps on the trunk and one branch.
fn decay_perturbation(amplitude: f64) -> Perturbation {
    Perturbation {
        amplitude,
        bumps: vec![
            Bump { channel: 1, center: 0.5, width: 0.8, h: 1.0, v: 0.5 },
            Bump { channel: 3, center: 0.4, width: 0.6, h: -0.5, v: 0.0 },
        ],
    }
}

struct DecayRun {
    nu: f64,
    r2: f64,
    max_increase: f64,
    t_final: f64,
    v_ext: (f64, f64),
    dx: f64,
    length: f64,
}

fn decay_run(cells: usize, mode: Mode, amplitude: f64) -> DecayRun {
    let (net, s) = star(3, cells);
    let gains = gains_above(&net, &s, 3.0);
    let cert = certify_network(&net, &s, &gains, DEFAULT_EPSILON).unwrap();
    assert!(cert.certified);
    let t_final = 5.0 * transit_time(&net, &s);
    let mut sim = Simulator::new(&net, &s, STAR_Q, &gains, cert.weights.as_ref(), mode).unwrap();
    let init = sim.initial_state(&decay_perturbation(amplitude));
    let mut opts = RunOptions::new(t_final);
    opts.sample_stride = cells / 16;
    let out = sim.run(init, &opts).unwrap();
    let fit = out.trace.fit(None).unwrap();
    let ve = out.trace.extended_values();
    DecayRun {
        nu: fit.nu_hat,
        r2: fit.r2,
        max_increase: out.trace.max_increase(),
        t_final,
        v_ext: (ve[0], *ve.last().unwrap()),
        dx: sim.dx(0),
        length: 400.0,
    }
}

fn linear_decay() -> Outcome {
    let coarse = decay_run(64, Mode::Linear, 1e-3);
    let fine = decay_run(128, Mode::Linear, 1e-3);
    let tol = 10.0 * coarse.dx / coarse.length;
    let monotone = coarse.max_increase <= tol && fine.max_increase <= coarse.max_increase;
    let change = rel(coarse.nu, fine.nu);
    let ok = monotone && coarse.nu > 0.0 && fine.nu > 0.0 && coarse.r2 >= 0.95 && fine.r2 >= 0.95 && change <= 0.3;
    (
        ok,
        format!(
            "T = {:.0} s (5 transits); max V increase {:.1e} -> {:.1e} (tol {tol:.2e}); nu_hat {:.5} -> {:.5} ({:.1}% change); R2 {:.4} / {:.4}",
            coarse.t_final,
            coarse.max_increase,
            fine.max_increase,
            coarse.nu,
            fine.nu,
            100.0 * change,
            coarse.r2,
            fine.r2
        ),
    )
}

/// Sup-norm distance between nonlinear and linear solutions at time `t`.
fn nonlinear_remainder(amplitude: f64, t: f64) -> f64 {
    let (net, s) = star(3, 64);
    let gains = gains_above(&net, &s, 3.0);
    let finals: Vec<_> = [Mode::Linear, Mode::Nonlinear]
        .iter()
        .map(|&mode| {
            let mut sim = Simulator::new(&net, &s, STAR_Q, &gains, None, mode).unwrap();
            let init = sim.initial_state(&decay_perturbation(amplitude));
            sim.run(init, &RunOptions::new(t)).unwrap().final_state
        })
        .collect();
    finals[0].max_diff(&finals[1])
}

fn nonlinear_decay() -> Outcome {
    let run = decay_run(64, Mode::Nonlinear, 1e-3);
    let observed = run.v_ext.1 / run.v_ext.0;
    let predicted = (-run.nu * run.t_final).exp();
    let factor = observed / predicted;
    let rate = -observed.ln() / run.t_final;
    let factor_ok = (factor - 1.0).abs() <= 0.5;
    let rate_ok = rel(rate, run.nu) <= 0.5;
    let (net, s) = star(3, 64);
    let t = transit_time(&net, &s);
    let ratio = nonlinear_remainder(1e-3, t) / nonlinear_remainder(5e-4, t);
    let ok = run.nu > 0.0 && factor_ok && rate_ok && (3.0..=5.0).contains(&ratio);
    (
        ok,
        format!(
            "V_ext(T)/V_ext(0) = {observed:.3e} vs exp(-nu_hat T) = {predicted:.3e} (factor {factor:.3}, rate {rate:.5} vs nu_hat {:.5}); amplitude-halving remainder ratio {ratio:.3} (in [3, 5])",
            run.nu
        ),
    )
}

fn dual_form() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..SUITE {
        let p = random_profile(&mut r, 0.8, 64);
        for i in 0..p.x.len() {
            let (h, v) = (p.h_star[i], p.v_star[i]);
            let hx = steady_rhs(h, p.flux, p.friction, p.friction_exponent, p.gravity).unwrap();
            let a = coupling_friction(h, v, p.friction, p.friction_exponent, p.gravity);
            let b = coupling_gradient(h, v, hx, p.friction_exponent, p.gravity);
            for (x, y) in [(a.gamma1, b.gamma1), (a.delta1, b.delta1), (a.gamma2, b.gamma2), (a.delta2, b.delta2)] {
                let scale = a.gamma1.abs().max(a.delta1.abs()).max(a.gamma2.abs()).max(a.delta2.abs());
                worst = worst.max((x - y).abs() / scale);
            }
        }
    }
    (worst <= 1e-10, format!("{SUITE} channels, max relative gap {worst:.2e} (<= 1e-10)"))
}

const DETERMINISM_CONFIG: &str = r#"{
  "network": {
    "channels": [
      {"id": 1, "length": 400, "friction": 0.002, "friction_exponent": 1, "cells": 32},
      {"id": 2, "length": 250, "friction": 0.002, "friction_exponent": 1, "cells": 32},
      {"id": 3, "length": 250, "friction": 0.002, "friction_exponent": 1, "cells": 32},
      {"id": 4, "length": 250, "friction": 0.002, "friction_exponent": 1, "cells": 32}
    ],
    "root_channel": 1,
    "junctions": [{"incoming": 1, "outgoing": [2, 3, 4], "split_fractions": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]}]
  },
  "root": {"Q": 1.5, "H0": 2.0},
  "gains": {"2": 6.0, "3": 6.0, "4": 6.0},
  "simulation": {
    "mode": "nonlinear", "T": 200, "sample_stride": 2, "snapshots": [0, 100],
    "perturbation": {"amplitude": 1e-3, "bumps": [{"channel": 1, "v": 0.5}, {"channel": 3, "h": -0.5}]}
  }
}"#;

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_svnet"))
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    let identical = files.iter().all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());
    (identical && files.len() >= 4, format!("{} output files byte-identical across reruns: {identical}", files.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("closed-form eta_bar oracle equivalence", closed_form_oracle),
        ("phi - eta_bar margin", phi_margin),
        ("quadrature inequality margin", quadrature_margin),
        ("gain-condition equivalence", gain_equivalence),
        ("certificate positivity", certificate_positivity),
        ("well-balancedness", well_balanced),
        ("linear decay", linear_decay),
        ("nonlinear small-perturbation decay", nonlinear_decay),
        ("dual-form coefficients", dual_form),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
