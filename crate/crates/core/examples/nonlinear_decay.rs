//! Full Saint-Venant dynamics from a small perturbation, compared with the
//! linearized run and with a half-size perturbation.
//!
//! ```bash
//! cargo run --release --example nonlinear_decay
//! ```

use std::collections::BTreeMap;

use svnet::certificate::{certify_network, DEFAULT_EPSILON};
use svnet::gains::{boundary_constants, interval_for};
use svnet::sim::{Mode, Perturbation, RunOptions, SimState, Simulator};
use svnet::steady::solve_network_steady;
use svnet::topology::{ChannelSpec, Network, NetworkTopology};

fn main() {
    let trunk = ChannelSpec::new(1, 400.0, 0.002, 1.0).with_cells(64);
    let branches = (2..=4).map(|id| ChannelSpec::new(id, 250.0, 0.002, 1.0).with_cells(64)).collect();
    let net = Network::new(NetworkTopology::star(trunk, branches)).unwrap();
    let steady = solve_network_steady(&net, 1.5, 2.0).unwrap();
    let gains: BTreeMap<usize, f64> = net
        .terminals()
        .iter()
        .map(|&t| {
            let p = steady.get(t);
            (t, interval_for(&boundary_constants(p).unwrap()).upper + 3.0 * (p.gravity / p.h_end()).sqrt())
        })
        .collect();
    let cert = certify_network(&net, &steady, &gains, DEFAULT_EPSILON).unwrap();
    let weights = cert.weights.as_ref();

    let t_final = 300.0;
    let opts = RunOptions::new(t_final);
    let run = |mode: Mode, amplitude: f64| -> (SimState, f64, f64) {
        let mut sim = Simulator::new(&net, &steady, 1.5, &gains, weights, mode).unwrap();
        let init = sim.initial_state(&Perturbation::depth_bumps(amplitude, &[1, 2]));
        let out = sim.run(init, &opts).unwrap();
        let ve = out.trace.extended_values();
        (out.final_state, ve[0], ve[ve.len() - 1])
    };

    for amplitude in [1e-3, 5e-4] {
        let (nl, ve0, vet) = run(Mode::Nonlinear, amplitude);
        let (lin, _, _) = run(Mode::Linear, amplitude);
        let remainder = nl.max_diff(&lin);
        println!(
            "amplitude {amplitude:.1e}: extended energy {ve0:.3e} -> {vet:.3e}; |nonlinear - linear| at T = {remainder:.3e}"
        );
    }
}
