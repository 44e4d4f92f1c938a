//! Certify a three-branch star, then push one gain onto its forbidden
//! interval and watch the terminal check fail.
//!
//! ```bash
//! cargo run --example certify_star
//! ```

use std::collections::BTreeMap;

use svnet::certificate::{certify_network, NetworkCertificate, DEFAULT_EPSILON};
use svnet::gains::{boundary_constants, interval_for};
use svnet::steady::{solve_network_steady, NetworkSteady};
use svnet::topology::{ChannelSpec, Network, NetworkTopology};

fn report(cert: &NetworkCertificate) {
    println!("certified: {} (epsilon {:.3e} after {} halvings)", cert.certified, cert.epsilon, cert.halvings);
    for c in &cert.checks {
        println!("  {:<18} {:5}  worst {:.4e}", c.name, c.passed, c.worst);
    }
    for j in &cert.junctions {
        println!("  junction after channel {}: min eigenvalue {:.4e}", j.channel, j.min_eig_bar);
    }
    for t in &cert.terminals {
        println!("  outlet {}: k = {:.4}, c = {:.4}, margin {:.4e}", t.channel, t.k, t.c, t.margin);
    }
}

fn outlet_gains(net: &Network, steady: &NetworkSteady, offset: f64) -> BTreeMap<usize, f64> {
    net.terminals()
        .iter()
        .map(|&t| {
            let p = steady.get(t);
            let iv = interval_for(&boundary_constants(p).unwrap());
            (t, iv.upper + offset * (p.gravity / p.h_end()).sqrt())
        })
        .collect()
}

fn main() {
    let trunk = ChannelSpec::new(1, 400.0, 0.002, 1.0).with_cells(64);
    let branches = (2..=4).map(|id| ChannelSpec::new(id, 250.0, 0.002, 1.0).with_cells(64)).collect();
    let net = Network::new(NetworkTopology::star(trunk, branches)).unwrap();
    let steady = solve_network_steady(&net, 1.5, 2.0).unwrap();

    let mut gains = outlet_gains(&net, &steady, 3.0);
    report(&certify_network(&net, &steady, &gains, DEFAULT_EPSILON).unwrap());

    let p = steady.get(2);
    gains.insert(2, interval_for(&boundary_constants(p).unwrap()).upper);
    println!("\nchannel 2 gain moved to the interval end:");
    report(&certify_network(&net, &steady, &gains, DEFAULT_EPSILON).unwrap());
}
