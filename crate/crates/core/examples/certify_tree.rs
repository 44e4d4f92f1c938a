//! A two-level tree: trunk, two middle reaches, four outlets.
//!
//! ```bash
//! cargo run --example certify_tree
//! ```

use std::collections::BTreeMap;

use svnet::certificate::{certify_network, DEFAULT_EPSILON};
use svnet::gains::{boundary_constants, interval_for};
use svnet::steady::solve_network_steady;
use svnet::topology::{ChannelSpec, Junction, Network, NetworkTopology};

fn main() {
    let channels = vec![
        ChannelSpec::new(1, 600.0, 0.002, 1.0),
        ChannelSpec::new(2, 400.0, 0.003, 1.0),
        ChannelSpec::new(3, 350.0, 0.002, 4.0 / 3.0),
        ChannelSpec::new(4, 300.0, 0.002, 1.0),
        ChannelSpec::new(5, 250.0, 0.004, 0.0),
        ChannelSpec::new(6, 300.0, 0.002, 2.0),
        ChannelSpec::new(7, 200.0, 0.003, 1.0),
    ];
    let junctions = vec![
        Junction { incoming: 1, outgoing: vec![2, 3], split_fractions: vec![0.6, 0.4] },
        Junction { incoming: 2, outgoing: vec![4, 5], split_fractions: vec![0.5, 0.5] },
        Junction { incoming: 3, outgoing: vec![6, 7], split_fractions: vec![0.3, 0.7] },
    ];
    let net = Network::new(NetworkTopology { channels, root_channel: 1, junctions }).unwrap();
    println!("order {:?}, internal {:?}, outlets {:?}", net.order(), net.internals(), net.terminals());

    let steady = solve_network_steady(&net, 2.0, 3.0).unwrap();
    for &id in net.order() {
        let p = steady.get(id);
        println!("  channel {id}: Q = {:.3}, H {:.4} -> {:.4}", p.flux, p.h0(), p.h_end());
    }

    let gains: BTreeMap<usize, f64> = net
        .terminals()
        .iter()
        .map(|&t| {
            let p = steady.get(t);
            let iv = interval_for(&boundary_constants(p).unwrap());
            (t, iv.upper + 2.0 * (p.gravity / p.h_end()).sqrt())
        })
        .collect();
    let cert = certify_network(&net, &steady, &gains, DEFAULT_EPSILON).unwrap();
    println!("certified: {}, epsilon {:.3e}", cert.certified, cert.epsilon);
    for c in &cert.channels {
        println!(
            "  channel {}: alpha {:.4}, Z(0) {:+.3e}, Z(L) {:+.3e}, min eig N {:.3e}",
            c.channel, c.alpha, c.z_0, c.z_l, c.min_eig_n
        );
    }
    println!("{}", serde_json::to_string_pretty(&cert.checks).unwrap());
}
