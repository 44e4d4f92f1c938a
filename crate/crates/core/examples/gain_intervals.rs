//! Forbidden gain intervals at channel outlets and the reflection check.
//!
//! ```bash
//! cargo run --example gain_intervals
//! ```

use svnet::certificate::channel_bases;
use svnet::gains::{boundary_constants, interval_for, is_admissible};
use svnet::steady::{blowup_distance, solve_network_steady};
use svnet::topology::{ChannelSpec, Network, NetworkTopology, DEFAULT_GRAVITY};

fn main() {
    for (c, label) in [(0.0, "frictionless"), (0.001, "light friction"), (0.005, "heavy friction")] {
        let len = if c > 0.0 { 800f64.min(0.6 * blowup_distance(2.0, 1.5, c, 1.0, DEFAULT_GRAVITY)) } else { 800.0 };
        let spec = ChannelSpec::new(1, len, c, 1.0).with_cells(32);
        let net = Network::new(NetworkTopology::single(spec)).unwrap();
        let steady = solve_network_steady(&net, 1.5, 2.0).unwrap();
        let prof = steady.get(1);
        let iv = interval_for(&boundary_constants(prof).unwrap());
        let lower = iv.lower.map_or("-inf".to_string(), |a| format!("{a:.4}"));
        println!("{label} (L = {len:.0} m): forbidden k in [{lower}, {:.4}]", iv.upper);

        let base = &channel_bases(&net, &steady).unwrap()[&1];
        let last = base.phi.phi.len() - 1;
        let eta_bar = base.eta_bar.as_ref().map(|e| e[last]);
        let phi = Some(base.phi.phi[last]);
        for k in [-5.0, iv.upper - 0.5, iv.upper + 0.5, 1.0, 5.0] {
            let rec = is_admissible(prof, k, eta_bar, phi).unwrap();
            println!("  k = {k:8.4}  c = {:9.4}  admissible {:5}  reflection check agrees {}", rec.c, rec.admissible, rec.consistent);
        }
    }
}
