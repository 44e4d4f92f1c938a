//! Backwater profile of a single channel and its distance to criticality.
//!
//! ```bash
//! cargo run --example steady_profile
//! ```

use svnet::steady::{blowup_distance, critical_depth, integrate_channel_steady};
use svnet::topology::{ChannelSpec, DEFAULT_GRAVITY};

fn main() {
    let (h0, q) = (2.0, 1.5);
    let g = DEFAULT_GRAVITY;

    println!("critical depth for Q = {q}: {:.6} m", critical_depth(q, g).unwrap());
    for p in [0.0, 1.0, 4.0 / 3.0, 2.0] {
        let c = 0.002;
        let bound = blowup_distance(h0, q, c, p, g);
        let spec = ChannelSpec::new(1, 0.5 * bound.min(4000.0), c, p).with_cells(32);
        let prof = integrate_channel_steady(h0, q, &spec).unwrap();
        println!(
            "p = {p:.3}: L = {:8.1} m (blow-up at {bound:9.1} m)  H(L) = {:.5}  V(L) = {:.5}  max |HV - Q| = {:.1e}",
            prof.length,
            prof.h_end(),
            prof.v_end(),
            prof.max_flux_error()
        );
    }

    // the depth falls monotonically towards the critical depth
    let len = 0.9 * blowup_distance(h0, q, 0.004, 1.0, g);
    let spec = ChannelSpec::new(1, len, 0.004, 1.0).with_cells(8);
    let prof = integrate_channel_steady(h0, q, &spec).unwrap();
    println!("\n{:>8} {:>10} {:>10} {:>8}", "x", "H", "V", "Froude");
    for (x, h, v) in prof.centers() {
        println!("{x:8.1} {h:10.6} {v:10.6} {:8.4}", v / (g * h).sqrt());
    }
}
