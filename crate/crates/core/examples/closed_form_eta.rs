//! The closed-form weight ratio against a direct Riccati integration.
//!
//! ```bash
//! cargo run --example closed_form_eta
//! ```

use svnet::characteristics::coupling_coefficients;
use svnet::steady::integrate_channel_steady;
use svnet::topology::ChannelSpec;
use svnet::weights::{eta_bar_closed, eta_bar_ode_oracle, eta_zero, m_profile, phi_profiles};

fn main() {
    let spec = ChannelSpec::new(1, 1200.0, 0.003, 4.0 / 3.0).with_cells(16);
    let prof = integrate_channel_steady(2.5, 1.2, &spec).unwrap();
    let coeffs = coupling_coefficients(&prof).unwrap();
    let phi = phi_profiles(&prof, &coeffs);
    let eta0 = eta_zero(&coeffs, &phi);
    let m = m_profile(&prof).unwrap();
    let closed = eta_bar_closed(&prof, &coeffs, &phi).unwrap();
    let ode = eta_bar_ode_oracle(&prof).unwrap();

    println!("{:>8} {:>10} {:>10} {:>12} {:>12} {:>10}", "x", "m", "eta0", "closed", "ode", "phi");
    for i in (0..prof.x.len()).step_by(8) {
        println!(
            "{:8.1} {:10.6} {:10.6} {:12.9} {:12.9} {:10.6}",
            prof.x[i], m[i], eta0[i], closed[i], ode[i], phi.phi[i]
        );
    }
    let gap = closed.iter().zip(&ode).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    let margin = phi.phi.iter().zip(&closed).skip(1).map(|(p, e)| p - e).fold(f64::INFINITY, f64::min);
    println!("\nsup relative gap {gap:.2e}; min phi - eta_bar on (0, L] {margin:.3e}");
}
