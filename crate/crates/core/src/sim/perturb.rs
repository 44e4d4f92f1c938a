//! Smooth initial perturbations compatible with the boundary relations.

use serde::{Deserialize, Serialize};

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

/// A `sin²` bump on one channel.
///
/// `center` and `width` are fractions of the channel length; `h` scales the
/// depth deviation relative to `H*`, `v` the velocity deviation relative to
/// `sqrt(g H*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub channel: usize,
    #[serde(default = "half")]
    pub center: f64,
    #[serde(default = "half")]
    pub width: f64,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default)]
    pub v: f64,
}

impl Bump {
    pub fn depth(channel: usize) -> Self {
        Bump { channel, center: 0.5, width: 0.5, h: 1.0, v: 0.0 }
    }

    /// Shape factor at `x` on a channel of length `len` with cell width `dx`.
    ///
    /// The support is clipped to `[2 dx, len - 2 dx]`, so the two cells next
    /// to each face stay at rest and the initial faces match the steady
    /// boundary values.
    pub fn shape(&self, x: f64, len: f64, dx: f64) -> f64 {
        let a = ((self.center - 0.5 * self.width) * len).max(2.0 * dx);
        let b = ((self.center + 0.5 * self.width) * len).min(len - 2.0 * dx);
        if b <= a || x <= a || x >= b {
            return 0.0;
        }
        (std::f64::consts::PI * (x - a) / (b - a)).sin().powi(2)
    }
}

/// Relative amplitude times a sum of bumps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation {
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub bumps: Vec<Bump>,
}

impl Perturbation {
    pub fn none() -> Self {
        Self::default()
    }

    /// One centered depth bump on each listed channel.
    pub fn depth_bumps(amplitude: f64, channels: &[usize]) -> Self {
        Perturbation { amplitude, bumps: channels.iter().map(|&c| Bump::depth(c)).collect() }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Perturbation { amplitude: self.amplitude * factor, bumps: self.bumps.clone() }
    }

    /// Deviation `(h, v)` at `x` on `channel`, given the steady depth there.
    pub fn eval(&self, channel: usize, x: f64, len: f64, dx: f64, h_star: f64, g: f64) -> (f64, f64) {
        let mut h = 0.0;
        let mut v = 0.0;
        for b in self.bumps.iter().filter(|b| b.channel == channel) {
            let s = self.amplitude * b.shape(x, len, dx);
            h += s * b.h * h_star;
            v += s * b.v * (g * h_star).sqrt();
        }
        (h, v)
    }
}
