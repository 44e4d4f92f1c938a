//! Lyapunov trace, finite-difference time derivatives and decay fits.

use serde::Serialize;

use super::SimError;

/// One sample of the Lyapunov trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub v: f64,
    pub v_ext: f64,
    pub l2: f64,
    pub boundary: f64,
    pub channel_l2: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LyapunovTrace {
    /// Channel ids matching `TraceSample::channel_l2`.
    pub channels: Vec<usize>,
    pub samples: Vec<TraceSample>,
}

impl LyapunovTrace {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.v).collect()
    }

    pub fn extended_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.v_ext).collect()
    }

    /// True when every sample has `V = 0`.
    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|s| s.v == 0.0)
    }

    /// Largest relative increase `V(t_{n+1}) / V(t_n) - 1` between samples.
    pub fn max_increase(&self) -> f64 {
        self.samples
            .windows(2)
            .filter(|w| w[0].v > 0.0)
            .map(|w| w[1].v / w[0].v - 1.0)
            .fold(0.0, f64::max)
    }

    /// Fit of `ln V` over `window` (whole trace when `None`).
    pub fn fit(&self, window: Option<(f64, f64)>) -> Result<DecayFit, SimError> {
        let (t, v) = (self.times(), self.values());
        let w = window.unwrap_or((t[0], *t.last().unwrap()));
        decay_fit(&t, &v, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub nu_hat: f64,
    pub r2: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Least-squares slope of `ln V(t)` over `window`; the rate is minus the slope.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must be rejected too
pub fn decay_fit(t: &[f64], v: &[f64], window: (f64, f64)) -> Result<DecayFit, SimError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&ti, &vi) in t.iter().zip(v) {
        if ti < window.0 || ti > window.1 {
            continue;
        }
        if !(vi > 0.0) {
            return Err(SimError::NonPositiveV { time: ti });
        }
        xs.push(ti);
        ys.push(vi.ln());
    }
    if xs.len() < 2 {
        return Err(SimError::BadOptions(format!("fit window {window:?} holds fewer than two samples")));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit { nu_hat: -slope, r2, intercept, window, points: xs.len() })
}

/// First derivative on a sorted, possibly non-uniform grid: centered
/// three-point stencil inside, one-sided three-point stencils at both ends.
/// Second order throughout.
pub fn diff(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 3 && f.len() == n);
    let mut d = vec![0.0; n];
    for j in 1..n - 1 {
        let a = x[j] - x[j - 1];
        let b = x[j + 1] - x[j];
        d[j] = (a * a * f[j + 1] - b * b * f[j - 1] + (b * b - a * a) * f[j]) / (a * b * (a + b));
    }
    let (a, b) = (x[1] - x[0], x[2] - x[1]);
    d[0] = -(2.0 * a + b) / (a * (a + b)) * f[0] + (a + b) / (a * b) * f[1] - a / (b * (a + b)) * f[2];
    let (a, b) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
    d[n - 1] = (2.0 * a + b) / (a * (a + b)) * f[n - 1] - (a + b) / (a * b) * f[n - 2] + a / (b * (a + b)) * f[n - 3];
    d
}
