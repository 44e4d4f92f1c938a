//! Explicit Runge–Kutta integrators for small fixed-size systems.
//!
//! [`Dopri5`] is the adaptive Dormand–Prince 5(4) pair used for the steady
//! profiles and the Riccati weight equations. [`rk4_fixed`] is a plain
//! fixed-step RK4 kept for cross-checks.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {x}")]
    StepSizeUnderflow { x: f64 },
    #[error("maximum number of steps exceeded at x = {x}")]
    MaxSteps { x: f64 },
    #[error("integration stopped by guard at x = {x}")]
    Guard { x: f64 },
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step as a fraction of the integration span.
    pub initial_fraction: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_steps: 2_000_000, initial_fraction: 1e-4 }
    }
}

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

impl Dopri5 {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    /// Integrates `y' = f(x, y)` from `x0` through every point of `targets`
    /// (increasing, all `>= x0`), landing exactly on each target. The state
    /// at each target is returned in order.
    ///
    /// `guard` is evaluated after every accepted step; returning `false`
    /// aborts with [`OdeError::Guard`] at the last accepted abscissa.
    /// Stages that produce non-finite values are treated as rejected steps.
    pub fn integrate<const N: usize, F, G>(
        &self,
        f: F,
        x0: f64,
        y0: [f64; N],
        targets: &[f64],
        mut guard: G,
    ) -> Result<Vec<[f64; N]>, OdeError>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
        G: FnMut(f64, &[f64; N]) -> bool,
    {
        let mut out = Vec::with_capacity(targets.len());
        let x_end = targets.last().copied().unwrap_or(x0);
        let span = (x_end - x0).abs().max(f64::MIN_POSITIVE);
        let mut x = x0;
        let mut y = y0;
        let mut h = span * self.initial_fraction;
        let mut k1 = f(x, &y);
        let mut steps = 0usize;

        for &target in targets {
            while x < target {
                if steps >= self.max_steps {
                    return Err(OdeError::MaxSteps { x });
                }
                steps += 1;
                let remaining = target - x;
                let last = h >= remaining;
                let hs = if last { remaining } else { h };
                if hs <= 1e-15 * span.max(x.abs()) && !last {
                    return Err(OdeError::StepSizeUnderflow { x });
                }

                let k2 = f(x + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
                let k3 = f(x + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
                let k4 = f(x + C4 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
                let k5 = f(
                    x + C5 * hs,
                    &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs),
                );
                let k6 = f(
                    x + hs,
                    &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs),
                );
                let y_new =
                    axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
                let k7 = f(x + hs, &y_new);

                let ok_stages = [&k2, &k3, &k4, &k5, &k6, &k7].iter().all(|k| finite(k))
                    && finite(&y_new);
                let err = if ok_stages {
                    let mut acc = 0.0;
                    for i in 0..N {
                        let e = hs
                            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                                + E7 * k7[i]);
                        let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                        acc += (e / sc).powi(2);
                    }
                    (acc / N as f64).sqrt()
                } else {
                    f64::INFINITY
                };

                if err <= 1.0 {
                    x = if last { target } else { x + hs };
                    y = y_new;
                    k1 = k7;
                    if !guard(x, &y) {
                        return Err(OdeError::Guard { x });
                    }
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    // Do not let a short landing step shrink the stride.
                    h = if last { h.max(hs * fac) } else { hs * fac };
                } else {
                    let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.25 };
                    h = hs * fac;
                    if h <= 1e-15 * span.max(x.abs()) {
                        return Err(OdeError::StepSizeUnderflow { x });
                    }
                }
            }
            out.push(y);
        }
        Ok(out)
    }
}

/// Classical fixed-step RK4 from `x0` to `x1` with `steps` uniform steps.
pub fn rk4_fixed<const N: usize, F>(f: F, x0: f64, y0: [f64; N], x1: f64, steps: usize) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let h = (x1 - x0) / steps as f64;
    let mut y = y0;
    for s in 0..steps {
        let x = x0 + s as f64 * h;
        let k1 = f(x, &y);
        let k2 = f(x + 0.5 * h, &axpy(&y, &[(0.5, &k1)], h));
        let k3 = f(x + 0.5 * h, &axpy(&y, &[(0.5, &k2)], h));
        let k4 = f(x + h, &axpy(&y, &[(1.0, &k3)], h));
        y = axpy(&y, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)], h);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_hits_targets() {
        let targets: Vec<f64> = (1..=10).map(|i| i as f64 * 0.3).collect();
        let ys = Dopri5::with_tol(1e-12, 1e-14)
            .integrate(|_, y: &[f64; 1]| [-0.7 * y[0]], 0.0, [1.0], &targets, |_, _| true)
            .unwrap();
        for (x, y) in targets.iter().zip(&ys) {
            assert!((y[0] - (-0.7 * x).exp()).abs() < 1e-11);
        }
    }

    #[test]
    fn riccati_blowup_is_reported() {
        // y' = y^2, y(0) = 1 blows up at x = 1.
        let r = Dopri5::default().integrate(
            |_, y: &[f64; 1]| [y[0] * y[0]],
            0.0,
            [1.0],
            &[2.0],
            |_, y| y[0] < 1e8,
        );
        match r {
            Err(OdeError::Guard { x }) => assert!(x < 1.0 && x > 0.99),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rk4_harmonic_oscillator() {
        let y = rk4_fixed(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 1.0, 1000);
        assert!((y[0] - 1f64.sin()).abs() < 1e-12);
    }
}
