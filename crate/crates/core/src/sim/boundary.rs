//! Face solves: root inflow, terminal feedback and junction coupling.
//!
//! Every solve combines the boundary relation with the characteristic
//! invariants leaving the adjacent interior cells. All quantities are
//! deviations from the steady face values `hs`, `vs`.

use super::Mode;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

/// Deviation state at a channel face.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Face {
    pub h: f64,
    pub v: f64,
}

/// `sqrt(hs + h) - sqrt(hs)` without cancellation.
pub fn dsqrt(hs: f64, h: f64) -> f64 {
    h / ((hs + h).sqrt() + hs.sqrt())
}

/// Outgoing invariants `(y1, y2)` of a deviation state.
///
/// Linear mode uses the Riemann invariants `v ± sqrt(g/H*) h`, nonlinear mode
/// the exact invariants `v ± 2 (sqrt(gH) - sqrt(gH*))`.
pub fn invariants(mode: Mode, hs: f64, g: f64, h: f64, v: f64) -> (f64, f64) {
    let d = match mode {
        Mode::Linear => (g / hs).sqrt() * h,
        Mode::Nonlinear => 2.0 * g.sqrt() * dsqrt(hs, h),
    };
    (v + d, v - d)
}

/// Scalar Newton iteration for a deviation `h > floor`.
///
/// Steps that would cross the floor are damped halfway towards it. Once the
/// residual is below `NEWTON_TOL * scale` a final full step is taken.
pub fn newton(h0: f64, floor: f64, scale: f64, f: impl Fn(f64) -> (f64, f64)) -> Option<f64> {
    let mut h = h0;
    for _ in 0..=NEWTON_MAX_ITER {
        let (r, dr) = f(h);
        if !r.is_finite() {
            return None;
        }
        if dr == 0.0 || !dr.is_finite() {
            return None;
        }
        if r.abs() <= NEWTON_TOL * scale {
            // one polishing step brings the residual to rounding level
            let polished = h - r / dr;
            return Some(if polished > floor { polished } else { h });
        }
        let mut next = h - r / dr;
        if next <= floor {
            next = 0.5 * (h + floor);
        }
        h = next;
    }
    None
}

/// Inlet face of the trunk: `H V = Q` and the backward invariant `y2`.
pub fn root_face(mode: Mode, hs: f64, vs: f64, q: f64, g: f64, y2: f64, guess: f64) -> Option<Face> {
    match mode {
        Mode::Linear => {
            // V* h + H* v = 0,  v - s h = y2
            let s = (g / hs).sqrt();
            let det = vs + hs * s;
            Some(Face { h: -hs * y2 / det, v: vs * y2 / det })
        }
        Mode::Nonlinear => {
            let sg = g.sqrt();
            let scale = vs.abs() + (g * hs).sqrt();
            let dv = |h: f64| -q * h / (hs * (hs + h));
            let h = newton(guess, -hs, scale, |h| {
                let r = dv(h) - 2.0 * sg * dsqrt(hs, h) - y2;
                let big = hs + h;
                (r, -q / (big * big) - (g / big).sqrt())
            })?;
            Some(Face { h, v: dv(h) })
        }
    }
}

/// Outlet face of a terminal channel: `v = k h` and the forward invariant `y1`.
pub fn terminal_face(mode: Mode, hs: f64, k: f64, g: f64, y1: f64, guess: f64) -> Option<Face> {
    match mode {
        Mode::Linear => {
            let den = k + (g / hs).sqrt();
            if den == 0.0 {
                return None;
            }
            let h = y1 / den;
            Some(Face { h, v: k * h })
        }
        Mode::Nonlinear => {
            let sg = g.sqrt();
            let scale = k.abs() * hs + (g * hs).sqrt();
            let h = newton(guess, -hs, scale, |h| {
                (k * h + 2.0 * sg * dsqrt(hs, h) - y1, k + (g / (hs + h)).sqrt())
            })?;
            Some(Face { h, v: k * h })
        }
    }
}

/// Junction faces: common depth, mass conservation, forward invariant `y1`
/// from the incoming channel and backward invariants `y2[j]` from each
/// outgoing channel. Returns the incoming face and the outgoing faces.
pub fn junction_faces(mode: Mode, hs: f64, g: f64, y1: f64, y2: &[f64], guess: f64) -> Option<(Face, Vec<Face>)> {
    let n = y2.len() as f64;
    let sum: f64 = y2.iter().sum();
    let (h, d) = match mode {
        Mode::Linear => {
            let s = (g / hs).sqrt();
            let h = (y1 - sum) / ((1.0 + n) * s);
            (h, s * h)
        }
        Mode::Nonlinear => {
            let sg = g.sqrt();
            let scale = y1.abs() + sum.abs() + (g * hs).sqrt();
            let h = newton(guess, -hs, scale, |h| {
                (y1 - sum - (1.0 + n) * 2.0 * sg * dsqrt(hs, h), -(1.0 + n) * (g / (hs + h)).sqrt())
            })?;
            (h, 2.0 * sg * dsqrt(hs, h))
        }
    };
    let incoming = Face { h, v: y1 - d };
    let outgoing = y2.iter().map(|&y| Face { h, v: y + d }).collect();
    Some((incoming, outgoing))
}
