//! Cumulative quadrature on sampled profiles.

/// Running integral of `f` sampled on a uniform grid with spacing `h`.
///
/// Pairs of intervals use Simpson's rule; the midpoint of each pair gets the
/// third-order partial-panel formula `h/12 (5 f0 + 8 f1 - f2)`. A trailing
/// single interval (even sample count) uses the same partial formula
/// mirrored backwards.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    let mut i = 0;
    while i + 2 < n {
        out[i + 1] = out[i] + h / 12.0 * (5.0 * f[i] + 8.0 * f[i + 1] - f[i + 2]);
        out[i + 2] = out[i] + h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        out[i + 1] = out[i] + h / 12.0 * (5.0 * f[i + 1] + 8.0 * f[i] - f[i - 1]);
    }
    out
}

/// Composite trapezoid on an arbitrary (sorted) grid.
pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), f.len());
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]))
        .sum()
}
