//! Composite Simpson quadrature helpers.

/// Simpson's rule on a single panel `[a, a + width]` from the endpoint and
/// midpoint values.
#[inline]
pub fn simpson_panel(f_a: f64, f_mid: f64, f_b: f64, width: f64) -> f64 {
    width / 6.0 * (f_a + 4.0 * f_mid + f_b)
}

/// Composite Simpson rule over `[a, b]` with `panels` panels (each panel uses
/// its own midpoint, so `2 * panels + 1` evaluations).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let w = (b - a) / panels as f64;
    let mut acc = 0.0;
    let mut f_left = f(a);
    for i in 0..panels {
        let left = a + w * i as f64;
        let right = if i + 1 == panels { b } else { a + w * (i + 1) as f64 };
        let f_mid = f(0.5 * (left + right));
        let f_right = f(right);
        acc += simpson_panel(f_left, f_mid, f_right, right - left);
        f_left = f_right;
    }
    acc
}

/// `lo + (hi - lo) * (idx / count)`; every uniform grid in the crate goes
/// through this so that grids of different refinement share exact nodes.
#[inline]
pub fn grid_point(lo: f64, hi: f64, idx: usize, count: usize) -> f64 {
    if idx == count {
        return hi;
    }
    lo + (hi - lo) * (idx as f64 / count as f64)
}

/// Uniform grid of `n` points covering `[lo, hi]` (both ends included).
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| grid_point(lo, hi, i, n - 1)).collect(),
    }
}
