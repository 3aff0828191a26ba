//! Plug-in estimate of the expected hitting time functional
//!
//! ```text
//! xi_hat(x) = max{ M1, 2 int_{y0}^x F_hat(y) / ((rho_hat(y) v a) sigma^2(y)) dy }
//! ```
//!
//! with `F_hat(y) = int_{y0}^y rho_hat` (base-level inner limit) or
//! `int_{-inf}^y rho_hat`. Nested composite Simpson on a node grid that
//! starts at `y0`; values between nodes use cubic Hermite interpolation with
//! the exact integrand as slope, clamped to the bracketing node values so the
//! estimate stays monotone.

use serde::{Deserialize, Serialize};

use super::density::{Density, DensitySummary};
use crate::diffusion::InnerLimit;
use crate::func::Func;
use crate::quad::{grid_point, simpson_panel};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiEstimate {
    pub source: Option<DensitySummary>,
    pub floor_a: f64,
    pub m1: f64,
    pub y0: f64,
    pub inner: InnerLimit,
    nodes: Vec<f64>,
    /// Unfloored integral at the nodes.
    raw: Vec<f64>,
    /// Integrand at the nodes (derivative of `raw`).
    slope: Vec<f64>,
    /// Density estimate at the nodes.
    rho: Vec<f64>,
}

/// Node grid `y0 = z_0 < ... ` whose restriction to `[y1, beta]` contains the
/// `grid_n`-point threshold search grid, with spacing at most `max_step`.
pub fn threshold_nodes(y0: f64, y1: f64, beta: f64, grid_n: usize, max_step: f64) -> Result<Vec<f64>> {
    if !(y0 < y1 && y1 < beta) || grid_n < 2 || !(max_step > 0.0) {
        return Err(Error::Domain(format!(
            "need y0 < y1 < beta, grid_n >= 2 and positive step (got {y0}, {y1}, {beta}, {grid_n}, {max_step})"
        )));
    }
    let lower_cells = ((y1 - y0) / max_step).ceil().max(1.0) as usize;
    let coarse = grid_n - 1;
    let refine = ((beta - y1) / (coarse as f64 * max_step)).ceil().max(1.0) as usize;
    let upper_cells = coarse * refine;
    let mut nodes: Vec<f64> = (0..lower_cells).map(|i| grid_point(y0, y1, i, lower_cells)).collect();
    nodes.extend((0..=upper_cells).map(|i| grid_point(y1, beta, i, upper_cells)));
    Ok(nodes)
}

impl XiEstimate {
    /// Build the plug-in estimate on `nodes` (`nodes[0] == y0`, strictly
    /// increasing).
    pub fn build<D: Density + ?Sized>(
        density: &D,
        sigma: &Func,
        floor_a: f64,
        m1: f64,
        inner: InnerLimit,
        nodes: &[f64],
    ) -> Result<Self> {
        if !(floor_a > 0.0) || !(m1 > 0.0) {
            return Err(Error::Domain(format!("density floor a = {floor_a} and M1 = {m1} must be positive")));
        }
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("xi nodes must be strictly increasing with at least two entries".into()));
        }
        let y0 = nodes[0];
        let base = match inner {
            InnerLimit::BaseLevel => 0.0,
            InnerLimit::MinusInfinity => density.mass_below(y0),
        };
        let integrand = |y: f64, mass: f64, rho: f64| {
            let s = sigma.eval(y);
            2.0 * mass / (rho.max(floor_a) * s * s)
        };

        let n = nodes.len();
        let mut raw = Vec::with_capacity(n);
        let mut slope = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        let mut rho_left = density.density(y0);
        let mut mass_left = base;
        let mut phi_left = integrand(y0, mass_left, rho_left);
        raw.push(0.0);
        slope.push(phi_left);
        rho.push(rho_left);
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            let s = b - a;
            let mid = 0.5 * (a + b);
            let rho_q = density.density(a + 0.25 * s);
            let rho_m = density.density(mid);
            let rho_r = density.density(b);
            let mass_m = mass_left + simpson_panel(rho_left, rho_q, rho_m, 0.5 * s);
            let mass_r = mass_left + simpson_panel(rho_left, rho_m, rho_r, s);
            let phi_m = integrand(mid, mass_m, rho_m);
            let phi_r = integrand(b, mass_r, rho_r);
            let next = raw.last().copied().unwrap_or(0.0) + simpson_panel(phi_left, phi_m, phi_r, s);
            if !next.is_finite() {
                return Err(Error::Quadrature(format!("plug-in xi is not finite at x = {b}")));
            }
            raw.push(next);
            slope.push(phi_r);
            rho.push(rho_r);
            rho_left = rho_r;
            mass_left = mass_r;
            phi_left = phi_r;
        }
        Ok(XiEstimate { source: None, floor_a, m1, y0, inner, nodes: nodes.to_vec(), raw, slope, rho })
    }

    pub fn with_source(mut self, source: DensitySummary) -> Self {
        self.source = Some(source);
        self
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn rho_at_nodes(&self) -> &[f64] {
        &self.rho
    }

    /// Unfloored integral at `x` (0 below `y0`; linear extrapolation past the
    /// last node).
    pub fn raw(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.y0 {
            return 0.0;
        }
        if x >= self.nodes[n - 1] {
            return self.raw[n - 1] + self.slope[n - 1] * (x - self.nodes[n - 1]);
        }
        let i = self.nodes.partition_point(|&z| z <= x) - 1;
        let (za, zb) = (self.nodes[i], self.nodes[i + 1]);
        if x == za {
            return self.raw[i];
        }
        let w = zb - za;
        let t = (x - za) / w;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * self.raw[i] + h10 * w * self.slope[i] + h01 * self.raw[i + 1] + h11 * w * self.slope[i + 1];
        v.clamp(self.raw[i], self.raw[i + 1])
    }

    /// `xi_hat(x) = max(M1, raw(x))`.
    pub fn eval(&self, x: f64) -> f64 {
        self.raw(x).max(self.m1)
    }
}

/// Convenience wrapper: plug-in `xi_hat` over `[y0, upper]` on a uniform grid
/// with at most `max_step` spacing.
pub fn build_xi_estimate<D: Density + ?Sized>(
    density: &D,
    sigma: &Func,
    y0: f64,
    a: f64,
    m1: f64,
    inner: InnerLimit,
    upper: f64,
    max_step: f64,
) -> Result<XiEstimate> {
    if !(upper > y0) {
        return Err(Error::Domain(format!("upper limit {upper} must exceed y0 = {y0}")));
    }
    let cells = ((upper - y0) / max_step).ceil().max(1.0) as usize;
    let nodes: Vec<f64> = (0..=cells).map(|i| grid_point(y0, upper, i, cells)).collect();
    XiEstimate::build(density, sigma, a, m1, inner, &nodes)
}
