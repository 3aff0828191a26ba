//! Quadrature oracles for the invariant density
//!
//! ```text
//! rho(x) = exp(U(x)) / (C sigma^2(x)),   U(x) = int_0^x 2 b / sigma^2
//! ```
//!
//! and for the expected hitting time of level `x` from `y0`
//!
//! ```text
//! xi(x) = 2 int_{y0}^x F(y) / (sigma^2(y) rho(y)) dy,   F(y) = int_{-inf}^y rho
//! ```
//!
//! Everything is tabulated once on a uniform grid over `[-R, R]` with
//! composite Simpson panels; off-grid values add one partial panel from the
//! nearest node to the left. The potential is stored shifted by its maximum so
//! that `exp` never overflows inside the truncation window.

use serde::{Deserialize, Serialize};

use super::model::DiffusionModel;
use crate::quad::{grid_point, simpson, simpson_panel};
use crate::rng::SimRng;
use crate::{Error, Result};

/// Default node spacing of the oracle grid.
pub const DEFAULT_QUAD_STEP: f64 = 2e-3;

/// Truncation radius is chosen so that the class tail bound
/// `exp(-2 gamma (R - A))` drops below this level.
pub const TAIL_LEVEL: f64 = 1e-12;

// Relative disagreement tolerated between the fine and the double-step
// Simpson estimate of the normalising constant.
const NORM_CONVERGENCE_TOL: f64 = 1e-6;

/// Lower limit of the inner integral in `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerLimit {
    /// `int_{-inf}^y rho`: the hitting-time functional.
    #[default]
    MinusInfinity,
    /// `int_{y0}^y rho`: the base-level-truncated plug-in form.
    BaseLevel,
}

#[derive(Debug, Clone)]
pub struct InvariantDensityOracle {
    model: DiffusionModel,
    trunc_bound: f64,
    cells: usize,
    step: f64,
    const_sigma2: Option<f64>,
    /// `U(z_i) - shift`
    potential: Vec<f64>,
    shift: f64,
    /// `int exp(U - shift) / sigma^2` over `[-R, R]`
    scaled_norm: f64,
    cdf: Vec<f64>,
}

impl InvariantDensityOracle {
    pub fn new(model: &DiffusionModel) -> Result<Self> {
        let r = Self::default_trunc_bound(model);
        let cells = 2 * ((r / DEFAULT_QUAD_STEP).ceil() as usize);
        Self::with_resolution(model, r, cells)
    }

    /// `R = A + ln(1/TAIL_LEVEL) / (2 gamma)`.
    pub fn default_trunc_bound(model: &DiffusionModel) -> f64 {
        let p = &model.class_params;
        p.recurrence_a + (1.0 / TAIL_LEVEL).ln() / (2.0 * p.recurrence_gamma)
    }

    /// `cells` is rounded up to an even number so that `0` is a node.
    pub fn with_resolution(model: &DiffusionModel, trunc_bound: f64, cells: usize) -> Result<Self> {
        if !(trunc_bound > 0.0 && trunc_bound.is_finite()) {
            return Err(Error::Domain(format!("truncation bound must be positive, got {trunc_bound}")));
        }
        let cells = (cells.max(4) + 1) / 2 * 2;
        let lo = -trunc_bound;
        let step = 2.0 * trunc_bound / cells as f64;
        let node = |i: usize| grid_point(lo, trunc_bound, i, cells);
        let const_sigma2 = model.sigma.as_constant().map(|s| s * s);
        let speed = |x: f64| {
            let s2 = const_sigma2.unwrap_or_else(|| model.sigma2(x));
            2.0 * model.drift(x) / s2
        };

        let centre = cells / 2;
        let mut potential = vec![0.0; cells + 1];
        for i in centre + 1..=cells {
            let (a, b) = (node(i - 1), node(i));
            potential[i] = potential[i - 1] + simpson_panel(speed(a), speed(0.5 * (a + b)), speed(b), b - a);
        }
        for i in (0..centre).rev() {
            let (a, b) = (node(i), node(i + 1));
            potential[i] = potential[i + 1] - simpson_panel(speed(a), speed(0.5 * (a + b)), speed(b), b - a);
        }
        if potential.iter().any(|u| !u.is_finite()) {
            return Err(Error::Quadrature(format!("potential of `{}` is not finite on [-R, R]", model.name)));
        }
        let shift = potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        potential.iter_mut().for_each(|u| *u -= shift);

        let mut oracle = InvariantDensityOracle {
            model: model.clone(),
            trunc_bound,
            cells,
            step,
            const_sigma2,
            potential,
            shift,
            scaled_norm: 1.0,
            cdf: Vec::new(),
        };

        let unnorm_nodes: Vec<f64> = (0..=cells).map(|i| oracle.unnormalised_at_node(i)).collect();
        let mut cell_mass = Vec::with_capacity(cells);
        for i in 0..cells {
            let (a, b) = (node(i), node(i + 1));
            let mid = oracle.unnormalised(0.5 * (a + b));
            cell_mass.push(simpson_panel(unnorm_nodes[i], mid, unnorm_nodes[i + 1], b - a));
        }
        let fine: f64 = cell_mass.iter().sum();
        let coarse: f64 = (0..cells / 2)
            .map(|j| {
                simpson_panel(unnorm_nodes[2 * j], unnorm_nodes[2 * j + 1], unnorm_nodes[2 * j + 2], 2.0 * step)
            })
            .sum();
        if !(fine.is_finite() && fine > 0.0) {
            return Err(Error::Quadrature(format!("normalising constant of `{}` is {fine}", model.name)));
        }
        if ((fine - coarse) / fine).abs() > NORM_CONVERGENCE_TOL {
            return Err(Error::Quadrature(format!(
                "normalising constant of `{}` not converged: {fine} vs {coarse} at half resolution",
                model.name
            )));
        }
        oracle.scaled_norm = fine;
        let mut cdf = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for m in &cell_mass {
            acc += m / fine;
            cdf.push(acc);
        }
        oracle.cdf = cdf;
        Ok(oracle)
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn trunc_bound(&self) -> f64 {
        self.trunc_bound
    }

    /// Number of Simpson cells on `[-R, R]`.
    pub fn quad_points(&self) -> usize {
        self.cells
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `ln C_{b,sigma}`.
    pub fn log_norm_constant(&self) -> f64 {
        self.scaled_norm.ln() + self.shift
    }

    /// `C_{b,sigma}` (may be `inf` for extreme potentials; see
    /// [`Self::log_norm_constant`]).
    pub fn norm_constant(&self) -> f64 {
        self.log_norm_constant().exp()
    }

    #[inline]
    fn node(&self, i: usize) -> f64 {
        grid_point(-self.trunc_bound, self.trunc_bound, i, self.cells)
    }

    #[inline]
    fn sigma2(&self, x: f64) -> f64 {
        self.const_sigma2.unwrap_or_else(|| self.model.sigma2(x))
    }

    #[inline]
    fn speed(&self, x: f64) -> f64 {
        2.0 * self.model.drift(x) / self.sigma2(x)
    }

    #[inline]
    fn cell_of(&self, x: f64) -> usize {
        (((x + self.trunc_bound) / self.step).floor().max(0.0) as usize).min(self.cells - 1)
    }

    /// `U(x) - shift`, extended analytically (by further quadrature of the
    /// drift) outside `[-R, R]`.
    pub fn shifted_potential(&self, x: f64) -> f64 {
        let r = self.trunc_bound;
        if x > r {
            let panels = ((x - r) / self.step).ceil() as usize;
            return self.potential[self.cells] + simpson(|y| self.speed(y), r, x, panels);
        }
        if x < -r {
            let panels = ((-r - x) / self.step).ceil() as usize;
            return self.potential[0] - simpson(|y| self.speed(y), x, -r, panels);
        }
        let i = self.cell_of(x);
        let a = self.node(i);
        if x == a {
            return self.potential[i];
        }
        self.potential[i] + simpson_panel(self.speed(a), self.speed(0.5 * (a + x)), self.speed(x), x - a)
    }

    #[inline]
    fn unnormalised_at_node(&self, i: usize) -> f64 {
        self.potential[i].exp() / self.sigma2(self.node(i))
    }

    #[inline]
    fn unnormalised(&self, x: f64) -> f64 {
        self.shifted_potential(x).exp() / self.sigma2(x)
    }

    /// Invariant density `rho_b(x)`.
    pub fn density(&self, x: f64) -> f64 {
        self.unnormalised(x) / self.scaled_norm
    }

    /// `F(x) = int_{-inf}^x rho_b` (mass outside `[-R, R]` is treated as zero).
    pub fn cdf(&self, x: f64) -> f64 {
        let r = self.trunc_bound;
        if x <= -r {
            return 0.0;
        }
        if x >= r {
            return 1.0;
        }
        let i = self.cell_of(x);
        let a = self.node(i);
        if x == a {
            return self.cdf[i];
        }
        let part = simpson_panel(self.density(a), self.density(0.5 * (a + x)), self.density(x), x - a);
        (self.cdf[i] + part).clamp(0.0, 1.0)
    }

    /// `1 / (sigma^2(y) rho(y))`, computed in log space.
    #[inline]
    fn inverse_speed_density(&self, y: f64) -> f64 {
        self.scaled_norm * (-self.shifted_potential(y)).exp()
    }

    /// Integrand of `xi`: `2 (F(y) - base) / (sigma^2(y) rho(y))`.
    fn xi_integrand(&self, y: f64, base_mass: f64) -> f64 {
        let mass = (self.cdf(y) - base_mass).max(0.0);
        if mass == 0.0 {
            return 0.0;
        }
        2.0 * mass * self.inverse_speed_density(y)
    }

    /// `xi_b(x)` from `y0` with the hitting-time inner limit `-inf`.
    pub fn xi(&self, y0: f64, x: f64) -> Result<f64> {
        XiTable::new(self, y0, InnerLimit::MinusInfinity, x)?.xi(x)
    }

    /// `min rho_b` over `[lo, hi]`, sampled on the oracle grid plus both ends.
    pub fn min_density_on(&self, lo: f64, hi: f64) -> f64 {
        let n = (((hi - lo) / self.step).ceil() as usize).max(1);
        (0..=n).map(|i| self.density(grid_point(lo, hi, i, n))).fold(f64::INFINITY, f64::min)
    }

    /// Draw from the invariant law by inverting the tabulated CDF (linear
    /// interpolation between nodes).
    pub fn sample_stationary(&self, rng: &mut SimRng) -> f64 {
        use rand::Rng;
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cells);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (x0, x1) = (self.node(i - 1), self.node(i));
        if c1 > c0 {
            x0 + (x1 - x0) * ((u - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            x0
        }
    }
}

/// `xi` tabulated on nodes `y0 + k * step` up to some upper level; off-node
/// values add a partial Simpson panel.
#[derive(Debug, Clone)]
pub struct XiTable<'a> {
    oracle: &'a InvariantDensityOracle,
    y0: f64,
    inner: InnerLimit,
    base_mass: f64,
    step: f64,
    values: Vec<f64>,
}

impl<'a> XiTable<'a> {
    pub fn new(oracle: &'a InvariantDensityOracle, y0: f64, inner: InnerLimit, upper: f64) -> Result<Self> {
        if !y0.is_finite() || !upper.is_finite() {
            return Err(Error::Domain("xi table bounds must be finite".into()));
        }
        let base_mass = match inner {
            InnerLimit::MinusInfinity => 0.0,
            InnerLimit::BaseLevel => oracle.cdf(y0),
        };
        let step = oracle.step;
        let cells = (((upper - y0) / step).ceil().max(0.0)) as usize + 1;
        let mut values = Vec::with_capacity(cells + 1);
        values.push(0.0);
        let mut f_left = oracle.xi_integrand(y0, base_mass);
        let mut acc = 0.0;
        for k in 0..cells {
            let a = y0 + step * k as f64;
            let b = y0 + step * (k + 1) as f64;
            let f_mid = oracle.xi_integrand(0.5 * (a + b), base_mass);
            let f_right = oracle.xi_integrand(b, base_mass);
            acc += simpson_panel(f_left, f_mid, f_right, step);
            values.push(acc);
            f_left = f_right;
        }
        Ok(XiTable { oracle, y0, inner, base_mass, step, values })
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn inner_limit(&self) -> InnerLimit {
        self.inner
    }

    /// `xi(x)` for `x >= y0`; `xi(y0) = 0`.
    pub fn xi(&self, x: f64) -> Result<f64> {
        if !(x >= self.y0) {
            return Err(Error::Domain(format!("xi evaluated at x = {x} below base level y0 = {}", self.y0)));
        }
        let last = self.values.len() - 1;
        let k = (((x - self.y0) / self.step).floor() as usize).min(last);
        let a = self.y0 + self.step * k as f64;
        if x == a {
            return Ok(self.values[k]);
        }
        let f = |y: f64| self.oracle.xi_integrand(y, self.base_mass);
        let width = x - a;
        let panels = ((width / self.step).ceil() as usize).max(1);
        let extra = if panels == 1 {
            simpson_panel(f(a), f(0.5 * (a + x)), f(x), width)
        } else {
            simpson(f, a, x, panels)
        };
        Ok(self.values[k] + extra)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::DriftClassParams;
    use crate::func::Func;
    use std::f64::consts::PI;

    fn ou() -> DiffusionModel {
        DiffusionModel::new(
            "ou",
            Func::linear(0.0, -1.0),
            Func::constant(1.0),
            DriftClassParams::new(1.0, 1.0, 0.5, 1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ou_density_matches_gaussian() {
        let o = InvariantDensityOracle::new(&ou()).unwrap();
        // N(0, 1/2): rho(x) = exp(-x^2) / sqrt(pi)
        assert!((o.density(0.0) - 0.564_189_583_547_756_3).abs() < 1e-10);
        for &x in &[-2.3f64, -0.7, 0.0, 0.4, 1.0, 3.1] {
            let exact = (-x * x).exp() / PI.sqrt();
            assert!((o.density(x) - exact).abs() < 1e-10 * exact.max(1e-3), "x = {x}");
        }
        assert!((o.density(1.0) / o.density(0.0) - (-1f64).exp()).abs() < 1e-12);
        assert!((o.norm_constant() - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn cdf_is_monotone_and_normalised() {
        let o = InvariantDensityOracle::new(&ou()).unwrap();
        assert!((o.cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((o.cdf(40.0) - 1.0).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 0..200 {
            let c = o.cdf(-4.0 + 0.04 * i as f64);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn tail_extension_beyond_truncation() {
        let o = InvariantDensityOracle::with_resolution(&ou(), 4.0, 4000).unwrap();
        let x = 4.5f64;
        let exact = (-x * x).exp() / PI.sqrt();
        assert!((o.density(x) / exact - 1.0).abs() < 1e-6);
    }

    #[test]
    fn xi_anchor_and_domain() {
        let o = InvariantDensityOracle::new(&ou()).unwrap();
        assert_eq!(o.xi(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(o.xi(0.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn coarse_grid_fails_convergence() {
        let r = InvariantDensityOracle::with_resolution(&ou(), 30.0, 8);
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }
}
