//! Independent reference computations used across the integration tests.
//! Nothing here calls into the crate's quadrature code.
#![allow(dead_code)]

use impulse_core::diffusion::DiffusionModel;
use statrs::function::erf::erf;

/// Composite Simpson with `panels` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// `N(0, 1/2)` density: invariant law of `dX = -X dt + dW`.
pub fn ou_density(x: f64) -> f64 {
    (-x * x).exp() / std::f64::consts::PI.sqrt()
}

pub fn ou_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x))
}

/// `xi(x) = sqrt(pi) int_0^x e^{u^2} (1 + erf u) du` for the OU model, `y0 = 0`.
pub fn ou_xi(x: f64) -> f64 {
    let f = |u: f64| (u * u).exp() * (1.0 + erf(u));
    std::f64::consts::PI.sqrt() * simpson(f, 0.0, x, 4000)
}

/// Base-level-truncated form `sqrt(pi) int_0^x e^{u^2} erf(u) du`.
pub fn ou_xi_base(x: f64) -> f64 {
    let f = |u: f64| (u * u).exp() * erf(u);
    std::f64::consts::PI.sqrt() * simpson(f, 0.0, x, 4000)
}

/// Brute-force `xi` for any scalar model from the scale/speed representation
/// `xi(x) = 2 int_{y0}^x int_{-inf}^y exp(U(z) - U(y)) / sigma^2(z) dz dy`,
/// `U' = 2 b / sigma^2`, on a fine uniform grid with cumulative trapezoid
/// sums. Accurate to roughly `1e-7` relative at the default step.
pub struct BruteXi {
    lo: f64,
    h: f64,
    /// `xi` relative to the grid origin, i.e. `int_{lo}^{x_i}` of the outer integrand
    outer: Vec<f64>,
}

impl BruteXi {
    pub fn new(model: &DiffusionModel, lo: f64, hi: f64, h: f64) -> Self {
        let n = ((hi - lo) / h).round() as usize;
        let xs: Vec<f64> = (0..=n).map(|i| lo + h * i as f64).collect();
        let du: Vec<f64> = xs.iter().map(|&x| 2.0 * model.drift(x) / model.sigma2(x)).collect();
        let mut u = vec![0.0; n + 1];
        for i in 1..=n {
            u[i] = u[i - 1] + 0.5 * h * (du[i - 1] + du[i]);
        }
        // inner(y) = int_lo^y exp(U(z) - U(y)) / sigma^2(z) dz, built recursively
        // so the exponent never overflows
        let mut inner = vec![0.0; n + 1];
        for i in 1..=n {
            let decay = (u[i - 1] - u[i]).exp();
            let left = 1.0 / model.sigma2(xs[i - 1]) * decay;
            let right = 1.0 / model.sigma2(xs[i]);
            inner[i] = inner[i - 1] * decay + 0.5 * h * (left + right);
        }
        let mut outer = vec![0.0; n + 1];
        for i in 1..=n {
            outer[i] = outer[i - 1] + h * (inner[i - 1] + inner[i]);
        }
        BruteXi { lo, h, outer }
    }

    fn at(&self, x: f64) -> f64 {
        let p = (x - self.lo) / self.h;
        let i = (p.floor() as usize).min(self.outer.len() - 2);
        let w = p - i as f64;
        self.outer[i] * (1.0 - w) + self.outer[i + 1] * w
    }

    pub fn xi(&self, y0: f64, x: f64) -> f64 {
        self.at(x) - self.at(y0)
    }
}
