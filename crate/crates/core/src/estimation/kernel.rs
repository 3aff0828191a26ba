//! Compactly supported polynomial smoothing kernels.

use serde::{Deserialize, Serialize};

use crate::quad::simpson;
use crate::{Error, Result};

/// Numerical tolerance for the moment conditions.
pub const KERNEL_QUAD_TOL: f64 = 1e-9;

/// `Q(u) = sum_k coeffs[k] u^k` on `[-half_width, half_width]`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub half_width: f64,
    /// Number of vanishing moments `j = 1..=order`.
    pub order: u32,
    /// Tolerance for the symmetry and support checks.
    pub tol: f64,
}

impl KernelSpec {
    /// Validated constructor.
    pub fn new(name: impl Into<String>, coeffs: Vec<f64>, half_width: f64, order: u32, tol: f64) -> Result<Self> {
        let k = KernelSpec { name: name.into(), coeffs, half_width, order, tol };
        k.validate()?;
        Ok(k)
    }

    /// Epanechnikov kernel rescaled to `[-1/2, 1/2]`: `1.5 (1 - 4u^2)`, order 1.
    pub fn epanechnikov() -> Self {
        KernelSpec { name: "epanechnikov".into(), coeffs: vec![1.5, 0.0, -6.0], half_width: 0.5, order: 1, tol: 1e-12 }
    }

    /// `(45/16 - 105/4 u^2)(1 - 4u^2)` on `[-1/2, 1/2]`: second moment vanishes,
    /// order 3.
    pub fn order3() -> Self {
        KernelSpec {
            name: "order3".into(),
            coeffs: vec![45.0 / 16.0, 0.0, -37.5, 0.0, 105.0],
            half_width: 0.5,
            order: 3,
            tol: 1e-12,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "epanechnikov" => Ok(Self::epanechnikov()),
            "order3" => Ok(Self::order3()),
            other => Err(Error::InvalidKernel(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    #[inline]
    fn poly(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if u.abs() <= self.half_width {
            self.poly(u)
        } else {
            0.0
        }
    }

    /// `int_{-inf}^u Q`.
    pub fn cdf(&self, u: f64) -> f64 {
        let hw = self.half_width;
        let anti = |v: f64| {
            self.coeffs.iter().enumerate().rev().fold(0.0, |acc, (k, c)| acc * v + c / (k + 1) as f64) * v
        };
        if u <= -hw {
            0.0
        } else if u >= hw {
            anti(hw) - anti(-hw)
        } else {
            anti(u) - anti(-hw)
        }
    }

    /// `int u^j Q(u) du` by fine Simpson quadrature.
    pub fn moment(&self, j: u32) -> f64 {
        let hw = self.half_width;
        simpson(|u| u.powi(j as i32) * self.eval(u), -hw, hw, 2000)
    }

    /// Symmetry, support in `[-1/2, 1/2]`, unit mass, vanishing moments up to
    /// `order`, and Lipschitz continuity (difference quotients stable under
    /// grid refinement).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidKernel(format!("{}: {m}", self.name)));
        if self.coeffs.is_empty() || self.coeffs.iter().any(|c| !c.is_finite()) {
            return bad("coefficients must be finite and non-empty".into());
        }
        if !(self.half_width > 0.0) {
            return bad("half width must be positive".into());
        }
        let check: Vec<f64> = crate::quad::uniform_grid(-1.0, 1.0, 4001);
        if let Some(u) = check.iter().find(|&&u| (self.eval(u) - self.eval(-u)).abs() > self.tol) {
            return bad(format!("not symmetric at u = {u}"));
        }
        if let Some(u) = check.iter().find(|&&u| u.abs() > 0.5 && self.eval(u).abs() > self.tol) {
            return bad(format!("support exceeds [-1/2, 1/2] at u = {u}"));
        }
        let mass = self.moment(0);
        if (mass - 1.0).abs() > KERNEL_QUAD_TOL {
            return bad(format!("integrates to {mass}, not 1"));
        }
        for j in 1..=self.order {
            let m = self.moment(j);
            if m.abs() > KERNEL_QUAD_TOL {
                return bad(format!("moment {j} is {m}, kernel is not of order {}", self.order));
            }
        }
        let lip = |step: f64| {
            let n = (3.0 / step) as usize;
            (0..n)
                .map(|i| {
                    let u = -1.5 + step * i as f64;
                    ((self.eval(u + step) - self.eval(u)) / step).abs()
                })
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (lip(1e-3), lip(1e-5));
        if fine > 2.0 * coarse + 1.0 {
            return bad(format!("not Lipschitz: difference quotients {coarse} -> {fine} under refinement"));
        }
        Ok(())
    }
}
