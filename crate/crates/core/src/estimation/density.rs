//! Invariant density estimators from an occupation sample.
//!
//! Kernel estimator: `rho(x) = (1 / (T h)) int_0^T Q((x - X_u) / h) du`.
//! Local-time estimator: the local time at `x` is approximated by the
//! `eps`-band occupation `(1/eps) int 1{x <= X_s <= x + eps} sigma^2(X_s) ds`
//! and divided by `T sigma^2(x)`.

use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::occupation::Occupation;
use crate::diffusion::{InvariantDensityOracle, SamplePath};
use crate::func::Func;
use crate::{Error, Result};

/// An evaluable density on the real line together with its distribution
/// function.
pub trait Density: Sync {
    fn density(&self, x: f64) -> f64;

    /// `int_{-inf}^x density`.
    fn mass_below(&self, x: f64) -> f64;
}

impl Density for InvariantDensityOracle {
    fn density(&self, x: f64) -> f64 {
        InvariantDensityOracle::density(self, x)
    }

    fn mass_below(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

/// Bandwidth `T^{-1/2}`.
pub fn default_bandwidth(duration: f64) -> f64 {
    duration.powf(-0.5)
}

/// Band width `max(2 dt sigma_upper^2, sqrt(dt))` for the local-time
/// approximation.
pub fn default_local_time_band(dt: f64, sigma_upper: f64) -> f64 {
    (2.0 * dt * sigma_upper * sigma_upper).max(dt.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Kernel,
    LocalTime,
}

/// Serializable description of where an estimate came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub kind: DensityKind,
    pub duration: f64,
    /// Bandwidth `h` (kernel) or band `eps` (local time).
    pub resolution: f64,
    pub kernel: Option<String>,
}

#[derive(Debug, Clone)]
enum Method {
    Kernel { kernel: KernelSpec, h: f64, quadratic: Option<[f64; 3]> },
    LocalTime { eps: f64, sigma: Func, const_sigma2: Option<f64> },
}

#[derive(Debug, Clone)]
pub struct DensityEstimate<'a> {
    occ: &'a Occupation,
    method: Method,
    resolution_warning: bool,
}

impl<'a> DensityEstimate<'a> {
    pub fn kernel(occ: &'a Occupation, kernel: KernelSpec, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {h}")));
        }
        if occ.is_empty() {
            return Err(Error::Domain("density estimate needs a path of positive duration".into()));
        }
        let resolution_warning = h < 2.0 * occ.dt();
        if resolution_warning {
            log::warn!("bandwidth {h} below 2 dt = {}: estimate dominated by discretisation", 2.0 * occ.dt());
        }
        let quadratic = (kernel.degree() <= 2).then(|| {
            let mut c = [0.0; 3];
            c[..kernel.coeffs.len()].copy_from_slice(&kernel.coeffs);
            c
        });
        Ok(DensityEstimate { occ, method: Method::Kernel { kernel, h, quadratic }, resolution_warning })
    }

    pub fn local_time(occ: &'a Occupation, eps: f64, sigma: Func, sigma_upper: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Domain(format!("local-time band must be positive, got {eps}")));
        }
        if occ.is_empty() {
            return Err(Error::Domain("density estimate needs a path of positive duration".into()));
        }
        let resolution_warning = eps < 2.0 * occ.dt() * sigma_upper;
        if resolution_warning {
            log::warn!("local-time band {eps} below 2 dt sigma_upper: estimate dominated by discretisation");
        }
        let const_sigma2 = sigma.as_constant().map(|s| s * s);
        Ok(DensityEstimate { occ, method: Method::LocalTime { eps, sigma, const_sigma2 }, resolution_warning })
    }

    /// True when the smoothing scale is below the discretisation resolution.
    pub fn resolution_warning(&self) -> bool {
        self.resolution_warning
    }

    pub fn occupation(&self) -> &Occupation {
        self.occ
    }

    pub fn summary(&self) -> DensitySummary {
        match &self.method {
            Method::Kernel { kernel, h, .. } => DensitySummary {
                kind: DensityKind::Kernel,
                duration: self.occ.duration(),
                resolution: *h,
                kernel: Some(kernel.name.clone()),
            },
            Method::LocalTime { eps, .. } => DensitySummary {
                kind: DensityKind::LocalTime,
                duration: self.occ.duration(),
                resolution: *eps,
                kernel: None,
            },
        }
    }

    /// Direct window sum, bypassing the prefix-sum shortcut.
    pub fn density_direct(&self, x: f64) -> f64 {
        match &self.method {
            Method::Kernel { kernel, h, .. } => {
                let half = kernel.half_width * h;
                let r = self.occ.window(x - half, x + half);
                let s: f64 = self.occ.sorted()[r].iter().map(|xi| kernel.eval((x - xi) / h)).sum();
                s / (self.occ.len() as f64 * h)
            }
            Method::LocalTime { .. } => self.density(x),
        }
    }
}

impl Density for DensityEstimate<'_> {
    fn density(&self, x: f64) -> f64 {
        let n = self.occ.len() as f64;
        match &self.method {
            Method::Kernel { kernel, h, quadratic } => {
                let half = kernel.half_width * h;
                let r = self.occ.window(x - half, x + half);
                let s = match quadratic {
                    Some(c) => self.occ.quadratic_window_sum(r, x, *h, *c),
                    None => self.occ.sorted()[r].iter().map(|xi| kernel.eval((x - xi) / h)).sum(),
                };
                (s / (n * h)).max(0.0)
            }
            Method::LocalTime { eps, sigma, const_sigma2 } => {
                let r = self.occ.window(x, x + eps);
                match const_sigma2 {
                    Some(_) => (r.end - r.start) as f64 / (n * eps),
                    None => {
                        let s: f64 = self.occ.sorted()[r].iter().map(|xi| sigma.eval(*xi).powi(2)).sum();
                        s / (n * eps * sigma.eval(x).powi(2))
                    }
                }
            }
        }
    }

    fn mass_below(&self, x: f64) -> f64 {
        let n = self.occ.len() as f64;
        match &self.method {
            Method::Kernel { kernel, h, .. } => {
                let half = kernel.half_width * h;
                let below = self.occ.count_below(x - half) as f64;
                let r = self.occ.window(x - half, x + half);
                let partial: f64 = self.occ.sorted()[r].iter().map(|xi| kernel.cdf((x - xi) / h)).sum();
                (below + partial) / n
            }
            Method::LocalTime { eps, sigma, const_sigma2 } => {
                // each state X_i spreads mass over levels a in [X_i - eps, X_i]
                let below = self.occ.count_below(x) as f64;
                let r = self.occ.window(x, x + eps);
                let partial: f64 = self.occ.sorted()[r]
                    .iter()
                    .map(|&xi| {
                        let frac = ((x - xi + eps) / eps).clamp(0.0, 1.0);
                        match const_sigma2 {
                            Some(_) => frac,
                            None => {
                                let mid = 0.5 * (xi - eps + x);
                                frac * sigma.eval(xi).powi(2) / sigma.eval(mid).powi(2)
                            }
                        }
                    })
                    .sum();
                (below + partial) / n
            }
        }
    }
}

/// Kernel estimate at a single point from a path.
pub fn kernel_density_estimate(path: &SamplePath, kernel: &KernelSpec, h: f64, x: f64) -> Result<f64> {
    let occ = Occupation::from_path(path)?;
    Ok(DensityEstimate::kernel(&occ, kernel.clone(), h)?.density(x))
}

/// Local-time estimate at a single point from a path.
pub fn local_time_density_estimate(path: &SamplePath, eps: f64, sigma: &Func, x: f64) -> Result<f64> {
    let occ = Occupation::from_path(path)?;
    let upper = sigma.eval(x).abs();
    Ok(DensityEstimate::local_time(&occ, eps, sigma.clone(), upper)?.density(x))
}
