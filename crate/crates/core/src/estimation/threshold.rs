//! Estimated optimal threshold `y_hat = argmax_{[y1, beta]} g / xi_hat`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::density::{default_bandwidth, default_local_time_band, Density, DensityEstimate, DensityKind};
use super::kernel::KernelSpec;
use super::occupation::Occupation;
use super::xi::{threshold_nodes, XiEstimate};
use crate::diffusion::{DiffusionModel, InnerLimit};
use crate::problem::{argmax_first, RewardSpec, DEFAULT_GRID_N};
use crate::{Error, Result};

pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-3;

/// Coarsest quadrature step for the plug-in `xi`, whatever the bandwidth.
const MAX_NODE_STEP: f64 = 0.02;

/// How the smoothing scale depends on the observation length `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `h = T^{-1/2}`
    InvSqrt,
    /// `h = factor * T^{-1/2}`
    Scaled { factor: f64 },
    Fixed { h: f64 },
}

impl BandwidthRule {
    pub fn bandwidth(&self, duration: f64) -> f64 {
        match *self {
            BandwidthRule::InvSqrt => default_bandwidth(duration),
            BandwidthRule::Scaled { factor } => factor * default_bandwidth(duration),
            BandwidthRule::Fixed { h } => h,
        }
    }

    /// `inv_sqrt`, `scaled:<factor>` or `fixed:<h>`.
    pub fn parse(s: &str) -> Result<Self> {
        let num = |v: &str| -> Result<f64> {
            let x: f64 = v.parse().map_err(|_| Error::Format(format!("bad bandwidth value `{v}`")))?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Domain(format!("bandwidth value must be positive, got {x}")))
            }
        };
        match s.split_once(':') {
            None if s == "inv_sqrt" => Ok(BandwidthRule::InvSqrt),
            Some(("scaled", v)) => Ok(BandwidthRule::Scaled { factor: num(v)? }),
            Some(("fixed", v)) => Ok(BandwidthRule::Fixed { h: num(v)? }),
            _ => Err(Error::Format(format!("bandwidth rule `{s}`: expected inv_sqrt, scaled:<c> or fixed:<h>"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kernel: KernelSpec,
    pub density: DensityKind,
    pub bandwidth: BandwidthRule,
    /// Density floor `a`.
    pub a: f64,
    /// Lower cap on `xi_hat`; `None` takes the reward's `M1`.
    pub m1: Option<f64>,
    pub grid_n: usize,
    pub inner: InnerLimit,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            kernel: KernelSpec::epanechnikov(),
            density: DensityKind::Kernel,
            bandwidth: BandwidthRule::InvSqrt,
            a: DEFAULT_DENSITY_FLOOR,
            m1: None,
            grid_n: DEFAULT_GRID_N,
            inner: InnerLimit::MinusInfinity,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Domain(format!("density floor a must be positive, got {}", self.a)));
        }
        if let Some(m1) = self.m1 {
            if !(m1 > 0.0 && m1.is_finite()) {
                return Err(Error::Domain(format!("M1 must be positive, got {m1}")));
            }
        }
        if self.grid_n < 2 {
            return Err(Error::Domain(format!("grid_n must be at least 2, got {}", self.grid_n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub y_hat: f64,
    pub value_hat: f64,
    /// Observation length the estimate was built from.
    pub duration: f64,
    /// Bandwidth or local-time band actually used.
    pub resolution: f64,
    pub xi: XiEstimate,
}

/// Grid argmax of `g / xi_hat` over `[y1, beta]`, smallest `y` on ties.
pub fn estimate_threshold(xi_hat: &XiEstimate, reward: &RewardSpec, grid_n: usize) -> Result<(f64, f64)> {
    let grid = reward.grid(grid_n);
    let rates: Vec<f64> = grid.iter().map(|&y| reward.base(y) / xi_hat.eval(y)).collect();
    let k = argmax_first(&rates).ok_or_else(|| Error::Domain("empty threshold grid".into()))?;
    Ok((grid[k], reward.scale * rates[k]))
}

/// Density estimate over `occ` as prescribed by `cfg`.
pub fn density_from_config<'a>(
    occ: &'a Occupation,
    model: &DiffusionModel,
    cfg: &EstimatorConfig,
) -> Result<DensityEstimate<'a>> {
    let upper = model.class_params.sigma_upper;
    match cfg.density {
        DensityKind::Kernel => DensityEstimate::kernel(occ, cfg.kernel.clone(), cfg.bandwidth.bandwidth(occ.duration())),
        DensityKind::LocalTime => {
            let eps = match cfg.bandwidth {
                BandwidthRule::Fixed { h } => h,
                _ => default_local_time_band(occ.dt(), upper),
            };
            DensityEstimate::local_time(occ, eps, model.sigma.clone(), upper)
        }
    }
}

/// Plug-in `xi_hat` from `density` on the node grid aligned with the
/// threshold search grid.
pub fn xi_from_density<D: Density + ?Sized>(
    density: &D,
    resolution: f64,
    model: &DiffusionModel,
    reward: &RewardSpec,
    cfg: &EstimatorConfig,
) -> Result<XiEstimate> {
    let step = (0.25 * resolution).min(MAX_NODE_STEP);
    let nodes = threshold_nodes(reward.y0, reward.y1, reward.beta, cfg.grid_n, step)?;
    XiEstimate::build(density, &model.sigma, cfg.a, cfg.m1.unwrap_or(reward.m1), cfg.inner, &nodes)
}

/// Full pipeline from an occupation record to `(y_hat, value_hat)`.
pub fn estimate_from_occupation(
    occ: &Occupation,
    model: &DiffusionModel,
    reward: &RewardSpec,
    cfg: &EstimatorConfig,
) -> Result<ThresholdEstimate> {
    cfg.validate()?;
    let density = density_from_config(occ, model, cfg)?;
    let summary = density.summary();
    let xi = xi_from_density(&density, summary.resolution, model, reward, cfg)?;
    let (y_hat, value_hat) = estimate_threshold(&xi, reward, cfg.grid_n)?;
    Ok(ThresholdEstimate {
        y_hat,
        value_hat,
        duration: occ.duration(),
        resolution: summary.resolution,
        xi: xi.with_source(summary),
    })
}

/// One row of the estimation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub x: f64,
    pub rho_hat: f64,
    pub xi_hat: f64,
    pub g_over_xi: f64,
}

pub fn profile_rows<D: Density + ?Sized>(density: &D, xi: &XiEstimate, reward: &RewardSpec, xs: &[f64]) -> Vec<ProfileRow> {
    xs.iter()
        .map(|&x| {
            let xi_hat = xi.eval(x);
            ProfileRow { x, rho_hat: density.density(x), xi_hat, g_over_xi: reward.scale * (reward.base(x) / xi_hat) }
        })
        .collect()
}

/// CSV with columns `x,rho_hat,xi_hat,g_over_xi`.
pub fn write_profile_csv<W: Write>(mut w: W, rows: &[ProfileRow]) -> Result<()> {
    writeln!(w, "x,rho_hat,xi_hat,g_over_xi")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.x, r.rho_hat, r.xi_hat, r.g_over_xi)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::diffusion::InvariantDensityOracle;
    use crate::problem::solve_oracle;

    #[test]
    fn bandwidth_rules() {
        assert_eq!(BandwidthRule::parse("inv_sqrt").unwrap(), BandwidthRule::InvSqrt);
        assert_eq!(BandwidthRule::parse("fixed:0.1").unwrap(), BandwidthRule::Fixed { h: 0.1 });
        assert_eq!(BandwidthRule::parse("scaled:2").unwrap().bandwidth(400.0), 0.1);
        assert!(BandwidthRule::parse("fixed:-1").is_err());
        assert!(BandwidthRule::parse("wide").is_err());
    }

    #[test]
    fn exact_density_recovers_oracle_threshold() {
        let p = catalog::ou();
        let oracle = InvariantDensityOracle::new(&p.model).unwrap();
        let cfg = EstimatorConfig { a: 1e-6, m1: Some(1e-6), ..Default::default() };
        let xi = xi_from_density(&oracle, 0.01, &p.model, &p.reward, &cfg).unwrap();
        let (y_hat, value) = estimate_threshold(&xi, &p.reward, cfg.grid_n).unwrap();
        let sol = solve_oracle(&p.model, &p.reward, cfg.grid_n).unwrap();
        assert!((y_hat - sol.y_star).abs() <= sol.grid_step() + 1e-12, "{y_hat} vs {}", sol.y_star);
        assert!((value - sol.phi).abs() < 1e-6 * sol.phi);
    }

    #[test]
    fn profile_csv_has_header() {
        let p = catalog::ou();
        let oracle = InvariantDensityOracle::new(&p.model).unwrap();
        let xi = xi_from_density(&oracle, 0.05, &p.model, &p.reward, &EstimatorConfig::default()).unwrap();
        let rows = profile_rows(&oracle, &xi, &p.reward, &[0.5, 1.0]);
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,rho_hat,xi_hat,g_over_xi\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
