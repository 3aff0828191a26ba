//! Harvest rewards and the full-information solution.
//!
//! A threshold strategy at level `y` earns `g(y)` once per renewal cycle of
//! expected length `xi_b(y)`, so its long-run rate is `g(y) / xi_b(y)` and
//! the optimal value is `Phi(b) = max_{y in [y1, beta]} g(y) / xi_b(y)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, DriftClassParams, InnerLimit, InvariantDensityOracle, XiTable};
use crate::func::Func;
use crate::quad::{grid_point, uniform_grid};
use crate::{Error, Result};

pub const DEFAULT_GRID_N: usize = 512;

/// Offset at which the right limit `g(y0+)` is probed.
const RIGHT_LIMIT_PROBE: f64 = 1e-6;
const SHAPE_CHECK_POINTS: usize = 200;
/// How far past `beta` the condition `g(y) <= g(beta)` is probed.
const BEYOND_BETA_SPAN: f64 = 10.0;
const XI_DEGENERATE: f64 = 1e-12;

/// Shape of the harvest reward before scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardFn {
    /// `min(y, cap) - cost`
    CappedLinear { cost: f64, cap: f64 },
    /// `amplitude * (1 - exp(-rate * (min(y, cap) - y0))) - cost`
    SmoothConcave { amplitude: f64, rate: f64, cost: f64, cap: f64 },
    /// Piecewise linear through the knots, flat outside.
    Tabulated { knots: Vec<(f64, f64)> },
}

impl RewardFn {
    fn eval(&self, y0: f64, y: f64) -> f64 {
        match self {
            RewardFn::CappedLinear { cost, cap } => y.min(*cap) - cost,
            RewardFn::SmoothConcave { amplitude, rate, cost, cap } => {
                amplitude * (1.0 - (-rate * (y.min(*cap) - y0)).exp()) - cost
            }
            RewardFn::Tabulated { knots } => Func::Tabulated { knots: knots.clone() }.eval(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub g: RewardFn,
    /// Positive factor applied to `g`.
    pub scale: f64,
    pub y0: f64,
    pub y1: f64,
    pub beta: f64,
    pub m1: f64,
    pub m2: f64,
}

impl RewardSpec {
    pub fn new(g: RewardFn, scale: f64, y0: f64, y1: f64, beta: f64, m1: f64, m2: f64) -> Result<Self> {
        let r = RewardSpec { g, scale, y0, y1, beta, m1, m2 };
        r.validate()?;
        Ok(r)
    }

    /// Unscaled shape `g(y) / scale` (zero at `y0` by convention).
    pub fn base(&self, y: f64) -> f64 {
        if y == self.y0 {
            0.0
        } else {
            self.g.eval(self.y0, y)
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.scale * self.base(y)
    }

    /// Same reward multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut r = self.clone();
        r.scale *= c;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidReward(m));
        if ![self.scale, self.y0, self.y1, self.beta, self.m1, self.m2].iter().all(|v| v.is_finite()) {
            return bad("reward parameters must be finite".into());
        }
        if !(self.scale > 0.0) {
            return bad(format!("reward scale must be positive, got {}", self.scale));
        }
        if !(self.y0 < self.y1 && self.y1 < self.beta) {
            return bad(format!("need y0 < y1 < beta, got {} / {} / {}", self.y0, self.y1, self.beta));
        }
        if !(self.m1 > 0.0 && self.m1 <= self.m2) {
            return bad(format!("need 0 < M1 <= M2, got M1 = {} and M2 = {}", self.m1, self.m2));
        }
        match &self.g {
            RewardFn::CappedLinear { cost, cap } if !(cost.is_finite() && cap.is_finite()) => {
                return bad("capped_linear parameters must be finite".into())
            }
            RewardFn::SmoothConcave { amplitude, rate, cost, cap }
                if ![amplitude, rate, cost, cap].iter().all(|v| v.is_finite()) =>
            {
                return bad("smooth_concave parameters must be finite".into())
            }
            RewardFn::Tabulated { knots } => {
                Func::Tabulated { knots: knots.clone() }.check().map_err(|e| Error::InvalidReward(e.to_string()))?
            }
            _ => {}
        }
        let probe = self.y0 + RIGHT_LIMIT_PROBE;
        if !(self.base(probe) < 0.0) {
            return bad(format!("g(y0+) must be negative, got g({probe}) = {}", self.base(probe)));
        }
        for i in 1..SHAPE_CHECK_POINTS {
            let y = grid_point(self.y0, self.y1, i, SHAPE_CHECK_POINTS);
            if !(self.base(y) < 0.0) {
                return bad(format!("g must be negative on (y0, y1), but g({y}) = {}", self.base(y)));
            }
        }
        if self.base(self.y1) < -1e-12 {
            return bad(format!("g(y1) must be nonnegative, got {}", self.base(self.y1)));
        }
        let g_beta = self.base(self.beta);
        if !(g_beta > 0.0) {
            return bad(format!("g(beta) must be positive, got {g_beta}"));
        }
        for i in 1..=SHAPE_CHECK_POINTS {
            let y = grid_point(self.beta, self.beta + BEYOND_BETA_SPAN, i, SHAPE_CHECK_POINTS);
            if self.base(y) > g_beta {
                return bad(format!("g({y}) = {} exceeds g(beta) = {g_beta}", self.base(y)));
            }
        }
        Ok(())
    }

    /// Search grid over `[y1, beta]`.
    pub fn grid(&self, grid_n: usize) -> Vec<f64> {
        uniform_grid(self.y1, self.beta, grid_n)
    }
}

/// Index of the maximum, smallest index on ties. NaN entries never win.
pub(crate) fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub phi: f64,
    pub y_star: f64,
    /// `(y, g(y) / xi_b(y))` on the search grid.
    pub profile: Vec<(f64, f64)>,
}

impl OracleSolution {
    pub fn grid_step(&self) -> f64 {
        match self.profile.len() {
            0 | 1 => 0.0,
            n => (self.profile[n - 1].0 - self.profile[0].0) / (n - 1) as f64,
        }
    }
}

/// Oracle objects for one model, reusable across many reward evaluations.
pub struct OracleContext {
    pub density: InvariantDensityOracle,
}

impl OracleContext {
    pub fn new(model: &DiffusionModel) -> Result<Self> {
        model.ensure_in_class()?;
        Ok(OracleContext { density: InvariantDensityOracle::new(model)? })
    }

    pub fn xi_table(&self, reward: &RewardSpec) -> Result<XiTable<'_>> {
        XiTable::new(&self.density, reward.y0, InnerLimit::MinusInfinity, reward.beta)
    }

    pub fn solve(&self, reward: &RewardSpec, grid_n: usize) -> Result<OracleSolution> {
        reward.validate()?;
        if grid_n < 2 {
            return Err(Error::Domain(format!("grid_n must be at least 2, got {grid_n}")));
        }
        let table = self.xi_table(reward)?;
        let xi_y1 = table.xi(reward.y1)?;
        if !(xi_y1 >= XI_DEGENERATE) {
            return Err(Error::Oracle(format!("xi(y1) = {xi_y1} is degenerate")));
        }
        let grid = reward.grid(grid_n);
        let mut rates = Vec::with_capacity(grid_n);
        for &y in &grid {
            let xi = table.xi(y)?;
            if !(xi.is_finite() && xi > 0.0) {
                return Err(Error::Oracle(format!("xi({y}) = {xi} is not a positive finite number")));
            }
            rates.push(reward.base(y) / xi);
        }
        let k = argmax_first(&rates).ok_or_else(|| Error::Oracle("empty search grid".into()))?;
        let phi = reward.scale * rates[k];
        let profile = grid.iter().zip(&rates).map(|(&y, &r)| (y, reward.scale * r)).collect();
        Ok(OracleSolution { phi, y_star: grid[k], profile })
    }

    pub fn rate_of_threshold(&self, reward: &RewardSpec, y: f64) -> Result<f64> {
        if !(y >= reward.y1 && y <= reward.beta) {
            return Err(Error::Domain(format!("threshold {y} outside [{}, {}]", reward.y1, reward.beta)));
        }
        let xi = XiTable::new(&self.density, reward.y0, InnerLimit::MinusInfinity, y)?.xi(y)?;
        Ok(reward.scale * (reward.base(y) / xi))
    }
}

/// `Phi(b)` and `y*` by grid search of `g / xi_b` over `grid_n` points.
pub fn solve_oracle(model: &DiffusionModel, reward: &RewardSpec, grid_n: usize) -> Result<OracleSolution> {
    OracleContext::new(model)?.solve(reward, grid_n)
}

/// Long-run rate `g(y) / xi_b(y)` of the threshold strategy at `y`.
pub fn reward_rate_of_threshold(model: &DiffusionModel, reward: &RewardSpec, y: f64) -> Result<f64> {
    OracleContext::new(model)?.rate_of_threshold(reward, y)
}

/// A model, a reward and the schedule constant for the data-driven strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub model: DiffusionModel,
    pub reward: RewardSpec,
    /// Exploration budget constant `m`.
    pub m: f64,
}

/// Default `m`: about a fifth of the time explores at `t = 2500`.
pub fn default_schedule_m() -> f64 {
    0.2 * 2500f64.powf(1.0 / 3.0)
}

impl Problem {
    /// Validate the model and fill `M1 = xi_b(y1) / 2`, `M2 = 2 xi_b(beta)`
    /// when not given.
    pub fn build(
        model: DiffusionModel,
        g: RewardFn,
        scale: f64,
        levels: (f64, f64, f64),
        bounds: (Option<f64>, Option<f64>),
        m: Option<f64>,
    ) -> Result<Self> {
        let (y0, y1, beta) = levels;
        model.ensure_in_class()?;
        let (m1, m2) = match bounds {
            (Some(a), Some(b)) => (a, b),
            (a, b) => {
                let oracle = InvariantDensityOracle::new(&model)?;
                if !(y0 < y1 && y1 < beta) {
                    return Err(Error::InvalidReward(format!("need y0 < y1 < beta, got {y0} / {y1} / {beta}")));
                }
                let table = XiTable::new(&oracle, y0, InnerLimit::MinusInfinity, beta)?;
                (a.unwrap_or(0.5 * table.xi(y1)?), b.unwrap_or(2.0 * table.xi(beta)?))
            }
        };
        let reward = RewardSpec::new(g, scale, y0, y1, beta, m1, m2)?;
        let m = m.unwrap_or_else(default_schedule_m);
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!("schedule constant m must be positive, got {m}")));
        }
        Ok(Problem { model, reward, m })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ProblemFile = toml::from_str(text).map_err(|e| Error::Format(format!("problem file: {e}")))?;
        file.into_problem()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Flat key-value form with every default resolved.
    pub fn to_file(&self) -> ProblemFile {
        let (drift, drift_params, drift_knots) = func_parts(&self.model.drift);
        let (sigma, sigma_params, sigma_knots) = func_parts(&self.model.sigma);
        let (reward, reward_params, reward_knots) = match &self.reward.g {
            RewardFn::CappedLinear { cost, cap } => ("capped_linear", vec![*cost, *cap], None),
            RewardFn::SmoothConcave { amplitude, rate, cost, cap } => {
                ("smooth_concave", vec![*amplitude, *rate, *cost, *cap], None)
            }
            RewardFn::Tabulated { knots } => ("tabulated", Vec::new(), Some(knots.clone())),
        };
        let c = &self.model.class_params;
        ProblemFile {
            name: self.model.name.clone(),
            drift,
            drift_params: (!drift_params.is_empty()).then_some(drift_params),
            drift_knots,
            sigma,
            sigma_params: (!sigma_params.is_empty()).then_some(sigma_params),
            sigma_knots,
            class_c: c.lin_growth_c,
            class_a: c.recurrence_a,
            class_gamma: c.recurrence_gamma,
            sigma_lower: c.sigma_lower,
            sigma_upper: c.sigma_upper,
            reward: reward.into(),
            reward_params: (!reward_params.is_empty()).then_some(reward_params),
            reward_knots,
            reward_scale: Some(self.reward.scale),
            y0: self.reward.y0,
            y1: self.reward.y1,
            beta: self.reward.beta,
            m1: Some(self.reward.m1),
            m2: Some(self.reward.m2),
            m: Some(self.m),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("problem file serializes")
    }
}

fn func_parts(f: &Func) -> (String, Vec<f64>, Option<Vec<(f64, f64)>>) {
    match f {
        Func::Constant { value } => ("constant".into(), vec![*value], None),
        Func::Linear { intercept, slope } => ("linear".into(), vec![*intercept, *slope], None),
        Func::Polynomial { coeffs } => ("polynomial".into(), coeffs.clone(), None),
        Func::Tanh { amplitude, center, width } => ("tanh".into(), vec![*amplitude, *center, *width], None),
        Func::PiecewiseLinear { knots } => ("piecewise_linear".into(), Vec::new(), Some(knots.clone())),
        Func::Tabulated { knots } => ("tabulated".into(), Vec::new(), Some(knots.clone())),
    }
}

/// On-disk problem definition (flat TOML, unknown keys rejected).
///
/// ```toml
/// name = "ou"
/// drift = "linear"          # constant | linear | polynomial | tanh | piecewise_linear | tabulated
/// drift_params = [0.0, -1.0]
/// sigma = "constant"
/// sigma_params = [1.0]
/// class_C = 1.0
/// class_A = 1.0
/// class_gamma = 0.5
/// sigma_lower = 1.0
/// sigma_upper = 1.0
/// reward = "capped_linear"  # capped_linear [cost, cap] | smooth_concave [amplitude, rate, cost, cap] | tabulated
/// reward_params = [0.5, 1.5]
/// y0 = 0.0
/// y1 = 0.5
/// beta = 1.5
/// # optional: reward_scale, M1, M2, m, drift_knots / sigma_knots / reward_knots = [[x, y], ...]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub drift: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_knots: Option<Vec<(f64, f64)>>,
    pub sigma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_knots: Option<Vec<(f64, f64)>>,
    #[serde(rename = "class_C")]
    pub class_c: f64,
    #[serde(rename = "class_A")]
    pub class_a: f64,
    pub class_gamma: f64,
    pub sigma_lower: f64,
    pub sigma_upper: f64,
    pub reward: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_knots: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_scale: Option<f64>,
    pub y0: f64,
    pub y1: f64,
    pub beta: f64,
    #[serde(rename = "M1", default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<f64>,
    #[serde(rename = "M2", default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<Problem> {
        let drift = Func::from_parts(
            &self.drift,
            self.drift_params.as_deref().unwrap_or(&[]),
            self.drift_knots.as_deref().unwrap_or(&[]),
        )?;
        let sigma = Func::from_parts(
            &self.sigma,
            self.sigma_params.as_deref().unwrap_or(&[]),
            self.sigma_knots.as_deref().unwrap_or(&[]),
        )?;
        let class =
            DriftClassParams::new(self.class_c, self.class_a, self.class_gamma, self.sigma_lower, self.sigma_upper)?;
        let model = DiffusionModel::new(self.name, drift, sigma, class)?;
        let params = self.reward_params.unwrap_or_default();
        let g = match self.reward.as_str() {
            "capped_linear" => match params[..] {
                [cost] => RewardFn::CappedLinear { cost, cap: self.beta },
                [cost, cap] => RewardFn::CappedLinear { cost, cap },
                _ => return Err(Error::Format("capped_linear expects reward_params = [cost] or [cost, cap]".into())),
            },
            "smooth_concave" => match params[..] {
                [amplitude, rate, cost] => RewardFn::SmoothConcave { amplitude, rate, cost, cap: self.beta },
                [amplitude, rate, cost, cap] => RewardFn::SmoothConcave { amplitude, rate, cost, cap },
                _ => {
                    return Err(Error::Format(
                        "smooth_concave expects reward_params = [amplitude, rate, cost] or [amplitude, rate, cost, cap]"
                            .into(),
                    ))
                }
            },
            "tabulated" => match self.reward_knots {
                Some(knots) => RewardFn::Tabulated { knots },
                None => return Err(Error::Format("tabulated reward needs reward_knots".into())),
            },
            other => return Err(Error::Format(format!("unknown reward kind `{other}`"))),
        };
        Problem::build(
            model,
            g,
            self.reward_scale.unwrap_or(1.0),
            (self.y0, self.y1, self.beta),
            (self.m1, self.m2),
            self.m,
        )
    }
}
