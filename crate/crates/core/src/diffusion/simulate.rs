use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::DiffusionModel;
use crate::rng::{rng_from_seed, SimRng};
use crate::{Error, Result};

/// Default Euler–Maruyama step.
pub const DEFAULT_DT: f64 = 1e-3;

/// A uniformly sampled trajectory `values[i] = X(t0 + i dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl SamplePath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("sample path must contain at least one state".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        Ok(SamplePath { t0, dt, values, seed })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `T = dt * (len - 1)`.
    pub fn duration(&self) -> f64 {
        self.dt * (self.values.len().saturating_sub(1)) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }
}

/// Number of Euler steps covering `[0, horizon]`: `floor(horizon / dt)`,
/// guarded against `T/dt` landing a rounding error below an integer.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    let ratio = horizon / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.floor() as usize
    }
}

/// One-step Euler–Maruyama integrator owning its random stream.
pub struct EulerStepper<'a> {
    model: &'a DiffusionModel,
    dt: f64,
    sqrt_dt: f64,
    const_sigma: Option<f64>,
    rng: SimRng,
}

impl<'a> EulerStepper<'a> {
    pub fn new(model: &'a DiffusionModel, dt: f64, seed: u64) -> Self {
        Self::with_rng(model, dt, rng_from_seed(seed))
    }

    pub fn with_rng(model: &'a DiffusionModel, dt: f64, rng: SimRng) -> Self {
        EulerStepper { model, dt, sqrt_dt: dt.sqrt(), const_sigma: model.sigma.as_constant(), rng }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        let s = match self.const_sigma {
            Some(s) => s,
            None => self.model.sigma(x),
        };
        x + self.model.drift(x) * self.dt + s * self.sqrt_dt * z
    }
}

fn check_step(horizon: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if dt > horizon {
        return Err(Error::Domain(format!("time step {dt} exceeds horizon {horizon}")));
    }
    Ok(())
}

/// Euler–Maruyama trajectory on `[0, horizon]` with `floor(horizon/dt) + 1`
/// states, deterministic in `seed`.
pub fn simulate_path(model: &DiffusionModel, x0: f64, horizon: f64, dt: f64, seed: u64) -> Result<SamplePath> {
    check_step(horizon, dt)?;
    if !x0.is_finite() {
        return Err(Error::Domain("initial state must be finite".into()));
    }
    let n = step_count(horizon, dt);
    let mut stepper = EulerStepper::new(model, dt, seed);
    let mut values = Vec::with_capacity(n + 1);
    let mut x = x0;
    values.push(x);
    for i in 0..n {
        x = stepper.step(x);
        if !x.is_finite() {
            return Err(Error::BlowUp { last_finite: i });
        }
        values.push(x);
    }
    SamplePath::new(0.0, dt, values, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingTime {
    pub time: f64,
    pub hit: bool,
}

/// First grid time with `X >= level`, or `(t_cap, false)` if the cap is
/// reached first.
pub fn first_hitting_time(
    model: &DiffusionModel,
    x0: f64,
    level: f64,
    dt: f64,
    seed: u64,
    t_cap: f64,
) -> Result<HittingTime> {
    let mut rng = rng_from_seed(seed);
    let times = first_passage_times(model, x0, &[level], dt, &mut rng, t_cap)?;
    Ok(match times[0] {
        Some(time) => HittingTime { time, hit: true },
        None => HittingTime { time: t_cap, hit: false },
    })
}

/// First grid times at which the path reaches each of `levels` (ascending,
/// all above `x0`) along a single trajectory driven by `rng`. Stops at the
/// last level or at `t_cap`; unreached levels are `None`.
pub fn first_passage_times(
    model: &DiffusionModel,
    x0: f64,
    levels: &[f64],
    dt: f64,
    rng: &mut SimRng,
    t_cap: f64,
) -> Result<Vec<Option<f64>>> {
    check_step(t_cap, dt)?;
    if levels.is_empty() {
        return Ok(Vec::new());
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("passage levels must be strictly increasing".into()));
    }
    if !(levels[0] > x0) {
        return Err(Error::Domain(format!("level {} must lie above the start {x0}", levels[0])));
    }
    let max_steps = step_count(t_cap, dt);
    let mut stepper = EulerStepper::with_rng(model, dt, rng.clone());
    let mut out = vec![None; levels.len()];
    let mut next = 0;
    let mut x = x0;
    for i in 1..=max_steps {
        x = stepper.step(x);
        if !x.is_finite() {
            return Err(Error::BlowUp { last_finite: i - 1 });
        }
        while next < levels.len() && x >= levels[next] {
            out[next] = Some(dt * i as f64);
            next += 1;
        }
        if next == levels.len() {
            break;
        }
    }
    *rng = stepper.rng;
    Ok(out)
}
