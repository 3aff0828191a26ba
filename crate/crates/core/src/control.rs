//! Controlled runs: the fixed-threshold strategy and the data-driven
//! exploration/exploitation strategy.
//!
//! Both start at `y0`. An impulse collects `g(X_{tau-})` and resets the state
//! to `y0`. The data-driven run decides at each period boundary `t`:
//!
//! - explore when `S_t < m t^{2/3}` (or during the first
//!   `initial_explorations` periods, or while no exploration data exists):
//!   run uncontrolled up to `beta` and back down to `y0`, appending the
//!   segment to the exploration record `X'`;
//! - otherwise exploit: re-estimate `y_hat` from `X'` if it has grown, then
//!   run until the state reaches `y_hat` and harvest.

use serde::{Deserialize, Serialize};

use crate::diffusion::{step_count, DiffusionModel, EulerStepper};
use crate::estimation::{estimate_from_occupation, EstimatorConfig, Occupation};
use crate::problem::{solve_oracle, RewardSpec, DEFAULT_GRID_N};
use crate::{Error, Result};

/// Exploration segments longer than this many multiples of `M2` (simulated
/// time) abort the run.
pub const DEFAULT_RUNAWAY_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStrategy {
    pub y_cut: f64,
}

impl ThresholdStrategy {
    pub fn new(y_cut: f64, reward: &RewardSpec) -> Result<Self> {
        if !(y_cut >= reward.y1 && y_cut <= reward.beta) {
            return Err(Error::Domain(format!("threshold {y_cut} outside [{}, {}]", reward.y1, reward.beta)));
        }
        Ok(ThresholdStrategy { y_cut })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub m: f64,
    pub exponent: f64,
    pub initial_explorations: usize,
}

impl ExplorationSchedule {
    pub const EXPONENT: f64 = 2.0 / 3.0;

    pub fn new(m: f64, initial_explorations: usize) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!("schedule constant m must be positive, got {m}")));
        }
        Ok(ExplorationSchedule { m, exponent: Self::EXPONENT, initial_explorations })
    }

    /// Target exploration time `m t^{2/3}`.
    pub fn target(&self, t: f64) -> f64 {
        self.m * t.powf(self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodKind {
    Exploration,
    Exploitation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub t: f64,
    pub x_pre: f64,
    pub reward: f64,
    pub kind: PeriodKind,
}

/// Threshold in force from `t` on (set at an exploitation period start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub t: f64,
    pub y_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    #[serde(rename = "S_t")]
    pub s_t: f64,
}

/// One uncontrolled exploration segment; `start..end` indexes the
/// exploration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSegment {
    pub t_start: f64,
    pub t_hit_beta: Option<f64>,
    pub t_end: f64,
    pub start: usize,
    pub end: usize,
    /// False when the horizon cut the segment short.
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Threshold,
    DataDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub strategy: StrategyKind,
    pub model: DiffusionModel,
    pub reward: RewardSpec,
    pub schedule: Option<ExplorationSchedule>,
    pub estimator: Option<EstimatorConfig>,
    pub y_cut: Option<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlledRun {
    pub run_meta: RunMeta,
    pub interventions: Vec<Intervention>,
    pub threshold_history: Vec<ThresholdRecord>,
    pub exploration_checkpoints: Vec<Checkpoint>,
    pub exploration_segments: Vec<ExplorationSegment>,
    pub total_time: f64,
    pub exploration_time: f64,
    /// Concatenated exploration record `X'` (not serialized).
    #[serde(skip)]
    pub exploration_record: Vec<f64>,
}

impl ControlledRun {
    pub fn total_reward(&self) -> f64 {
        self.interventions.iter().map(|i| i.reward).sum()
    }

    /// `S_T / T^{2/3}`.
    pub fn final_schedule_ratio(&self) -> f64 {
        self.exploration_time / self.total_time.powf(ExplorationSchedule::EXPONENT)
    }

    /// Largest `S_t / t^{2/3}` over checkpoints with `t >= t_min`.
    pub fn max_schedule_ratio(&self, t_min: f64) -> Option<f64> {
        self.exploration_checkpoints
            .iter()
            .filter(|c| c.t >= t_min && c.t > 0.0)
            .map(|c| c.s_t / c.t.powf(ExplorationSchedule::EXPONENT))
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// Interventions ordered in time with pre-impulse states at or above
    /// `y0`; exploration clock nondecreasing and at most `t`.
    pub fn check_admissible(&self) -> Result<()> {
        let y0 = self.run_meta.reward.y0;
        let fail = |m: String| Err(Error::Experiment(format!("admissibility: {m}")));
        for w in self.interventions.windows(2) {
            if w[1].t < w[0].t {
                return fail(format!("interventions out of order at t = {}", w[1].t));
            }
        }
        if let Some(i) = self.interventions.iter().find(|i| i.x_pre < y0) {
            return fail(format!("pre-impulse state {} below y0 at t = {}", i.x_pre, i.t));
        }
        for w in self.exploration_checkpoints.windows(2) {
            if w[1].s_t < w[0].s_t || w[1].t < w[0].t {
                return fail(format!("exploration clock decreases at t = {}", w[1].t));
            }
        }
        if let Some(c) = self.exploration_checkpoints.iter().find(|c| c.s_t > c.t + 1e-9) {
            return fail(format!("S_t = {} exceeds t = {}", c.s_t, c.t));
        }
        Ok(())
    }

    /// Every exploitation harvest happens at or above the threshold set at
    /// its period start. In data-driven runs each exploitation period ends
    /// with its (single) harvest.
    pub fn check_threshold_freezing(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Experiment(format!("threshold freezing: {m}")));
        let hist = &self.threshold_history;
        let single = self.run_meta.strategy == StrategyKind::DataDriven;
        let mut last_period: Option<usize> = None;
        for i in self.interventions.iter().filter(|i| i.kind == PeriodKind::Exploitation) {
            // a harvest takes at least one step, so its period started strictly earlier
            let k = hist.partition_point(|r| r.t < i.t);
            if k == 0 {
                return fail(format!("harvest at t = {} before any threshold was set", i.t));
            }
            if i.x_pre < hist[k - 1].y_hat {
                return fail(format!("harvest at {} below frozen threshold {}", i.x_pre, hist[k - 1].y_hat));
            }
            if single && last_period == Some(k - 1) {
                return fail(format!("two harvests in the period starting at t = {}", hist[k - 1].t));
            }
            last_period = Some(k - 1);
        }
        Ok(())
    }

    /// Each segment of `X'` starts at `y0`, reaches `beta` and (when
    /// complete) ends at `y0`, and the segments tile the record.
    pub fn check_exploration_record(&self) -> Result<()> {
        let r = &self.run_meta.reward;
        let rec = &self.exploration_record;
        let fail = |m: String| Err(Error::Experiment(format!("exploration record: {m}")));
        let mut expected_start = 0;
        for s in &self.exploration_segments {
            if s.start != expected_start || s.end < s.start || s.end >= rec.len().max(1) {
                return fail(format!("segment at t = {} does not tile the record", s.t_start));
            }
            let seg = &rec[s.start..=s.end];
            if seg[0] != r.y0 {
                return fail(format!("segment at t = {} starts at {}", s.t_start, seg[0]));
            }
            let hit = seg.iter().position(|&x| x >= r.beta);
            if s.complete {
                let Some(h) = hit else {
                    return fail(format!("complete segment at t = {} never reached beta", s.t_start));
                };
                if seg[seg.len() - 1] != r.y0 || seg[h..seg.len() - 1].iter().any(|&x| x <= r.y0) {
                    return fail(format!("segment at t = {} does not end at its first return to y0", s.t_start));
                }
            }
            expected_start = s.end;
        }
        Ok(())
    }
}

/// `(sum of rewards) / T`.
pub fn average_reward(run: &ControlledRun) -> f64 {
    if run.total_time > 0.0 {
        run.total_reward() / run.total_time
    } else {
        0.0
    }
}

/// `Phi(b) - average_reward(run)`.
pub fn regret(model: &DiffusionModel, reward: &RewardSpec, run: &ControlledRun) -> Result<f64> {
    let phi = solve_oracle(model, reward, DEFAULT_GRID_N)?.phi;
    Ok(phi - average_reward(run))
}

fn check_horizon(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt <= horizon) {
        return Err(Error::Domain(format!("time step must lie in (0, T], got {dt}")));
    }
    Ok(step_count(horizon, dt))
}

/// Harvest whenever the discretely observed state reaches `y_cut`.
pub fn run_threshold_strategy(
    model: &DiffusionModel,
    reward: &RewardSpec,
    strategy: ThresholdStrategy,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<ControlledRun> {
    reward.validate()?;
    let ThresholdStrategy { y_cut } = ThresholdStrategy::new(strategy.y_cut, reward)?;
    let n = check_horizon(horizon, dt)?;
    let mut stepper = EulerStepper::new(model, dt, seed);
    let mut interventions = Vec::new();
    let mut x = reward.y0;
    for k in 1..=n {
        x = stepper.step(x);
        if !x.is_finite() {
            return Err(Error::BlowUp { last_finite: k - 1 });
        }
        if x >= y_cut {
            interventions.push(Intervention {
                t: dt * k as f64,
                x_pre: x,
                reward: reward.eval(x),
                kind: PeriodKind::Exploitation,
            });
            x = reward.y0;
        }
    }
    let total_time = dt * n as f64;
    Ok(ControlledRun {
        run_meta: RunMeta {
            strategy: StrategyKind::Threshold,
            model: model.clone(),
            reward: reward.clone(),
            schedule: None,
            estimator: None,
            y_cut: Some(y_cut),
            horizon,
            dt,
            seed,
        },
        interventions,
        threshold_history: vec![ThresholdRecord { t: 0.0, y_hat: y_cut }],
        exploration_checkpoints: vec![Checkpoint { t: 0.0, s_t: 0.0 }, Checkpoint { t: total_time, s_t: 0.0 }],
        exploration_segments: Vec::new(),
        total_time,
        exploration_time: 0.0,
        exploration_record: Vec::new(),
    })
}

/// Options of the data-driven strategy beyond the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDrivenConfig {
    pub schedule: ExplorationSchedule,
    pub estimator: EstimatorConfig,
    /// Simulated-time cap on a single exploration segment; `None` uses
    /// `DEFAULT_RUNAWAY_FACTOR * M2`.
    pub runaway_cap: Option<f64>,
}

impl DataDrivenConfig {
    pub fn new(m: f64) -> Result<Self> {
        Ok(DataDrivenConfig {
            schedule: ExplorationSchedule::new(m, 1)?,
            estimator: EstimatorConfig::default(),
            runaway_cap: None,
        })
    }
}

struct Clock {
    k: usize,
    n: usize,
    dt: f64,
}

impl Clock {
    fn t(&self) -> f64 {
        self.dt * self.k as f64
    }

    fn done(&self) -> bool {
        self.k >= self.n
    }
}

/// The exploration/exploitation strategy.
pub fn run_data_driven(
    model: &DiffusionModel,
    reward: &RewardSpec,
    cfg: &DataDrivenConfig,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<ControlledRun> {
    reward.validate()?;
    cfg.estimator.validate()?;
    let schedule = ExplorationSchedule::new(cfg.schedule.m, cfg.schedule.initial_explorations)?;
    let n = check_horizon(horizon, dt)?;
    let cap = cfg.runaway_cap.unwrap_or(DEFAULT_RUNAWAY_FACTOR * reward.m2);
    let cap_steps = step_count(cap, dt).max(1);
    let (y0, beta) = (reward.y0, reward.beta);

    let mut stepper = EulerStepper::new(model, dt, seed);
    let mut clock = Clock { k: 0, n, dt };
    let mut interventions = Vec::new();
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();
    let mut segments: Vec<ExplorationSegment> = Vec::new();
    let mut record: Vec<f64> = Vec::new();
    let mut explored_steps = 0usize;
    let mut occ: Option<Occupation> = None;
    // number of record states already in `occ`
    let mut occ_len = 0usize;
    let mut y_hat = f64::NAN;
    let mut periods = 0usize;
    let mut x = y0;

    while !clock.done() {
        let t = clock.t();
        let s_t = dt * explored_steps as f64;
        checkpoints.push(Checkpoint { t, s_t });
        let explore = periods < schedule.initial_explorations || record.is_empty() || s_t < schedule.target(t);
        periods += 1;
        if explore {
            // the controlled state is at y0 at every period boundary
            let start = if record.is_empty() { 0 } else { record.len() - 1 };
            if record.is_empty() {
                record.push(y0);
            }
            let mut hit_beta = None;
            let mut complete = false;
            let mut seg_steps = 0usize;
            while !clock.done() {
                x = stepper.step(x);
                clock.k += 1;
                seg_steps += 1;
                explored_steps += 1;
                if !x.is_finite() {
                    return Err(Error::BlowUp { last_finite: clock.k - 1 });
                }
                if hit_beta.is_none() {
                    if x >= beta {
                        hit_beta = Some(clock.t());
                    }
                } else if x <= y0 {
                    x = y0;
                    record.push(x);
                    complete = true;
                    break;
                }
                record.push(x);
                if seg_steps >= cap_steps {
                    return Err(Error::RunawayExploration { t_start: t, elapsed: dt * seg_steps as f64 });
                }
            }
            segments.push(ExplorationSegment {
                t_start: t,
                t_hit_beta: hit_beta,
                t_end: clock.t(),
                start,
                end: record.len() - 1,
                complete,
            });
            if complete {
                interventions.push(Intervention { t: clock.t(), x_pre: y0, reward: 0.0, kind: PeriodKind::Exploration });
            }
        } else {
            // left endpoints of X' seen so far: all but the last state
            let usable = record.len() - 1;
            if occ.is_none() || occ_len < usable {
                match occ.as_mut() {
                    Some(o) => o.extend(&record[occ_len..usable]),
                    None => occ = Some(Occupation::from_states(&record[..usable], dt)?),
                }
                occ_len = usable;
                let est = estimate_from_occupation(occ.as_ref().expect("built above"), model, reward, &cfg.estimator)?;
                y_hat = est.y_hat;
            }
            history.push(ThresholdRecord { t, y_hat });
            while !clock.done() {
                x = stepper.step(x);
                clock.k += 1;
                if !x.is_finite() {
                    return Err(Error::BlowUp { last_finite: clock.k - 1 });
                }
                if x >= y_hat {
                    interventions.push(Intervention {
                        t: clock.t(),
                        x_pre: x,
                        reward: reward.eval(x),
                        kind: PeriodKind::Exploitation,
                    });
                    x = y0;
                    break;
                }
            }
        }
    }
    let total_time = clock.t();
    let exploration_time = dt * explored_steps as f64;
    if checkpoints.last().map(|c| c.t) != Some(total_time) {
        checkpoints.push(Checkpoint { t: total_time, s_t: exploration_time });
    }
    Ok(ControlledRun {
        run_meta: RunMeta {
            strategy: StrategyKind::DataDriven,
            model: model.clone(),
            reward: reward.clone(),
            schedule: Some(schedule),
            estimator: Some(cfg.estimator.clone()),
            y_cut: None,
            horizon,
            dt,
            seed,
        },
        interventions,
        threshold_history: history,
        exploration_checkpoints: checkpoints,
        exploration_segments: segments,
        total_time,
        exploration_time,
        exploration_record: record,
    })
}
