//! Replicated horizon sweeps and log-log rate fits.
//!
//! Every `(horizon, replication)` cell gets its own seed derived from the
//! master seed and the cell index, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::control::{average_reward, run_data_driven, run_threshold_strategy, DataDrivenConfig, ThresholdStrategy};
use crate::diffusion::{simulate_path, InnerLimit, DEFAULT_DT};
use crate::estimation::{
    estimate_from_occupation, BandwidthRule, Density, DensityEstimate, EstimatorConfig, KernelSpec, Occupation,
    DEFAULT_DENSITY_FLOOR,
};
use crate::problem::{OracleContext, OracleSolution, Problem, DEFAULT_GRID_N};
use crate::quad::simpson;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{ols, student_t_quantile, Summary};
use crate::{Error, Result};

/// Fraction of failed cells above which the whole experiment fails.
pub const MAX_FAILED_FRACTION: f64 = 0.10;

/// Confidence level of the reported slope interval.
pub const SLOPE_CI_LEVEL: f64 = 0.95;

/// Panels for the L1 distance on the risk window.
const L1_PANELS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// L1 distance of the kernel estimate to the invariant density.
    DensityRisk,
    /// `Phi(b) - (g / xi_b)(y_hat_T)` for the threshold estimated from a
    /// stationary path of length `T`.
    ThresholdRegret,
    /// `Phi(b)` minus the average reward of a data-driven run.
    StrategyRegret,
    /// `|average reward - Phi(b)|` of the threshold run at `y*`.
    OracleCheck,
}

impl Pipeline {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "density_risk" => Ok(Pipeline::DensityRisk),
            "threshold_regret" => Ok(Pipeline::ThresholdRegret),
            "strategy_regret" => Ok(Pipeline::StrategyRegret),
            "oracle_check" => Ok(Pipeline::OracleCheck),
            other => Err(Error::Format(format!("unknown pipeline `{other}`"))),
        }
    }

    /// Desk-scale horizons.
    pub fn default_horizons(self) -> Vec<f64> {
        match self {
            Pipeline::DensityRisk => vec![400.0, 1600.0, 6400.0],
            Pipeline::ThresholdRegret => vec![250.0, 1000.0, 4000.0],
            Pipeline::StrategyRegret => vec![2500.0, 10_000.0, 40_000.0],
            Pipeline::OracleCheck => vec![1000.0, 4000.0, 16_000.0],
        }
    }

    pub fn default_replications(self) -> usize {
        match self {
            Pipeline::DensityRisk | Pipeline::ThresholdRegret => 50,
            Pipeline::StrategyRegret => 30,
            Pipeline::OracleCheck => 20,
        }
    }
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_window() -> [f64; 2] {
    [-2.0, 2.0]
}

/// An experiment: one pipeline over a horizon grid.
///
/// `problem` is a problem-file path or `catalog:<name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub problem: String,
    pub pipeline: Pipeline,
    pub horizons: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Report path prefix: writes `<output>.json`, `<output>.csv` and
    /// `<output>_records.csv`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub bandwidth: Option<String>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(rename = "M1", default)]
    pub m1: Option<f64>,
    #[serde(default)]
    pub grid_n: Option<usize>,
    #[serde(default)]
    pub inner: Option<InnerLimit>,
    #[serde(default)]
    pub m: Option<f64>,
    /// Interval on which the density L1 risk is measured.
    #[serde(default = "default_window")]
    pub l1_window: [f64; 2],
}

impl ExperimentPlan {
    /// Plan with the pipeline's desk-scale defaults.
    pub fn new(problem: impl Into<String>, pipeline: Pipeline, master_seed: u64) -> Self {
        ExperimentPlan {
            problem: problem.into(),
            pipeline,
            horizons: pipeline.default_horizons(),
            replications: pipeline.default_replications(),
            master_seed,
            dt: DEFAULT_DT,
            output: None,
            kernel: None,
            bandwidth: None,
            a: None,
            m1: None,
            grid_n: None,
            inner: None,
            m: None,
            l1_window: default_window(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Format(format!("experiment plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Load a plan; a relative problem path is resolved against the plan's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut plan = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if !plan.problem.starts_with("catalog:") && Path::new(&plan.problem).is_relative() {
            if let Some(dir) = path.parent() {
                plan.problem = dir.join(&plan.problem).to_string_lossy().into_owned();
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Domain("horizons must be positive and finite".into()));
        }
        if self.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("horizons must be strictly increasing".into()));
        }
        if self.replications < 2 {
            return Err(Error::Domain(format!("need at least 2 replications, got {}", self.replications)));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizons[0]) {
            return Err(Error::Domain(format!("time step {} must lie in (0, min T]", self.dt)));
        }
        if !(self.l1_window[0] < self.l1_window[1]) {
            return Err(Error::Domain("l1_window must be an increasing pair".into()));
        }
        self.estimator_config()?.validate()
    }

    pub fn load_problem(&self) -> Result<Problem> {
        match self.problem.strip_prefix("catalog:") {
            Some(name) => catalog::by_name(name),
            None => Problem::load(Path::new(&self.problem)),
        }
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        let kernel = match &self.kernel {
            Some(k) => KernelSpec::by_name(k)?,
            None => KernelSpec::epanechnikov(),
        };
        let bandwidth = match &self.bandwidth {
            Some(b) => BandwidthRule::parse(b)?,
            None => BandwidthRule::InvSqrt,
        };
        Ok(EstimatorConfig {
            kernel,
            bandwidth,
            a: self.a.unwrap_or(DEFAULT_DENSITY_FLOOR),
            m1: self.m1,
            grid_n: self.grid_n.unwrap_or(DEFAULT_GRID_N),
            inner: self.inner.unwrap_or_default(),
            ..EstimatorConfig::default()
        })
    }
}

/// Outcome of one `(horizon, replication)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub horizon: f64,
    pub replication: usize,
    pub seed: u64,
    pub loss: Option<f64>,
    pub error: Option<String>,
    /// Pipeline-specific side measurements.
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub mean_loss: f64,
    pub se: f64,
    pub n: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    /// Abscissae dropped because their loss was not positive.
    pub dropped: Vec<f64>,
}

/// OLS of `ln loss` on `ln T` over the points with positive loss.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let mut dropped = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, loss) in points {
        if loss > 0.0 && loss.is_finite() && t > 0.0 {
            xs.push(t.ln());
            ys.push(loss.ln());
        } else {
            dropped.push(t);
        }
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points with positive loss, got {}", xs.len())));
    }
    let f = ols(&xs, &ys)?;
    let half = student_t_quantile(0.5 + SLOPE_CI_LEVEL / 2.0, (xs.len() - 2) as f64) * f.slope_se;
    Ok(LogLogFit {
        slope: f.slope,
        intercept: f.intercept,
        slope_se: f.slope_se,
        ci_low: f.slope - half,
        ci_high: f.slope + half,
        level: SLOPE_CI_LEVEL,
        dropped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub plan: ExperimentPlan,
    pub problem: Problem,
    pub estimator: EstimatorConfig,
    pub phi: f64,
    pub y_star: f64,
    pub horizons: Vec<HorizonSummary>,
    pub fit: Option<LogLogFit>,
    pub fit_error: Option<String>,
    pub records: Vec<CellRecord>,
}

impl RateReport {
    /// Mean losses decrease in `T`, allowing one increase within one
    /// standard error.
    pub fn is_monotone(&self) -> bool {
        let mut inversions = 0;
        for w in self.horizons.windows(2) {
            if w[1].mean_loss > w[0].mean_loss {
                if w[1].mean_loss - w[0].mean_loss > w[0].se.max(w[1].se) {
                    return false;
                }
                inversions += 1;
            }
        }
        inversions <= 1
    }

    /// A side measurement over all successful cells.
    pub fn extras(&self, key: &str) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.extra.get(key).copied()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `# {plan, estimator}` as one JSON line.
    fn config_comment(&self) -> String {
        let cfg = serde_json::json!({ "plan": self.plan, "estimator": self.estimator });
        format!("# {cfg}")
    }

    /// Config comment line, then columns `T,mean_loss,se,n`.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.config_comment())?;
        writeln!(w, "T,mean_loss,se,n")?;
        for h in &self.horizons {
            writeln!(w, "{},{},{},{}", h.horizon, h.mean_loss, h.se, h.n)?;
        }
        Ok(())
    }

    /// One row per cell: `T,replication,seed,loss`; failed cells have an
    /// empty loss.
    pub fn write_records_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.config_comment())?;
        writeln!(w, "T,replication,seed,loss")?;
        for r in &self.records {
            let loss = r.loss.map(|l| l.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.horizon, r.replication, r.seed, loss)?;
        }
        Ok(())
    }

    pub fn write_to(&self, prefix: &Path) -> Result<()> {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        std::fs::write(with(".json"), self.to_json())?;
        self.write_summary_csv(std::io::BufWriter::new(std::fs::File::create(with(".csv"))?))?;
        self.write_records_csv(std::io::BufWriter::new(std::fs::File::create(with("_records.csv"))?))?;
        Ok(())
    }
}

struct Context<'a> {
    plan: &'a ExperimentPlan,
    problem: &'a Problem,
    oracle: &'a OracleContext,
    solution: &'a OracleSolution,
    estimator: &'a EstimatorConfig,
}

impl Context<'_> {
    fn stationary_start(&self, seed: u64) -> f64 {
        let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
        self.oracle.density.sample_stationary(&mut rng)
    }

    /// `g / xi_b` at a threshold, read off the oracle profile when it is a
    /// grid point so that the loss is exactly zero at `y*`.
    fn rate_at(&self, y: f64) -> Result<f64> {
        match self.solution.profile.iter().find(|(g, _)| *g == y) {
            Some(&(_, r)) => Ok(r),
            None => self.oracle.rate_of_threshold(&self.problem.reward, y),
        }
    }

    fn cell(&self, horizon: f64, seed: u64) -> Result<(f64, BTreeMap<String, f64>)> {
        let model = &self.problem.model;
        let reward = &self.problem.reward;
        let dt = self.plan.dt;
        let mut extra = BTreeMap::new();
        let loss = match self.plan.pipeline {
            Pipeline::DensityRisk => {
                let path = simulate_path(model, self.stationary_start(seed), horizon, dt, seed)?;
                let occ = Occupation::from_path(&path)?;
                let h = self.estimator.bandwidth.bandwidth(occ.duration());
                let est = DensityEstimate::kernel(&occ, self.estimator.kernel.clone(), h)?;
                let [lo, hi] = self.plan.l1_window;
                extra.insert("bandwidth".into(), h);
                simpson(|x| (est.density(x) - self.oracle.density.density(x)).abs(), lo, hi, L1_PANELS)
            }
            Pipeline::ThresholdRegret => {
                let path = simulate_path(model, self.stationary_start(seed), horizon, dt, seed)?;
                let occ = Occupation::from_path(&path)?;
                let est = estimate_from_occupation(&occ, model, reward, self.estimator)?;
                extra.insert("y_hat".into(), est.y_hat);
                extra.insert("value_hat".into(), est.value_hat);
                self.solution.phi - self.rate_at(est.y_hat)?
            }
            Pipeline::StrategyRegret => {
                let mut cfg = DataDrivenConfig::new(self.plan.m.unwrap_or(self.problem.m))?;
                cfg.estimator = self.estimator.clone();
                let run = run_data_driven(model, reward, &cfg, horizon, dt, seed)?;
                extra.insert("schedule_ratio".into(), run.final_schedule_ratio());
                extra.insert("exploration_fraction".into(), run.exploration_time / run.total_time);
                extra.insert("average_reward".into(), average_reward(&run));
                self.solution.phi - average_reward(&run)
            }
            Pipeline::OracleCheck => {
                let s = ThresholdStrategy::new(self.solution.y_star, reward)?;
                let run = run_threshold_strategy(model, reward, s, horizon, dt, seed)?;
                extra.insert("average_reward".into(), average_reward(&run));
                (average_reward(&run) - self.solution.phi).abs()
            }
        };
        if !loss.is_finite() {
            return Err(Error::Experiment(format!("non-finite loss at T = {horizon}")));
        }
        Ok((loss, extra))
    }
}

/// Run every cell of the plan, aggregate per horizon and fit the log-log
/// slope. Writes the report files when `plan.output` is set.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<RateReport> {
    plan.validate()?;
    let problem = plan.load_problem()?;
    let estimator = plan.estimator_config()?;
    let oracle = OracleContext::new(&problem.model)?;
    let solution = oracle.solve(&problem.reward, estimator.grid_n)?;
    let ctx = Context { plan, problem: &problem, oracle: &oracle, solution: &solution, estimator: &estimator };

    let cells: Vec<(usize, usize)> =
        (0..plan.horizons.len()).flat_map(|h| (0..plan.replications).map(move |r| (h, r))).collect();
    let records: Vec<CellRecord> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(h, r))| {
            let horizon = plan.horizons[h];
            let seed = derive_seed(plan.master_seed, idx as u64);
            match ctx.cell(horizon, seed) {
                Ok((loss, extra)) => CellRecord { horizon, replication: r, seed, loss: Some(loss), error: None, extra },
                Err(e) => {
                    log::warn!("cell T={horizon} rep={r} failed: {e}");
                    CellRecord {
                        horizon,
                        replication: r,
                        seed,
                        loss: None,
                        error: Some(format!("{}: {e}", e.kind())),
                        extra: BTreeMap::new(),
                    }
                }
            }
        })
        .collect();

    let failed = records.iter().filter(|r| r.loss.is_none()).count();
    if failed as f64 > MAX_FAILED_FRACTION * records.len() as f64 {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::Experiment(format!("{failed} of {} cells failed (first: {first})", records.len())));
    }

    let horizons: Vec<HorizonSummary> = plan
        .horizons
        .iter()
        .map(|&t| {
            let cell: Vec<&CellRecord> = records.iter().filter(|r| r.horizon == t).collect();
            let losses: Vec<f64> = cell.iter().filter_map(|r| r.loss).collect();
            let s = Summary::of(&losses);
            HorizonSummary { horizon: t, mean_loss: s.mean, se: s.se, n: s.n, failed: cell.len() - s.n }
        })
        .collect();
    let points: Vec<(f64, f64)> = horizons.iter().map(|h| (h.horizon, h.mean_loss)).collect();
    let (fit, fit_error) = match fit_loglog_slope(&points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = RateReport {
        plan: plan.clone(),
        problem,
        estimator,
        phi: solution.phi,
        y_star: solution.y_star,
        horizons,
        fit,
        fit_error,
        records,
    };
    if let Some(out) = &plan.output {
        report.write_to(out)?;
    }
    Ok(report)
}
