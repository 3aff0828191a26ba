//! `impulse`: command-line front end.
//!
//! stdout carries `key=value` lines for scripting. Failures print one line
//! `error code=<n> kind=<kind> message=<json string>` on stderr and exit with
//! 1 (usage or file format), 2 (model/reward/parameter validation) or 3
//! (simulation, quadrature or experiment failure).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use impulse_core::bench::{run_experiment, ExperimentPlan, Pipeline};
use impulse_core::catalog;
use impulse_core::control::{
    average_reward, run_data_driven, run_threshold_strategy, ControlledRun, DataDrivenConfig, ExplorationSchedule,
    ThresholdStrategy,
};
use impulse_core::diffusion::{simulate_path, InnerLimit, SamplePath, DEFAULT_DT};
use impulse_core::estimation::{
    density_from_config, estimate_threshold, profile_rows, write_profile_csv, xi_from_density, BandwidthRule,
    DensityKind, EstimatorConfig, KernelSpec, Occupation,
};
use impulse_core::problem::{OracleContext, Problem, DEFAULT_GRID_N};
use impulse_core::quad::uniform_grid;
use impulse_core::rng::{derive_seed, rng_from_seed};
use impulse_core::{Error, Result};

/// Environment variable holding the default worker-thread count.
const THREADS_ENV: &str = "IMPULSE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "impulse", version, about = "Ergodic harvesting impulse control on scalar diffusions")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads for parallel sweeps.
    #[arg(long, env = THREADS_ENV, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full-information solution: Phi(b), y* and the g/xi profile.
    Solve(SolveArgs),
    /// Simulate an uncontrolled path.
    Simulate(SimulateArgs),
    /// Estimate density, xi and the threshold from a recorded path.
    Estimate(EstimateArgs),
    /// Run a controlled strategy.
    Control(ControlArgs),
    /// Run an experiment plan.
    Bench(BenchArgs),
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn grid_size(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        Ok(v) => Err(format!("must be at least 2, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Debug, Clone)]
struct ProblemArg {
    /// Problem file (TOML) or `catalog:<name>`.
    #[arg(long)]
    problem: String,
}

impl ProblemArg {
    fn load(&self) -> Result<Problem> {
        match self.problem.strip_prefix("catalog:") {
            Some(name) => catalog::by_name(name),
            None => Problem::load(Path::new(&self.problem)),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct EstimatorArgs {
    /// Density floor a.
    #[arg(long, value_parser = positive_f64)]
    a: Option<f64>,
    /// Lower cap M1 on the plug-in xi.
    #[arg(long = "M1", value_parser = positive_f64)]
    m1: Option<f64>,
    #[arg(long, value_parser = grid_size)]
    grid_n: Option<usize>,
    /// Bandwidth rule: inv_sqrt, scaled:<c> or fixed:<h>.
    #[arg(long)]
    h_rule: Option<String>,
    /// epanechnikov or order3.
    #[arg(long)]
    kernel: Option<String>,
    /// Use the local-time density estimator instead of the kernel one.
    #[arg(long)]
    local_time: bool,
    /// Inner limit of the plug-in integral: minus-infinity or base-level.
    #[arg(long)]
    inner: Option<String>,
}

impl EstimatorArgs {
    fn config(&self) -> Result<EstimatorConfig> {
        let mut cfg = EstimatorConfig::default();
        if let Some(a) = self.a {
            cfg.a = a;
        }
        cfg.m1 = self.m1;
        if let Some(n) = self.grid_n {
            cfg.grid_n = n;
        }
        if let Some(rule) = &self.h_rule {
            cfg.bandwidth = BandwidthRule::parse(rule)?;
        }
        if let Some(k) = &self.kernel {
            cfg.kernel = KernelSpec::by_name(k)?;
        }
        if self.local_time {
            cfg.density = DensityKind::LocalTime;
        }
        if let Some(inner) = &self.inner {
            cfg.inner = match inner.as_str() {
                "minus-infinity" => InnerLimit::MinusInfinity,
                "base-level" => InnerLimit::BaseLevel,
                other => return Err(Error::Format(format!("unknown inner limit `{other}`"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArg,
    #[arg(long, value_parser = grid_size, default_value_t = DEFAULT_GRID_N)]
    grid_n: usize,
    /// Profile CSV (columns y,g,xi,g_over_xi).
    #[arg(long, default_value = "profile.csv")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    problem: ProblemArg,
    #[arg(long = "T", value_parser = positive_f64, allow_negative_numbers = true)]
    horizon: f64,
    #[arg(long, value_parser = positive_f64, default_value_t = DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start state (default y0).
    #[arg(long, allow_negative_numbers = true, conflicts_with = "stationary")]
    x0: Option<f64>,
    /// Draw the start state from the invariant law.
    #[arg(long)]
    stationary: bool,
    /// Output path; `.csv` selects CSV, anything else the binary format.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    problem: ProblemArg,
    /// Recorded path (binary or `.csv`).
    #[arg(long)]
    path: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Table CSV (columns x,rho_hat,xi_hat,g_over_xi).
    #[arg(long, default_value = "estimate.csv")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ControlArgs {
    #[command(flatten)]
    problem: ProblemArg,
    #[arg(long = "T", value_parser = positive_f64, allow_negative_numbers = true)]
    horizon: f64,
    #[arg(long, value_parser = positive_f64, default_value_t = DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// data-driven, threshold (needs --y-cut) or oracle (threshold at y*).
    #[arg(long, default_value = "data-driven")]
    strategy: String,
    #[arg(long)]
    y_cut: Option<f64>,
    /// Exploration budget constant m.
    #[arg(long, value_parser = positive_f64)]
    m: Option<f64>,
    #[arg(long, default_value_t = 1)]
    initial_explorations: usize,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// ControlledRun JSON.
    #[arg(long, default_value = "run.json")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Experiment plan (TOML). Without it, --problem and --pipeline build one.
    #[arg(long, conflicts_with_all = ["problem", "pipeline"])]
    plan: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// density_risk, threshold_regret, strategy_regret or oracle_check.
    #[arg(long)]
    pipeline: Option<String>,
    /// Comma-separated horizons.
    #[arg(long, value_delimiter = ',', value_parser = positive_f64)]
    horizons: Option<Vec<f64>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = positive_f64)]
    dt: Option<f64>,
    #[arg(long, value_parser = positive_f64)]
    m: Option<f64>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Report prefix (`.json`, `.csv`, `_records.csv` are appended).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn json_line<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

fn solve(args: &SolveArgs) -> Result<()> {
    let problem = args.problem.load()?;
    let oracle = OracleContext::new(&problem.model)?;
    let sol = oracle.solve(&problem.reward, args.grid_n)?;
    let table = oracle.xi_table(&problem.reward)?;
    let mut w = create(&args.output)?;
    writeln!(w, "# {}", json_line(&problem))?;
    writeln!(w, "y,g,xi,g_over_xi")?;
    for &(y, rate) in &sol.profile {
        writeln!(w, "{},{},{},{}", y, problem.reward.eval(y), table.xi(y)?, rate)?;
    }
    w.flush()?;
    println!("phi={} y_star={}", sol.phi, sol.y_star);
    println!("M1={} M2={} grid_n={}", problem.reward.m1, problem.reward.m2, args.grid_n);
    println!("profile={}", args.output.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let problem = args.problem.load()?;
    problem.model.ensure_in_class()?;
    let x0 = if args.stationary {
        let oracle = OracleContext::new(&problem.model)?;
        oracle.density.sample_stationary(&mut rng_from_seed(derive_seed(args.seed, u64::MAX)))
    } else {
        args.x0.unwrap_or(problem.reward.y0)
    };
    let path = simulate_path(&problem.model, x0, args.horizon, args.dt, args.seed)?;
    let is_csv = args.output.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut w = create(&args.output)?;
        writeln!(w, "# {}", json_line(&problem))?;
        path.write_csv(&mut w)?;
        w.flush()?;
    } else {
        path.save(&args.output)?;
        let mut meta = args.output.as_os_str().to_owned();
        meta.push(".meta.toml");
        fs::write(PathBuf::from(meta), problem.to_toml_string())?;
    }
    println!("states={} duration={} x0={} seed={}", path.len(), path.duration(), x0, args.seed);
    println!("output={}", args.output.display());
    Ok(())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let problem = args.problem.load()?;
    let cfg = args.estimator.config()?;
    let path = SamplePath::load(&args.path)?;
    let occ = Occupation::from_path(&path)?;
    let density = density_from_config(&occ, &problem.model, &cfg)?;
    let summary = density.summary();
    let xi = xi_from_density(&density, summary.resolution, &problem.model, &problem.reward, &cfg)?;
    let (y_hat, value_hat) = estimate_threshold(&xi, &problem.reward, cfg.grid_n)?;
    let r = &problem.reward;
    let rows = profile_rows(&density, &xi, r, &uniform_grid(r.y0, r.beta, cfg.grid_n));
    let mut w = create(&args.output)?;
    writeln!(w, "# {}", json_line(&(&problem, &cfg, &summary)))?;
    write_profile_csv(&mut w, &rows)?;
    w.flush()?;
    println!("y_hat={y_hat} value_hat={value_hat} T={} resolution={}", summary.duration, summary.resolution);
    let oracle = OracleContext::new(&problem.model)?;
    let sol = oracle.solve(r, cfg.grid_n)?;
    let rate = oracle.rate_of_threshold(r, y_hat)?;
    println!("phi={} y_star={} rate={} regret={}", sol.phi, sol.y_star, rate, sol.phi - rate);
    println!("output={}", args.output.display());
    Ok(())
}

fn control(args: &ControlArgs) -> Result<()> {
    let problem = args.problem.load()?;
    let (model, reward) = (&problem.model, &problem.reward);
    let cfg = args.estimator.config()?;
    let oracle = OracleContext::new(model)?;
    let sol = oracle.solve(reward, cfg.grid_n)?;
    let run: ControlledRun = match args.strategy.as_str() {
        "data-driven" => {
            let dd = DataDrivenConfig {
                schedule: ExplorationSchedule::new(args.m.unwrap_or(problem.m), args.initial_explorations)?,
                estimator: cfg,
                runaway_cap: None,
            };
            run_data_driven(model, reward, &dd, args.horizon, args.dt, args.seed)?
        }
        "threshold" => {
            let y = args.y_cut.ok_or_else(|| Error::Format("--strategy threshold needs --y-cut".into()))?;
            run_threshold_strategy(model, reward, ThresholdStrategy::new(y, reward)?, args.horizon, args.dt, args.seed)?
        }
        "oracle" => {
            let s = ThresholdStrategy::new(sol.y_star, reward)?;
            run_threshold_strategy(model, reward, s, args.horizon, args.dt, args.seed)?
        }
        other => return Err(Error::Format(format!("unknown strategy `{other}`"))),
    };
    let mut w = create(&args.output)?;
    serde_json::to_writer_pretty(&mut w, &run).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    let rate = average_reward(&run);
    println!(
        "rate={} regret={} phi={} interventions={} S_T={} T={}",
        rate,
        sol.phi - rate,
        sol.phi,
        run.interventions.len(),
        run.exploration_time,
        run.total_time
    );
    println!("output={}", args.output.display());
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let mut plan = match (&args.plan, &args.problem, &args.pipeline) {
        (Some(p), _, _) => ExperimentPlan::load(p)?,
        (None, Some(problem), Some(pipeline)) => ExperimentPlan::new(problem.clone(), Pipeline::parse(pipeline)?, 0),
        _ => return Err(Error::Format("bench needs --plan, or --problem and --pipeline".into())),
    };
    if let Some(h) = &args.horizons {
        plan.horizons = h.clone();
    }
    if let Some(r) = args.replications {
        plan.replications = r;
    }
    if let Some(s) = args.seed {
        plan.master_seed = s;
    }
    if let Some(dt) = args.dt {
        plan.dt = dt;
    }
    if args.m.is_some() {
        plan.m = args.m;
    }
    let e = &args.estimator;
    if e.a.is_some() {
        plan.a = e.a;
    }
    if e.m1.is_some() {
        plan.m1 = e.m1;
    }
    if e.grid_n.is_some() {
        plan.grid_n = e.grid_n;
    }
    if e.h_rule.is_some() {
        plan.bandwidth = e.h_rule.clone();
    }
    if e.kernel.is_some() {
        plan.kernel = e.kernel.clone();
    }
    if e.inner.is_some() {
        plan.inner = Some(e.config()?.inner);
    }
    if args.output.is_some() {
        plan.output = args.output.clone();
    }
    let report = run_experiment(&plan)?;
    for h in &report.horizons {
        println!("T={} mean_loss={} se={} n={} failed={}", h.horizon, h.mean_loss, h.se, h.n, h.failed);
    }
    match &report.fit {
        Some(f) => println!("slope={} intercept={} ci_low={} ci_high={}", f.slope, f.intercept, f.ci_low, f.ci_high),
        None => println!("slope=nan fit_error={}", json_line(&report.fit_error)),
    }
    if let Some(out) = &plan.output {
        println!("output={}", out.display());
    }
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Format(format!("{THREADS_ENV} / --threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Control(a) => control(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help / --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            eprintln!("error code=1 kind=usage message={}", json_line(&first));
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error code={code} kind={} message={}", e.kind(), json_line(&e.to_string()));
            ExitCode::from(code as u8)
        }
    }
}
