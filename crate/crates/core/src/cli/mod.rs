//! Batch front end: parse a run configuration, execute one command, write a
//! CSV or JSON report.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    parse_config, Command, ConfigError, Format, GridSection, LevySection, Method, ModelSection, RunConfig,
    RunSection, DEFAULT_PATHS, DEFAULT_SEED,
};

use crate::coeff::{Floors, Param};
use crate::error::Error;
use crate::estimator::{
    combined_difference, convergence_study, default_bump, estimate_greek_fd, estimate_greeks_weighted, path_rng,
    with_workers, EstimatorReport, Experiment, GreekKind,
};
use crate::levy::{LevyFamily, LevyMeasure, OrderExponent};
use crate::oracle::{
    black_scholes, merton_series, Contract, ContractKind, MertonParams, OracleValues, DEFAULT_MERTON_TERMS,
};
use crate::path::{self, band_first_moment, DrivingNoise, Tracking};
use crate::payoff::Payoff;
use crate::tolerances::{ARTIFACT_VERSION, MAX_ABORT_FRACTION};
use crate::weights::{WeightMode, WeightRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ESTIMATOR: i32 = 3;

/// Agreement threshold, in standard errors, for comparison rows.
pub const AGREEMENT_SE: f64 = 3.0;

pub const CSV_HEADER: &str =
    "quantity,mode,estimate,se,ci_lo,ci_hi,n_paths,n_excluded,n_steps,seed,runtime_ms,artifact_version";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliCommand {
    /// Use the command named in the config's `[run]` section.
    Run,
    Validate,
    Simulate,
    Greeks,
    OracleCompare,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "levy-greeks", version, about = "Monte Carlo Greeks for jump-diffusions")]
pub struct Args {
    #[arg(value_enum)]
    pub command: CliCommand,
    /// Run configuration file.
    pub config: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `[run] output`; standard output when neither is set.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `[run] format`.
    #[arg(long, value_enum)]
    pub format: Option<CliFormat>,
}

/// Failure that ends a run, with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::Domain(_) | Error::UnknownParameter(_) | Error::Config(_) => {
                EXIT_CONFIG
            }
            _ => EXIT_ESTIMATOR,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_ESTIMATOR, message: format!("i/o error: {e}") }
    }
}

/// Everything a command needs besides the output streams.
struct Job {
    cfg: RunConfig,
    hash: String,
    seed: u64,
    format: Format,
    out: Option<PathBuf>,
}

impl Job {
    fn trailer(&self) -> String {
        format!("# config_sha256={} seed={} artifact_version={}\n", self.hash, self.seed, ARTIFACT_VERSION)
    }

    fn emit(&self, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
        match &self.out {
            Some(p) => write_file(p, text),
            None => Ok(stdout.write_all(text.as_bytes())?),
        }
    }
}

fn write_file(p: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(p, text).map_err(|e| Failure { code: EXIT_ESTIMATOR, message: format!("cannot write {}: {e}", p.display()) })
}

/// Parses process arguments, runs, and returns the exit code.
pub fn main_from_env() -> i32 {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run(&args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// Executes one invocation, writing reports to `stdout` or the output file
/// and diagnostics to `stderr`.
pub fn run(args: &Args, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match run_inner(args, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn run_inner(args: &Args, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            for e in &errors {
                let _ = writeln!(stderr, "config error: {e}");
            }
            return Err(Failure::config(format!("{} problem(s) in {}", errors.len(), args.config.display())));
        }
    };
    let command = match args.command {
        CliCommand::Run => cfg.run.command.ok_or_else(|| Failure::config("no [run] command given"))?,
        CliCommand::Validate => Command::Validate,
        CliCommand::Simulate => Command::Simulate,
        CliCommand::Greeks => Command::Greeks,
        CliCommand::OracleCompare => Command::OracleCompare,
        CliCommand::Convergence => Command::Convergence,
    };
    let format = match args.format {
        Some(CliFormat::Csv) => Format::Csv,
        Some(CliFormat::Json) => Format::Json,
        None => cfg.run.format(),
    };
    let job = Job {
        hash: cfg.sha256(),
        seed: args.seed.unwrap_or(cfg.run.seed()),
        format,
        out: args.out.clone().or_else(|| cfg.run.output.as_ref().map(PathBuf::from)),
        cfg,
    };
    match command {
        Command::Validate => validate(&job, stdout, stderr),
        Command::Simulate => simulate(&job, stdout, stderr),
        Command::Greeks => greeks(&job, stdout),
        Command::OracleCompare => oracle_compare(&job, stdout),
        Command::Convergence => convergence(&job, stdout),
    }
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Serialize)]
struct CheckRow {
    status: &'static str,
    check: String,
    value: f64,
    floor: f64,
}

fn state_grid(exp: &Experiment) -> Vec<f64> {
    let y0 = exp.initial_state();
    (0..=64).map(|i| y0 - 4.0 + 8.0 * i as f64 / 64.0).collect()
}

fn mark_grid(levy: &LevyMeasure) -> Vec<f64> {
    let (zp, zn) = levy.z_max();
    let lo = levy.truncation();
    let mut zs = Vec::new();
    for (sign, hi) in [(1.0, zp), (-1.0, zn)] {
        let start = if lo > 0.0 { lo } else { hi * 1e-3 };
        for i in 0..=32 {
            zs.push(sign * start * (hi / start).powf(i as f64 / 32.0));
        }
    }
    zs
}

fn validate(job: &Job, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    stdout.write_all(job.cfg.emit().as_bytes())?;
    let exp = job.cfg.experiment()?;
    let mode = job.cfg.run.mode();
    let report = exp.model.validate_assumptions(&state_grid(&exp), &mark_grid(&exp.levy), Floors::default());
    let needed = |name: &str| {
        !matches!(
            (name, mode),
            ("elliptic_diffusion", WeightMode::JumpOnly)
                | ("elliptic_jump" | "invertible_jump_map", WeightMode::DiffusionOnly)
        )
    };
    let mut rows: Vec<CheckRow> = report
        .checks
        .iter()
        .map(|c| CheckRow {
            status: if c.pass { "PASS" } else if needed(c.name) { "FAIL" } else { "SKIP" },
            check: c.name.to_string(),
            value: c.value,
            floor: c.floor,
        })
        .collect();
    let mass = exp.levy.side_mass(1.0) + exp.levy.side_mass(-1.0);
    rows.push(CheckRow {
        status: if mass.is_finite() { "PASS" } else { "FAIL" },
        check: "finite_simulated_intensity".into(),
        value: mass,
        floor: 0.0,
    });
    let below = exp.levy.nu_moment(2.0, crate::levy::Region::Below, false).unwrap_or(0.0);
    rows.push(CheckRow { status: "INFO", check: "small_jump_variance".into(), value: below, floor: 0.0 });
    let alpha = exp.levy.order_exponent_estimate(&LevyMeasure::default_rho_grid())?;
    let (status, value) = match alpha {
        OrderExponent::Estimate(a) => ("PASS", a),
        OrderExponent::Fails if mode == WeightMode::JumpOnly => ("FAIL", 0.0),
        OrderExponent::Fails => ("INFO", 0.0),
    };
    rows.push(CheckRow {
        status,
        check: "order_exponent".into(),
        value,
        floor: crate::tolerances::ORDER_EXPONENT_FLOOR,
    });
    let passed = rows.iter().all(|r| r.status != "FAIL");
    let text = match job.format {
        Format::Csv => {
            let mut s = String::from("status,check,value,floor\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{}\n", r.status, r.check, r.value, r.floor));
            }
            s + &job.trailer()
        }
        Format::Json => json(&serde_json::json!({
            "artifact_version": ARTIFACT_VERSION,
            "config_sha256": job.hash,
            "passed": passed,
            "checks": rows,
        }))?,
    };
    match &job.out {
        Some(p) => write_file(p, &text)?,
        None => stderr.write_all(text.as_bytes())?,
    }
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
struct PathRow {
    path: u64,
    state: f64,
    underlying: f64,
    payoff: f64,
    n_jumps: usize,
}

fn simulate(job: &Job, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let exp = job.cfg.experiment()?;
    let n = job.cfg.run.n_paths();
    let m1 = band_first_moment(&exp.levy)?;
    let x0 = exp.initial_state();
    let tracking = Tracking::default();
    let rows: Vec<Option<PathRow>> = with_workers(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let noise = DrivingNoise::sample(&exp.levy, &exp.grid, &mut path_rng(job.seed, i));
                let p = path::simulate_with_noise(&exp.model, m1, &noise, x0, &tracking).ok()?;
                let state = p.terminal();
                let underlying = if exp.model.is_geometric() { state.exp() } else { state };
                Some(PathRow { path: i, state, underlying, payoff: exp.payoff_value(state), n_jumps: p.jumps.len() })
            })
            .collect()
    });
    let aborted = rows.iter().filter(|r| r.is_none()).count();
    if aborted as f64 > MAX_ABORT_FRACTION * n as f64 {
        return Err(Failure {
            code: EXIT_ESTIMATOR,
            message: format!("{aborted} of {n} paths aborted"),
        });
    }
    let rows: Vec<PathRow> = rows.into_iter().flatten().collect();
    let mean = rows.iter().map(|r| r.payoff).sum::<f64>() / rows.len() as f64;
    let _ = writeln!(stderr, "paths={} aborted={aborted} mean_payoff={mean}", rows.len());
    let text = match job.format {
        Format::Csv => {
            let mut s = String::from("path,state,underlying,payoff,n_jumps\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{},{}\n", r.path, r.state, r.underlying, r.payoff, r.n_jumps));
            }
            s + &job.trailer()
        }
        Format::Json => json(&serde_json::json!({
            "artifact_version": ARTIFACT_VERSION,
            "config_sha256": job.hash,
            "seed": job.seed,
            "n_aborted": aborted,
            "paths": rows,
        }))?,
    };
    job.emit(&text, stdout)?;
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------ greeks

/// Flat report row; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRecord {
    pub quantity: String,
    pub mode: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_paths: usize,
    pub n_excluded: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub runtime_ms: u64,
    pub artifact_version: String,
}

impl From<&EstimatorReport> for ReportRecord {
    fn from(r: &EstimatorReport) -> Self {
        ReportRecord {
            quantity: r.quantity.clone(),
            mode: r.mode.clone(),
            estimate: r.estimate,
            se: r.std_error,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            n_paths: r.n_paths,
            n_excluded: r.n_excluded,
            n_steps: r.n_steps,
            seed: r.seed,
            runtime_ms: r.runtime_ms,
            artifact_version: ARTIFACT_VERSION.to_string(),
        }
    }
}

impl ReportRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.quantity,
            self.mode,
            self.estimate,
            self.se,
            self.ci_lo,
            self.ci_hi,
            self.n_paths,
            self.n_excluded,
            self.n_steps,
            self.seed,
            self.runtime_ms,
            self.artifact_version
        )
    }
}

/// Weight request for `greeks` with the mode, form and kernel from `[run]`.
pub fn weight_request(cfg: &RunConfig, greeks: &[GreekKind]) -> WeightRequest {
    let r = &cfg.run;
    let mut req = WeightRequest::new(r.mode());
    req.form = r.gamma_form();
    req.kernel = r.kernel();
    req.example_forms = r.example_forms();
    for g in greeks {
        match g {
            GreekKind::Delta => req.delta = true,
            GreekKind::Gamma => req.gamma = true,
            GreekKind::Vega(p) if !req.vegas.contains(p) => req.vegas.push(*p),
            GreekKind::Vega(_) => {}
        }
    }
    req
}

/// `[run] greeks`, or delta and gamma when the list is empty.
pub fn requested_greeks(cfg: &RunConfig) -> Vec<GreekKind> {
    if cfg.run.greeks.is_empty() {
        vec![GreekKind::Delta, GreekKind::Gamma]
    } else {
        cfg.run.greeks.clone()
    }
}

fn greeks(job: &Job, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let exp = job.cfg.experiment()?;
    let n = job.cfg.run.n_paths();
    let list = requested_greeks(&job.cfg);
    let reports = match job.cfg.run.method() {
        Method::Weighted => estimate_greeks_weighted(&exp, &weight_request(&job.cfg, &list), n, job.seed)?,
        Method::FiniteDifference => list
            .iter()
            .map(|&g| estimate_greek_fd(&exp, g, default_bump(&exp, g), n, job.seed))
            .collect::<Result<_, _>>()?,
    };
    let records: Vec<ReportRecord> = reports.iter().map(ReportRecord::from).collect();
    let text = match job.format {
        Format::Csv => {
            let mut s = format!("{CSV_HEADER}\n");
            for r in &records {
                s.push_str(&r.csv_row());
                s.push('\n');
            }
            s + &job.trailer()
        }
        Format::Json => json(&serde_json::json!({
            "artifact_version": ARTIFACT_VERSION,
            "config_sha256": job.hash,
            "seed": job.seed,
            "records": records,
        }))?,
    };
    job.emit(&text, stdout)?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------- oracle-compare

/// Closed-form values when the configuration is a log-normal or Merton model
/// with a vanilla payoff.
pub fn analytic_oracle(exp: &Experiment) -> Result<Option<OracleValues>, Error> {
    if !exp.model.is_geometric() {
        return Ok(None);
    }
    let (kind, strike) = match exp.payoff {
        Payoff::Call { strike } => (ContractKind::Call, strike),
        Payoff::Put { strike } => (ContractKind::Put, strike),
        Payoff::Digital { strike } => (ContractKind::Digital, strike),
        _ => return Ok(None),
    };
    let c = Contract { kind, strike, maturity: exp.grid.horizon };
    let gamma = exp.model.param_value(Param::Gamma);
    let sigma1 = exp.model.param_value(Param::Sigma1);
    let sigma2 = exp.model.param_value(Param::Sigma2);
    if sigma2 == 0.0 {
        return black_scholes(exp.x0, sigma1, gamma, &c).map(Some);
    }
    match exp.levy.family() {
        LevyFamily::CompoundPoissonGaussian { intensity, mean, sd } if exp.levy.truncation() == 0.0 => {
            let p = MertonParams {
                sigma: sigma1,
                log_drift: gamma - sigma2 * band_first_moment(&exp.levy)?,
                intensity,
                jump_mean: mean,
                jump_sd: sd,
                jump_scale: sigma2,
                n_terms: DEFAULT_MERTON_TERMS,
            };
            merton_series(exp.x0, &p, &c).map(Some)
        }
        _ => Ok(None),
    }
}

fn oracle_value(v: &OracleValues, g: GreekKind) -> Option<f64> {
    match g {
        GreekKind::Delta => Some(v.delta),
        GreekKind::Gamma => Some(v.gamma),
        GreekKind::Vega(Param::Sigma1) => Some(v.vega),
        GreekKind::Vega(_) => None,
    }
}

/// One line of the weighted / finite-difference / closed-form comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub quantity: String,
    pub mode: String,
    pub weighted: f64,
    pub weighted_se: f64,
    pub fd: f64,
    pub fd_se: f64,
    pub fd_bump: f64,
    pub analytic: Option<f64>,
    /// `|weighted - fd|` over the combined standard error.
    pub z_fd: f64,
    /// `|weighted - analytic|` over the weighted standard error.
    pub z_analytic: Option<f64>,
    pub pass: bool,
}

/// Weighted and finite-difference estimates of each Greek, compared with
/// each other and with the closed form when there is one.
pub fn compare(
    exp: &Experiment,
    req: &WeightRequest,
    greeks: &[GreekKind],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ComparisonRow>, Error> {
    let weighted = estimate_greeks_weighted(exp, req, n_paths, seed)?;
    let oracle = analytic_oracle(exp)?;
    let mut rows = Vec::new();
    for &g in greeks {
        let label = match g {
            GreekKind::Gamma => weighted.iter().find(|r| r.quantity.starts_with("gamma") && !r.quantity.contains("example")),
            _ => weighted.iter().find(|r| r.quantity == g.label()),
        };
        let w = label.ok_or_else(|| Error::Config(format!("no weighted estimate for {}", g.label())))?;
        let h = default_bump(exp, g);
        let f = estimate_greek_fd(exp, g, h, n_paths, seed)?;
        let (d, se) = combined_difference(w, &f);
        let analytic = oracle.as_ref().and_then(|v| oracle_value(v, g));
        let z_analytic = analytic.map(|a| (w.estimate - a).abs() / w.std_error);
        let z_fd = d / se;
        rows.push(ComparisonRow {
            quantity: w.quantity.clone(),
            mode: w.mode.clone(),
            weighted: w.estimate,
            weighted_se: w.std_error,
            fd: f.estimate,
            fd_se: f.std_error,
            fd_bump: h,
            analytic,
            z_fd,
            z_analytic,
            pass: z_fd <= AGREEMENT_SE && z_analytic.is_none_or(|z| z <= AGREEMENT_SE),
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn oracle_compare(job: &Job, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let exp = job.cfg.experiment()?;
    let list = requested_greeks(&job.cfg);
    let mut req = weight_request(&job.cfg, &list);
    req.example_forms = false;
    let rows = compare(&exp, &req, &list, job.cfg.run.n_paths(), job.seed)?;
    let passed = rows.iter().all(|r| r.pass);
    let text = match job.format {
        Format::Csv => {
            let mut s = String::from(
                "quantity,mode,weighted,weighted_se,fd,fd_se,fd_bump,analytic,z_fd,z_analytic,pass\n",
            );
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.quantity,
                    r.mode,
                    r.weighted,
                    r.weighted_se,
                    r.fd,
                    r.fd_se,
                    r.fd_bump,
                    opt(r.analytic),
                    r.z_fd,
                    opt(r.z_analytic),
                    if r.pass { "PASS" } else { "FAIL" }
                ));
            }
            s + &job.trailer()
        }
        Format::Json => json(&serde_json::json!({
            "artifact_version": ARTIFACT_VERSION,
            "config_sha256": job.hash,
            "seed": job.seed,
            "n_paths": job.cfg.run.n_paths(),
            "passed": passed,
            "rows": rows,
        }))?,
    };
    job.emit(&text, stdout)?;
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

// ------------------------------------------------------------- convergence

fn convergence(job: &Job, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let exp = job.cfg.experiment()?;
    let r = &job.cfg.run;
    let axis = r.axis.ok_or_else(|| Failure::config("run.axis is required for convergence"))?;
    if r.levels.is_empty() {
        return Err(Failure::config("run.levels is required for convergence"));
    }
    let table = convergence_study(&exp, &r.study_target(), axis, &r.levels, r.n_paths(), job.seed)?;
    let text = match job.format {
        Format::Csv => {
            let mut s = format!("{},bias_proxy,bias_proxy_se,level\n", CSV_HEADER);
            for row in &table.rows {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    ReportRecord::from(&row.report).csv_row(),
                    opt(row.bias_proxy),
                    opt(row.bias_proxy_se),
                    row.level
                ));
            }
            if let Some(sl) = table.se_slope {
                s.push_str(&format!("# axis={} se_slope={sl}\n", axis.name()));
            } else {
                s.push_str(&format!("# axis={}\n", axis.name()));
            }
            s + &job.trailer()
        }
        Format::Json => json(&serde_json::json!({
            "artifact_version": ARTIFACT_VERSION,
            "config_sha256": job.hash,
            "seed": job.seed,
            "axis": axis.name(),
            "se_slope": table.se_slope,
            "rows": table.rows.iter().map(|row| serde_json::json!({
                "level": row.level,
                "record": ReportRecord::from(&row.report),
                "bias_proxy": row.bias_proxy,
                "bias_proxy_se": row.bias_proxy_se,
            })).collect::<Vec<_>>(),
        }))?,
    };
    job.emit(&text, stdout)?;
    Ok(EXIT_OK)
}

fn json(v: &serde_json::Value) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure { code: EXIT_ESTIMATOR, message: format!("json: {e}") })
}
