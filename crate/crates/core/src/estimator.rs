//! Monte Carlo estimation of prices and Greeks.
//!
//! Path `i` of a run with seed `s` draws from a ChaCha8 generator seeded with
//! `s` on stream `i`, so every path is reproducible in isolation. Paths are
//! grouped into fixed-size chunks, reduced in parallel, and the chunk totals
//! are merged in chunk order; results never depend on the worker count.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::{CoefficientModel, Param};
use crate::error::{Error, Result};
use crate::levy::{LevyMeasure, Region};
use crate::path::{self, band_first_moment, DrivingNoise, GridSpec, Tracking};
use crate::payoff::Payoff;
use crate::stats::{slope, Accumulator};
use crate::tolerances::{
    CHUNK_PATHS, FD_HIGH_VARIANCE_RATIO, FD_REL_BUMP, FD_REL_BUMP2, MAX_ABORT_FRACTION, WORKERS_ENV, Z95,
};
use crate::weights::{path_weights, Gamma3Form, WeightContext, WeightMode, WeightRequest};

/// Model, jump measure, grid, initial value and payoff of one estimation
/// problem. For geometric models `x0` is the spot and the simulated state is
/// its logarithm.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: CoefficientModel,
    pub levy: LevyMeasure,
    pub grid: GridSpec,
    pub x0: f64,
    pub payoff: Payoff,
}

impl Experiment {
    pub fn new(
        model: CoefficientModel,
        levy: LevyMeasure,
        grid: GridSpec,
        x0: f64,
        payoff: Payoff,
    ) -> Result<Self> {
        payoff.validate()?;
        if !x0.is_finite() {
            return Err(Error::InvalidParameter("initial value must be finite".into()));
        }
        if model.is_geometric() && !(x0 > 0.0) {
            return Err(Error::Domain(format!("spot must be > 0 for a geometric model, got {x0}")));
        }
        Ok(Experiment { model, levy, grid, x0, payoff })
    }

    pub fn initial_state(&self) -> f64 {
        self.state_of(self.x0)
    }

    fn state_of(&self, spot: f64) -> f64 {
        if self.model.is_geometric() {
            spot.ln()
        } else {
            spot
        }
    }

    /// Payoff of a terminal state.
    #[inline]
    pub fn payoff_value(&self, x_t: f64) -> f64 {
        if self.model.is_geometric() {
            self.payoff.eval(x_t.exp())
        } else {
            self.payoff.eval(x_t)
        }
    }

    pub fn with_model(&self, model: CoefficientModel) -> Self {
        Experiment { model, ..self.clone() }
    }
}

/// Greek to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreekKind {
    Delta,
    Gamma,
    Vega(Param),
}

impl GreekKind {
    pub fn label(&self) -> String {
        match self {
            GreekKind::Delta => "delta".into(),
            GreekKind::Gamma => "gamma".into(),
            GreekKind::Vega(p) => format!("vega({p})"),
        }
    }
}

/// Monte Carlo estimate with its sampling error and provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub quantity: String,
    pub mode: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_paths: usize,
    pub n_excluded: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub runtime_ms: u64,
    /// Finite-difference step, when the estimate is a difference quotient.
    pub bump: Option<f64>,
    /// Set for finite differences whose relative standard error is large.
    pub high_variance: bool,
}

impl EstimatorReport {
    /// True when `value` lies within `k` standard errors.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

/// `(|a - b|, sqrt(se_a^2 + se_b^2))`.
pub fn combined_difference(a: &EstimatorReport, b: &EstimatorReport) -> (f64, f64) {
    ((a.estimate - b.estimate).abs(), a.std_error.hypot(b.std_error))
}

/// Generator for path `index` of a run with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` inside a pool sized by the worker environment variable, if set.
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(f: F) -> T {
    let workers = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    match workers {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[derive(Debug, Clone, Default)]
struct Totals {
    acc: Vec<Accumulator>,
    aborted: usize,
    undefined: usize,
}

impl Totals {
    fn new(width: usize) -> Self {
        Totals { acc: vec![Accumulator::default(); width], aborted: 0, undefined: 0 }
    }

    fn merge(&mut self, other: &Totals) {
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            a.merge(b);
        }
        self.aborted += other.aborted;
        self.undefined += other.undefined;
    }
}

/// Evaluates `f` on every path and reduces the `width` outputs per path.
/// Aborted paths and paths with an undefined weight are counted, not summed.
fn run_paths<F>(n_paths: usize, width: usize, f: F) -> Result<Totals>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    let n_chunks = n_paths.div_ceil(CHUNK_PATHS);
    let chunks: Vec<Result<Totals>> = with_workers(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut t = Totals::new(width);
                let mut buf = vec![0.0; width];
                let end = ((c + 1) * CHUNK_PATHS).min(n_paths);
                for i in c * CHUNK_PATHS..end {
                    match f(i as u64, &mut buf) {
                        Ok(()) => {
                            for (a, &v) in t.acc.iter_mut().zip(&buf) {
                                a.push(v);
                            }
                        }
                        Err(Error::PathAbort { .. }) => t.aborted += 1,
                        Err(Error::WeightUndefined(_)) => t.undefined += 1,
                        Err(e) => return Err(e),
                    }
                }
                Ok(t)
            })
            .collect()
    });
    let mut total = Totals::new(width);
    for c in chunks {
        total.merge(&c?);
    }
    if total.aborted as f64 > MAX_ABORT_FRACTION * n_paths as f64 {
        return Err(Error::EstimatorFailure(format!(
            "{} of {n_paths} paths aborted",
            total.aborted
        )));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn make_report(
    quantity: String,
    mode: &str,
    acc: &Accumulator,
    n_paths: usize,
    n_excluded: usize,
    n_steps: usize,
    seed: u64,
    runtime_ms: u64,
) -> Result<EstimatorReport> {
    if acc.n < 2 {
        return Err(Error::EstimatorFailure(format!(
            "{quantity}: fewer than two usable paths"
        )));
    }
    let se = acc.std_error();
    Ok(EstimatorReport {
        quantity,
        mode: mode.to_string(),
        estimate: acc.mean,
        std_error: se,
        ci_lo: acc.mean - Z95 * se,
        ci_hi: acc.mean + Z95 * se,
        n_paths,
        n_excluded,
        n_steps,
        seed,
        runtime_ms,
        bump: None,
        high_variance: false,
    })
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < 2 {
        return Err(Error::InvalidParameter("n_paths must be >= 2".into()));
    }
    Ok(())
}

/// Mean of the payoff at maturity.
pub fn estimate_expectation(exp: &Experiment, n_paths: usize, seed: u64) -> Result<EstimatorReport> {
    check_paths(n_paths)?;
    let start = Instant::now();
    let m1 = band_first_moment(&exp.levy)?;
    let x0 = exp.initial_state();
    let tracking = Tracking::default();
    let totals = run_paths(n_paths, 1, |i, out| {
        let mut rng = path_rng(seed, i);
        let noise = DrivingNoise::sample(&exp.levy, &exp.grid, &mut rng);
        let p = path::simulate_with_noise(&exp.model, m1, &noise, x0, &tracking)?;
        out[0] = exp.payoff_value(p.terminal());
        Ok(())
    })?;
    make_report(
        "price".into(),
        "simulation",
        &totals.acc[0],
        n_paths,
        totals.aborted,
        exp.grid.n_steps,
        seed,
        start.elapsed().as_millis() as u64,
    )
}

/// Several weighted Greeks from one set of paths, in the order delta, gamma,
/// the requested parameters, then the example-form variants if requested.
pub fn estimate_greeks_weighted(
    exp: &Experiment,
    req: &WeightRequest,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<EstimatorReport>> {
    check_paths(n_paths)?;
    let start = Instant::now();
    let ctx = WeightContext::new(&exp.model, &exp.levy)?.with_kernel(req.kernel);
    for &p in &req.vegas {
        exp.model.param(p.name())?;
    }
    let mut labels = Vec::new();
    if req.delta {
        labels.push("delta".to_string());
    }
    if req.gamma {
        labels.push(match req.form {
            Gamma3Form::Theorem => "gamma".to_string(),
            Gamma3Form::Corrected => "gamma(corrected)".to_string(),
        });
    }
    for p in &req.vegas {
        labels.push(GreekKind::Vega(*p).label());
    }
    if req.example_forms {
        labels.extend(["delta(example)", "gamma(example)", "vega(sigma2)(example)"].map(String::from));
    }
    let x0 = exp.initial_state();
    let tracking = Tracking::default();
    let width = labels.len();
    let totals = run_paths(n_paths, width, |i, out| {
        let mut rng = path_rng(seed, i);
        let noise = DrivingNoise::sample(&exp.levy, &exp.grid, &mut rng);
        let p = path::simulate_with_noise(&exp.model, ctx.band_m1, &noise, x0, &tracking)?;
        let phi = exp.payoff_value(p.terminal());
        let w = path_weights(&ctx, &p, req, exp.x0)?;
        let mut k = 0;
        for v in w.delta.iter().chain(w.gamma.iter()).chain(w.vega.iter()) {
            out[k] = phi * v;
            k += 1;
        }
        if let Some(ex) = w.example {
            for v in [ex.delta, ex.gamma, ex.vega_sigma2] {
                out[k] = phi * v;
                k += 1;
            }
        }
        Ok(())
    })?;
    let runtime = start.elapsed().as_millis() as u64;
    labels
        .into_iter()
        .zip(&totals.acc)
        .map(|(label, acc)| {
            make_report(
                label,
                req.mode.name(),
                acc,
                n_paths,
                totals.aborted + totals.undefined,
                exp.grid.n_steps,
                seed,
                runtime,
            )
        })
        .collect()
}

/// One weighted Greek with the theorem-form second-order weight.
pub fn estimate_greek_weighted(
    exp: &Experiment,
    greek: GreekKind,
    mode: WeightMode,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorReport> {
    let mut req = WeightRequest::new(mode);
    req.delta = greek == GreekKind::Delta;
    req.gamma = greek == GreekKind::Gamma;
    if let GreekKind::Vega(p) = greek {
        req.vegas.push(p);
    }
    Ok(estimate_greeks_weighted(exp, &req, n_paths, seed)?.remove(0))
}

/// Default finite-difference step: `1e-3` times the size of the bumped
/// quantity for first order, `0.5` in the initial value for second order.
pub fn default_bump(exp: &Experiment, greek: GreekKind) -> f64 {
    let scale = |v: f64| if v != 0.0 { v.abs() } else { 1.0 };
    match greek {
        GreekKind::Delta => FD_REL_BUMP * scale(exp.x0),
        GreekKind::Gamma => FD_REL_BUMP2,
        GreekKind::Vega(p) => FD_REL_BUMP * scale(exp.model.param_value(p)),
    }
}

/// Central difference (second central difference for gamma) with common
/// random numbers; the standard error is that of the per-path quotients.
pub fn estimate_greek_fd(
    exp: &Experiment,
    greek: GreekKind,
    h: f64,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorReport> {
    check_paths(n_paths)?;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("bump must be > 0, got {h}")));
    }
    let start = Instant::now();
    let m1 = band_first_moment(&exp.levy)?;
    let tracking = Tracking::default();
    let (up, down) = match greek {
        GreekKind::Delta | GreekKind::Gamma => {
            if exp.model.is_geometric() && !(exp.x0 - h > 0.0) {
                return Err(Error::InvalidParameter("bump exceeds the spot".into()));
            }
            (
                (exp.model.clone(), exp.state_of(exp.x0 + h)),
                (exp.model.clone(), exp.state_of(exp.x0 - h)),
            )
        }
        GreekKind::Vega(p) => {
            exp.model.param(p.name())?;
            let v = exp.model.param_value(p);
            (
                (exp.model.with_param(p, v + h)?, exp.initial_state()),
                (exp.model.with_param(p, v - h)?, exp.initial_state()),
            )
        }
    };
    let x0 = exp.initial_state();
    let totals = run_paths(n_paths, 1, |i, out| {
        let noise = DrivingNoise::sample(&exp.levy, &exp.grid, &mut path_rng(seed, i));
        let value = |m: &CoefficientModel, x: f64| -> Result<f64> {
            let p = path::simulate_with_noise(m, m1, &noise, x, &tracking)?;
            Ok(exp.payoff_value(p.terminal()))
        };
        let fu = value(&up.0, up.1)?;
        let fd = value(&down.0, down.1)?;
        out[0] = match greek {
            GreekKind::Gamma => (fu - 2.0 * value(&exp.model, x0)? + fd) / (h * h),
            _ => (fu - fd) / (2.0 * h),
        };
        Ok(())
    })?;
    let mut r = make_report(
        greek.label(),
        "finite-difference",
        &totals.acc[0],
        n_paths,
        totals.aborted,
        exp.grid.n_steps,
        seed,
        start.elapsed().as_millis() as u64,
    )?;
    r.bump = Some(h);
    r.high_variance = r.std_error > FD_HIGH_VARIANCE_RATIO * r.estimate.abs();
    Ok(r)
}

/// Quantity tracked by a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyTarget {
    Price,
    Weighted(GreekKind, WeightMode, Gamma3Form),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StudyAxis {
    NPaths,
    NSteps,
    Truncation,
}

impl StudyAxis {
    pub fn name(&self) -> &'static str {
        match self {
            StudyAxis::NPaths => "n_paths",
            StudyAxis::NSteps => "n_steps",
            StudyAxis::Truncation => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: f64,
    pub report: EstimatorReport,
    /// Steps axis: coupled mean of `E_n - E_ref`; truncation axis: the
    /// small-jump variance below the level.
    pub bias_proxy: Option<f64>,
    pub bias_proxy_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub axis: StudyAxis,
    pub rows: Vec<ConvergenceRow>,
    /// Paths axis: log-log slope of the standard error against `n_paths`.
    pub se_slope: Option<f64>,
}

fn target_request(target: &StudyTarget) -> Option<WeightRequest> {
    match target {
        StudyTarget::Price => None,
        StudyTarget::Weighted(g, mode, form) => {
            let mut req = WeightRequest::new(*mode);
            req.delta = *g == GreekKind::Delta;
            req.gamma = *g == GreekKind::Gamma;
            req.form = *form;
            if let GreekKind::Vega(p) = g {
                req.vegas.push(*p);
            }
            Some(req)
        }
    }
}

fn estimate_target(exp: &Experiment, target: &StudyTarget, n_paths: usize, seed: u64) -> Result<EstimatorReport> {
    match target_request(target) {
        None => estimate_expectation(exp, n_paths, seed),
        Some(req) => Ok(estimate_greeks_weighted(exp, &req, n_paths, seed)?.remove(0)),
    }
}

/// Re-estimates the target at each level of one axis. For the steps axis the
/// levels share Brownian paths with a reference grid eight times finer than
/// the finest level.
pub fn convergence_study(
    exp: &Experiment,
    target: &StudyTarget,
    axis: StudyAxis,
    levels: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    if levels.len() < 3 {
        return Err(Error::InvalidParameter("a convergence study needs at least three levels".into()));
    }
    match axis {
        StudyAxis::NPaths => {
            let mut rows = Vec::new();
            for &l in levels {
                let n = l as usize;
                if n as f64 != l {
                    return Err(Error::InvalidParameter(format!("path count {l} is not an integer")));
                }
                let report = estimate_target(exp, target, n, seed)?;
                rows.push(ConvergenceRow { level: l, report, bias_proxy: None, bias_proxy_se: None });
            }
            let xs: Vec<f64> = rows.iter().map(|r| r.level.ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.report.std_error.ln()).collect();
            let se_slope = ys.iter().all(|y| y.is_finite()).then(|| slope(&xs, &ys));
            Ok(ConvergenceTable { axis, rows, se_slope })
        }
        StudyAxis::Truncation => {
            let mut rows = Vec::new();
            for &d in levels {
                let levy = LevyMeasure::new(exp.levy.family(), d)?;
                let proxy = levy.nu_moment(2.0, Region::Below, false)?;
                let e = Experiment { levy, ..exp.clone() };
                let report = estimate_target(&e, target, n_paths, seed)?;
                rows.push(ConvergenceRow { level: d, report, bias_proxy: Some(proxy), bias_proxy_se: None });
            }
            Ok(ConvergenceTable { axis, rows, se_slope: None })
        }
        StudyAxis::NSteps => steps_study(exp, target, levels, n_paths, seed),
    }
}

fn steps_study(
    exp: &Experiment,
    target: &StudyTarget,
    levels: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceTable> {
    check_paths(n_paths)?;
    let start = Instant::now();
    let mut steps = Vec::new();
    for &l in levels {
        if !(l >= 1.0) || l.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("step count {l} is not a positive integer")));
        }
        steps.push(l as usize);
    }
    let finest = *steps.iter().max().expect("levels");
    let n_ref = 8 * finest;
    if steps.iter().any(|&n| n_ref % n != 0) {
        return Err(Error::InvalidParameter(
            "every step count must divide eight times the finest one".into(),
        ));
    }
    let ref_grid = GridSpec::new(exp.grid.horizon, n_ref)?;
    let grids: Vec<GridSpec> =
        steps.iter().map(|&n| GridSpec::new(exp.grid.horizon, n)).collect::<Result<_>>()?;
    let req = target_request(target);
    let ctx = WeightContext::new(&exp.model, &exp.levy)?;
    let x0 = exp.initial_state();
    let tracking = Tracking::default();
    let nl = steps.len();
    // Outputs: value per level, then level minus reference per level.
    let totals = run_paths(n_paths, 2 * nl, |i, out| {
        let noise = DrivingNoise::sample(&exp.levy, &ref_grid, &mut path_rng(seed, i));
        let eval = |nz: &DrivingNoise| -> Result<f64> {
            let p = path::simulate_with_noise(&exp.model, ctx.band_m1, nz, x0, &tracking)?;
            let phi = exp.payoff_value(p.terminal());
            Ok(match &req {
                None => phi,
                Some(r) => {
                    let w = path_weights(&ctx, &p, r, exp.x0)?;
                    phi * w.delta.or(w.gamma).or(w.vega.first().copied()).unwrap_or(0.0)
                }
            })
        };
        let reference = eval(&noise)?;
        for (k, g) in grids.iter().enumerate() {
            let v = eval(&noise.coarsen(g)?)?;
            out[k] = v;
            out[nl + k] = v - reference;
        }
        Ok(())
    })?;
    let runtime = start.elapsed().as_millis() as u64;
    let label = match target {
        StudyTarget::Price => "price".to_string(),
        StudyTarget::Weighted(g, _, _) => g.label(),
    };
    let mode = match target {
        StudyTarget::Price => "simulation",
        StudyTarget::Weighted(_, m, _) => m.name(),
    };
    let mut rows = Vec::new();
    for (k, &n) in steps.iter().enumerate() {
        let mut report = make_report(
            label.clone(),
            mode,
            &totals.acc[k],
            n_paths,
            totals.aborted + totals.undefined,
            n,
            seed,
            runtime,
        )?;
        report.runtime_ms = runtime;
        let d = &totals.acc[nl + k];
        rows.push(ConvergenceRow {
            level: n as f64,
            report,
            bias_proxy: Some(d.mean),
            bias_proxy_se: Some(d.std_error()),
        });
    }
    Ok(ConvergenceTable { axis: StudyAxis::NSteps, rows, se_slope: None })
}
