//! Euler simulation of the state and its variation processes on a grid merged
//! with the jump times.
//!
//! Each Euler step is the Itô form of the Stratonovich equation with the
//! compensator of the band `delta <= |z| <= 1` frozen at the left endpoint.
//! The variation processes `Z`, `DZ` and `H` are stepped with the exact
//! derivatives of that one-step map, so they are the derivatives of the
//! discrete scheme itself.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::coeff::{CoefficientModel, Param};
use crate::error::{Error, Result};
use crate::levy::{JumpTrain, LevyMeasure, Region};

/// Uniform base grid on `[0, horizon]`; the midpoint and the jump times are
/// merged in at simulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub horizon: f64,
    pub n_steps: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be > 0, got {horizon}")));
        }
        if n_steps < 1 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        Ok(GridSpec { horizon, n_steps })
    }

    /// Base nodes including the midpoint `horizon / 2`.
    pub fn base_nodes(&self) -> Vec<f64> {
        let n = self.n_steps;
        let mut t: Vec<f64> = (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect();
        t[n] = self.horizon;
        if n % 2 == 1 {
            let mid = 0.5 * self.horizon;
            let pos = t.partition_point(|&s| s < mid);
            t.insert(pos, mid);
        }
        t
    }
}

/// Brownian increments on the merged grid together with the jump train.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingNoise {
    pub jumps: JumpTrain,
    pub times: Vec<f64>,
    pub dw: Vec<f64>,
    /// Node index of each jump.
    pub jump_nodes: Vec<usize>,
}

fn merge_nodes(base: &[f64], jumps: &JumpTrain) -> (Vec<f64>, Vec<usize>) {
    let mut times = Vec::with_capacity(base.len() + jumps.len());
    let mut jump_nodes = Vec::with_capacity(jumps.len());
    let (mut i, mut j) = (0, 0);
    while i < base.len() || j < jumps.len() {
        let take_jump = j < jumps.len() && (i >= base.len() || jumps.times[j] <= base[i]);
        if take_jump {
            let t = jumps.times[j];
            if i < base.len() && base[i] == t {
                i += 1;
            }
            if times.last() != Some(&t) {
                times.push(t);
            }
            jump_nodes.push(times.len() - 1);
            j += 1;
        } else {
            times.push(base[i]);
            i += 1;
        }
    }
    (times, jump_nodes)
}

impl DrivingNoise {
    /// Draws the jump train first and then one Gaussian per merged step.
    pub fn sample<R: Rng + ?Sized>(levy: &LevyMeasure, grid: &GridSpec, rng: &mut R) -> Self {
        let jumps = levy.sample_jumps(grid.horizon, rng);
        let (times, jump_nodes) = merge_nodes(&grid.base_nodes(), &jumps);
        let dw = times
            .windows(2)
            .map(|w| {
                let n: f64 = rng.sample(StandardNormal);
                (w[1] - w[0]).sqrt() * n
            })
            .collect();
        DrivingNoise { jumps, times, dw, jump_nodes }
    }

    /// Aggregates the increments onto a coarser grid whose base nodes are a
    /// subset of this noise's nodes.
    pub fn coarsen(&self, grid: &GridSpec) -> Result<Self> {
        let horizon = self.jumps.horizon;
        let tol = 1e-12 * horizon;
        let mut base = grid.base_nodes();
        // Snap the coarse nodes onto the fine ones.
        let mut f = 0;
        for t in base.iter_mut() {
            while f < self.times.len() && self.times[f] < *t - tol {
                f += 1;
            }
            if f >= self.times.len() || (self.times[f] - *t).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "coarse node {t} is not a node of the driving noise"
                )));
            }
            *t = self.times[f];
        }
        let (times, jump_nodes) = merge_nodes(&base, &self.jumps);
        let mut dw = Vec::with_capacity(times.len() - 1);
        let mut k = 0;
        for w in times.windows(2) {
            let mut acc = 0.0;
            while k < self.dw.len() && self.times[k] < w[1] {
                acc += self.dw[k];
                k += 1;
            }
            dw.push(acc);
        }
        Ok(DrivingNoise { jumps: self.jumps.clone(), times, dw, jump_nodes })
    }
}

/// State values just before a jump.
#[derive(Debug, Clone, PartialEq)]
pub struct PreJump {
    pub node: usize,
    pub mark: f64,
    pub x: f64,
    pub z: f64,
    pub dz: f64,
    pub h: Vec<f64>,
}

/// One simulated path. Node values are right limits (after any jump at the
/// node); the values just before each jump are kept in `pre_jump`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub dz: Vec<f64>,
    /// Parameters tracked in `h`, in order.
    pub params: Vec<Param>,
    /// `h[i][k]` is the sensitivity to `params[i]` at node `k`.
    pub h: Vec<Vec<f64>>,
    pub dw: Vec<f64>,
    pub jumps: JumpTrain,
    pub pre_jump: Vec<PreJump>,
    /// Node index to position in `pre_jump`, if a jump sits at the node.
    pub jump_at: Vec<Option<usize>>,
    /// Compensator drift applied on each step.
    pub compensator: Vec<f64>,
}

impl PathState {
    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn terminal(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Node index of time `t`, if `t` is a node.
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.jumps.horizon.max(1.0);
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    /// Sensitivity path for a tracked parameter.
    pub fn sensitivity(&self, p: Param) -> Option<&[f64]> {
        self.params.iter().position(|&q| q == p).map(|i| self.h[i].as_slice())
    }

    /// `(x, Z, DZ)` just before node `k`.
    pub fn left_limit(&self, k: usize) -> (f64, f64, f64) {
        match self.jump_at[k] {
            Some(j) => {
                let p = &self.pre_jump[j];
                (p.x, p.z, p.dz)
            }
            None => (self.x[k], self.z[k], self.dz[k]),
        }
    }
}

/// Which sensitivities to carry along the path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tracking {
    pub params: Vec<Param>,
}

/// Bumped quantity for common-random-number re-simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bump {
    InitialState(f64),
    Parameter(Param, f64),
}

/// Signed first moment of the Lévy measure over the compensated band.
pub fn band_first_moment(levy: &LevyMeasure) -> Result<f64> {
    if levy.truncation() >= 1.0 {
        return Ok(0.0);
    }
    levy.nu_moment(1.0, Region::Band, true)
}

/// Simulates one path; the rng supplies the jump train and then the
/// Brownian increments.
pub fn simulate<R: Rng + ?Sized>(
    model: &CoefficientModel,
    levy: &LevyMeasure,
    grid: &GridSpec,
    x0: f64,
    rng: &mut R,
    tracking: &Tracking,
) -> Result<PathState> {
    let noise = DrivingNoise::sample(levy, grid, rng);
    simulate_with_noise(model, band_first_moment(levy)?, &noise, x0, tracking)
}

/// Re-simulates with one quantity bumped; callers replay the same rng stream.
pub fn resimulate_bumped<R: Rng + ?Sized>(
    model: &CoefficientModel,
    levy: &LevyMeasure,
    grid: &GridSpec,
    x0: f64,
    rng: &mut R,
    tracking: &Tracking,
    bump: Bump,
) -> Result<PathState> {
    match bump {
        Bump::InitialState(h) => simulate(model, levy, grid, x0 + h, rng, tracking),
        Bump::Parameter(p, h) => {
            let bumped = model.with_param(p, model.param_value(p) + h)?;
            simulate(&bumped, levy, grid, x0, rng, tracking)
        }
    }
}

/// Drift of the Itô Euler step and its derivatives at one state.
#[derive(Debug, Clone, Copy)]
struct StepCoeffs {
    drift: f64,
    drift_y: f64,
    drift_yy: f64,
    a: f64,
    a_y: f64,
    a_yy: f64,
    compensator: f64,
}

fn step_coeffs(model: &CoefficientModel, m1: f64, y: f64) -> StepCoeffs {
    let c = model.continuous(y);
    let (k0, k1, k2) = model.jump_factor(y);
    let compensator = -m1 * k0;
    StepCoeffs {
        drift: c.a0 + 0.5 * c.a * c.a_y + compensator,
        drift_y: c.a0_y + 0.5 * (c.a_y * c.a_y + c.a * c.a_yy) - m1 * k1,
        drift_yy: c.a0_yy + 0.5 * (3.0 * c.a_y * c.a_yy + c.a * c.a_yyy) - m1 * k2,
        a: c.a,
        a_y: c.a_y,
        a_yy: c.a_yy,
        compensator,
    }
}

/// Parameter derivative of the drift and diffusion of the Euler step.
fn step_param(model: &CoefficientModel, m1: f64, p: Param, y: f64) -> (f64, f64) {
    let c = model.continuous(y);
    let e = model.continuous_param(p, y);
    let (dk, _) = model.jump_factor_param(p, y);
    (e.a0 + 0.5 * (e.a * c.a_y + c.a * e.a_y) - m1 * dk, e.a)
}

/// Runs the Euler scheme over a given driving noise.
pub fn simulate_with_noise(
    model: &CoefficientModel,
    band_m1: f64,
    noise: &DrivingNoise,
    x0: f64,
    tracking: &Tracking,
) -> Result<PathState> {
    let n = noise.times.len();
    let np = tracking.params.len();
    let mut path = PathState {
        times: noise.times.clone(),
        x: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        dz: Vec::with_capacity(n),
        params: tracking.params.clone(),
        h: vec![Vec::with_capacity(n); np],
        dw: noise.dw.clone(),
        jumps: noise.jumps.clone(),
        pre_jump: Vec::with_capacity(noise.jumps.len()),
        jump_at: vec![None; n],
        compensator: Vec::with_capacity(n.saturating_sub(1)),
    };
    let (mut x, mut z, mut dz) = (x0, 1.0, 0.0);
    let mut h = vec![0.0; np];
    let mut next_jump = 0;
    for k in 0..n {
        if k > 0 {
            let dt = noise.times[k] - noise.times[k - 1];
            let dw = noise.dw[k - 1];
            let s = step_coeffs(model, band_m1, x);
            let lin = s.drift_y * dt + s.a_y * dw;
            let quad = s.drift_yy * dt + s.a_yy * dw;
            for (i, &p) in tracking.params.iter().enumerate() {
                let (d_drift, d_a) = step_param(model, band_m1, p, x);
                h[i] += lin * h[i] + d_drift * dt + d_a * dw;
            }
            dz += lin * dz + quad * z * z;
            z += lin * z;
            x += s.drift * dt + s.a * dw;
            path.compensator.push(s.compensator);
        }
        while next_jump < noise.jump_nodes.len() && noise.jump_nodes[next_jump] == k {
            let mark = noise.jumps.marks[next_jump];
            path.jump_at[k] = Some(path.pre_jump.len());
            path.pre_jump.push(PreJump { node: k, mark, x, z, dz, h: h.clone() });
            let j = model.jump(x, mark);
            let g = 1.0 + j.b_y;
            for (i, &p) in tracking.params.iter().enumerate() {
                h[i] = g * h[i] + model.jump_param(p, x, mark).b;
            }
            dz = g * dz + j.b_yy * z * z;
            z *= g;
            x += j.b;
            next_jump += 1;
        }
        if !x.is_finite() || !z.is_finite() || !dz.is_finite() || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::PathAbort { step: k, reason: "non-finite state".into() });
        }
        if z <= 0.0 {
            return Err(Error::PathAbort { step: k, reason: "first variation is not positive".into() });
        }
        path.x.push(x);
        path.z.push(z);
        path.u.push(1.0 / z);
        path.dz.push(dz);
        for (track, &value) in path.h.iter_mut().zip(&h) {
            track.push(value);
        }
    }
    Ok(path)
}

/// Euler scheme for the inverse flow, used to cross-check `U = 1/Z`.
pub fn inverse_flow_euler(model: &CoefficientModel, band_m1: f64, path: &PathState) -> Vec<f64> {
    let n = path.n_nodes();
    let mut out = Vec::with_capacity(n);
    let mut u = 1.0;
    for k in 0..n {
        if k > 0 {
            let dt = path.times[k] - path.times[k - 1];
            let s = step_coeffs(model, band_m1, path.x[k - 1]);
            u += u * ((s.a_y * s.a_y - s.drift_y) * dt - s.a_y * path.dw[k - 1]);
        }
        if let Some(j) = path.jump_at[k] {
            let p = &path.pre_jump[j];
            u /= 1.0 + model.jump(p.x, p.mark).b_y;
        }
        out.push(u);
    }
    out
}
