//! Per-path Malliavin weights for delta, parameter sensitivities and gamma.
//!
//! All weights are assembled from sums over the steps and jumps of a
//! [`PathState`]. Itô sums use left endpoints, the Stratonovich sum in the
//! vega weight uses the midpoint rule, and the jump compensators are
//! integrated in time by the trapezoid rule.

use serde::Serialize;

use crate::coeff::{CoefficientModel, JumpCoeffs, ModelKind, Param};
use crate::error::{Error, Result};
use crate::levy::LevyMeasure;
use crate::path::{band_first_moment, PathState};

/// Which noise the integration by parts acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightMode {
    /// Brownian and jump parts together.
    Full,
    /// Brownian part only; jump sums are ignored.
    DiffusionOnly,
    /// Jump part only; `A` is the sum of squared marks.
    JumpOnly,
}

impl WeightMode {
    pub fn name(&self) -> &'static str {
        match self {
            WeightMode::Full => "full",
            WeightMode::DiffusionOnly => "diffusion-only",
            WeightMode::JumpOnly => "jump-only",
        }
    }
}

/// Assembly of the second-order weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gamma3Form {
    /// Product of the half-interval delta weights plus the `K` cross terms and
    /// the literal derivative of the `F` integrands in the mark.
    Theorem,
    /// Product of the half-interval delta weights without cross terms, and the
    /// density-weighted divergence `(g F)' / g` for the `F` integrands.
    Corrected,
}

impl Gamma3Form {
    pub fn name(&self) -> &'static str {
        match self {
            Gamma3Form::Theorem => "theorem",
            Gamma3Form::Corrected => "corrected",
        }
    }
}

/// Weighting of the jump sizes in `A` and in the integration direction `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpKernel {
    /// `z^2`.
    Square,
    /// `z^2 - delta^2`, which vanishes on the truncation boundary so the
    /// integration by parts over `|z| >= delta` has no boundary remainder.
    /// Equal to `Square` when `delta = 0`.
    Shifted,
}

impl JumpKernel {
    pub fn name(&self) -> &'static str {
        match self {
            JumpKernel::Square => "square",
            JumpKernel::Shifted => "shifted",
        }
    }
}

/// `(L, J, K, A)` over `[tau, t]`, with the raw sums kept for additivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentFunctionals {
    pub tau: f64,
    pub t: f64,
    pub l: f64,
    pub j: f64,
    pub k: f64,
    pub a: f64,
    /// Sum of the kernel over the marks.
    pub jump_sq: f64,
    /// Sum of `psi` over jumps.
    pub j_jumps: f64,
    /// Time integral of the boundary flux.
    pub j_flux: f64,
    pub n_jumps: usize,
}

impl SegmentFunctionals {
    /// First-order weight on this segment.
    pub fn gamma1(&self, mode: WeightMode) -> f64 {
        match mode {
            WeightMode::DiffusionOnly => self.l / self.a,
            _ => (self.l - self.j) / self.a + self.k / (self.a * self.a),
        }
    }
}

/// Components of the weight for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VegaFunctionals {
    pub l: f64,
    pub g: f64,
    pub r: f64,
    pub q: f64,
    pub j: f64,
}

impl VegaFunctionals {
    pub fn weight(&self, mode: WeightMode) -> f64 {
        match mode {
            WeightMode::Full => self.l + self.r - self.q - self.j,
            WeightMode::DiffusionOnly => self.l + self.r - self.q,
            WeightMode::JumpOnly => -self.j,
        }
    }
}

/// Path integrals entering the second-order weight on `[0, T/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaTensors {
    /// `∫ F1 dW`.
    pub f1_dw: f64,
    /// Sum over jumps of the divergence of `F2 + F3`.
    pub div_jumps: f64,
    /// Compensated sum of the divergence weighted by `1 / (A + z^2)`.
    pub div_compensated: f64,
}

/// Weights evaluated with the variants written for the additive example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExampleWeights {
    pub delta: f64,
    pub gamma: f64,
    pub vega_sigma2: f64,
}

/// Shared per-experiment data for weight evaluation.
#[derive(Debug, Clone)]
pub struct WeightContext<'a> {
    pub model: &'a CoefficientModel,
    pub levy: &'a LevyMeasure,
    pub band_m1: f64,
    pub kernel: JumpKernel,
    delta: f64,
    g_pos: f64,
    g_neg: f64,
}

/// State quantities that the jump integrands depend on.
#[derive(Debug, Clone, Copy)]
struct NodeState {
    x: f64,
    z: f64,
    dz: f64,
}

impl<'a> WeightContext<'a> {
    pub fn new(model: &'a CoefficientModel, levy: &'a LevyMeasure) -> Result<Self> {
        let delta = levy.truncation();
        let (g_pos, g_neg) = if delta > 0.0 {
            (levy.density(delta)?, levy.density(-delta)?)
        } else {
            (0.0, 0.0)
        };
        Ok(WeightContext {
            model,
            levy,
            band_m1: band_first_moment(levy)?,
            kernel: JumpKernel::Shifted,
            delta,
            g_pos,
            g_neg,
        })
    }

    pub fn with_kernel(mut self, kernel: JumpKernel) -> Self {
        self.kernel = kernel;
        self
    }

    /// Kernel value and derivative at a mark.
    #[inline]
    pub fn rho(&self, z: f64) -> (f64, f64) {
        match self.kernel {
            JumpKernel::Square => (z * z, 2.0 * z),
            JumpKernel::Shifted => (z * z - self.delta * self.delta, 2.0 * z),
        }
    }

    /// `(g v)'` integrated over `|z| >= delta` by quadrature, and the boundary
    /// evaluation of the same integral, at one state.
    pub fn flux_check(&self, x: f64, z: f64) -> Result<(f64, f64)> {
        let s = NodeState { x, z, dz: 0.0 };
        let mut quad = 0.0;
        for (sign, zmax) in [(1.0, self.levy.z_max().0), (-1.0, self.levy.z_max().1)] {
            let f = |r: f64| -> f64 {
                let m = sign * r;
                match self.v(s, m) {
                    Ok((v, v_z)) => self.levy.density_unchecked(m) * (self.levy.score_unchecked(m) * v + v_z),
                    Err(_) => f64::NAN,
                }
            };
            quad += crate::quadrature::integrate(f, self.delta, zmax).value;
        }
        let quad = quad - self.tail_flux(s)?;
        Ok((quad, self.flux(s)?))
    }

    /// `g v` at the largest tabulated sizes, which the quadrature leaves out.
    fn tail_flux(&self, s: NodeState) -> Result<f64> {
        let (zp, zn) = self.levy.z_max();
        Ok(self.levy.density_unchecked(zp) * self.v(s, zp)?.0
            - self.levy.density_unchecked(-zn) * self.v(s, -zn)?.0)
    }

    fn jump_checked(&self, x: f64, z: f64) -> Result<JumpCoeffs> {
        let j = self.model.jump(x, z);
        if j.b_z == 0.0 {
            return Err(Error::WeightUndefined(
                "jump coefficient is not elliptic in the mark".into(),
            ));
        }
        Ok(j)
    }

    /// `v(z) = (1 + b_y) / b_z * Z * rho(z)` and its mark derivative.
    fn v(&self, s: NodeState, mark: f64) -> Result<(f64, f64)> {
        let j = self.jump_checked(s.x, mark)?;
        let r = (1.0 + j.b_y) / j.b_z;
        let r_z = j.b_zy / j.b_z - (1.0 + j.b_y) * j.b_zz / (j.b_z * j.b_z);
        let (k, k_z) = self.rho(mark);
        Ok((r * s.z * k, s.z * (r_z * k + r * k_z)))
    }

    fn flux(&self, s: NodeState) -> Result<f64> {
        if self.delta == 0.0 || (self.g_pos == 0.0 && self.g_neg == 0.0) {
            return Ok(0.0);
        }
        Ok(self.g_neg * self.v(s, -self.delta)?.0 - self.g_pos * self.v(s, self.delta)?.0)
    }

    /// Parameter analogue of `v`: `(1 + b_y) / b_z * Z * U (1 + b_y)^-1 d_eps b`.
    fn v_tilde(&self, p: Param, s: NodeState, mark: f64) -> Result<(f64, f64)> {
        let j = self.jump_checked(s.x, mark)?;
        let e = self.model.jump_param(p, s.x, mark);
        let zu = s.z * (1.0 / s.z);
        let v = zu * e.b / j.b_z;
        let v_z = zu * (e.b_z * j.b_z - e.b * j.b_zz) / (j.b_z * j.b_z);
        Ok((v, v_z))
    }

    fn flux_tilde(&self, p: Param, s: NodeState) -> Result<f64> {
        if self.delta == 0.0 || (self.g_pos == 0.0 && self.g_neg == 0.0) {
            return Ok(0.0);
        }
        Ok(self.g_neg * self.v_tilde(p, s, -self.delta)?.0
            - self.g_pos * self.v_tilde(p, s, self.delta)?.0)
    }

    /// Divergence in the mark of `F2 + F3` at one state.
    fn divergence(&self, s: NodeState, mark: f64, form: Gamma3Form) -> Result<f64> {
        let j = self.jump_checked(s.x, mark)?;
        if j.b_yy == 0.0 && j.b_zy == 0.0 && j.b_zyy == 0.0 && s.dz == 0.0 {
            return Ok(0.0);
        }
        let (bz, bz2) = (j.b_z, j.b_z * j.b_z);
        let z2 = s.z * s.z;
        let one = 1.0 + j.b_y;
        let num = j.b_yy * z2 + one * s.dz;
        let p = num / bz;
        let p_z = (j.b_zyy * z2 + j.b_zy * s.dz) / bz - num * j.b_zz / bz2;
        let q = j.b_zy * one * z2 / bz2;
        let q_z = (j.b_zzy * one + j.b_zy * j.b_zy) * z2 / bz2 - 2.0 * j.b_zy * one * z2 * j.b_zz / (bz2 * bz);
        let (m2, m2_z) = self.rho(mark);
        let f = -p * m2 + q * m2;
        let f_z = -(p_z * m2 + m2_z * p) + q_z * m2 + m2_z * q;
        Ok(match form {
            Gamma3Form::Theorem => f_z,
            Gamma3Form::Corrected => f_z + self.levy.score_unchecked(mark) * f,
        })
    }
}

fn node_state(path: &PathState, k: usize) -> NodeState {
    NodeState { x: path.x[k], z: path.z[k], dz: path.dz[k] }
}

fn left_state(path: &PathState, k: usize) -> NodeState {
    let (x, z, dz) = path.left_limit(k);
    NodeState { x, z, dz }
}

fn segment_nodes(path: &PathState, tau: f64, t: f64) -> Result<(usize, usize)> {
    if !(tau >= 0.0 && t > tau) {
        return Err(Error::InvalidParameter(format!("invalid segment [{tau}, {t}]")));
    }
    let i0 = path
        .node_of(tau)
        .ok_or_else(|| Error::InvalidParameter(format!("segment start {tau} is not a grid node")))?;
    let i1 = path
        .node_of(t)
        .ok_or_else(|| Error::InvalidParameter(format!("segment end {t} is not a grid node")))?;
    Ok((i0, i1))
}

/// Jumps belonging to the segment with nodes `(i0, i1]`; a jump at time zero
/// belongs to the first segment.
fn segment_jumps(path: &PathState, i0: usize, i1: usize) -> impl Iterator<Item = &crate::path::PreJump> {
    path.pre_jump
        .iter()
        .filter(move |p| (p.node > i0 || (i0 == 0 && p.node == 0)) && p.node <= i1)
}

/// `(L, J, K, A)` on `[tau, t]`; both ends must be grid nodes.
pub fn segment_functionals(
    ctx: &WeightContext<'_>,
    path: &PathState,
    tau: f64,
    t: f64,
    mode: WeightMode,
) -> Result<SegmentFunctionals> {
    let (i0, i1) = segment_nodes(path, tau, t)?;
    let (tau, t) = (path.times[i0], path.times[i1]);
    let mut l = 0.0;
    if mode != WeightMode::JumpOnly {
        for k in i0..i1 {
            let a = ctx.model.continuous(path.x[k]).a;
            if a == 0.0 {
                return Err(Error::WeightUndefined("diffusion coefficient vanishes".into()));
            }
            l += path.dw[k] * path.z[k] / a;
        }
    }
    let mut seg = SegmentFunctionals {
        tau,
        t,
        l,
        j: 0.0,
        k: 0.0,
        a: t - tau,
        jump_sq: 0.0,
        j_jumps: 0.0,
        j_flux: 0.0,
        n_jumps: 0,
    };
    if mode == WeightMode::DiffusionOnly {
        return Ok(seg);
    }
    for p in segment_jumps(path, i0, i1) {
        let s = NodeState { x: p.x, z: p.z, dz: p.dz };
        let (v, v_z) = ctx.v(s, p.mark)?;
        let (k, k_z) = ctx.rho(p.mark);
        seg.jump_sq += k;
        seg.k += k_z * v;
        seg.j_jumps += ctx.levy.score_unchecked(p.mark) * v + v_z;
        seg.n_jumps += 1;
    }
    for k in i0..i1 {
        let dt = path.times[k + 1] - path.times[k];
        let f0 = ctx.flux(node_state(path, k))?;
        let f1 = ctx.flux(left_state(path, k + 1))?;
        seg.j_flux += 0.5 * (f0 + f1) * dt;
    }
    seg.j = seg.j_jumps - seg.j_flux;
    seg.a = match mode {
        WeightMode::JumpOnly => seg.jump_sq,
        _ => (t - tau) + seg.jump_sq,
    };
    if mode == WeightMode::JumpOnly && seg.a == 0.0 {
        return Err(Error::WeightUndefined(format!("no jumps on [{tau}, {t}]")));
    }
    Ok(seg)
}

/// First-order weight on `[0, T]`.
pub fn gamma1(ctx: &WeightContext<'_>, path: &PathState, mode: WeightMode) -> Result<f64> {
    let seg = segment_functionals(ctx, path, 0.0, horizon(path), mode)?;
    Ok(seg.gamma1(mode))
}

fn horizon(path: &PathState) -> f64 {
    path.times[path.times.len() - 1]
}

/// Components of the parameter weight over `[0, T]`.
pub fn vega_functionals(
    ctx: &WeightContext<'_>,
    path: &PathState,
    p: Param,
    mode: WeightMode,
) -> Result<VegaFunctionals> {
    let model = ctx.model;
    model.param(p.name())?;
    let t_end = horizon(path);
    let n = path.n_nodes();
    let depends_a = model.diffusion_depends_on(p);
    let mut out = VegaFunctionals { l: 0.0, g: 0.0, r: 0.0, q: 0.0, j: 0.0 };
    match mode {
        WeightMode::Full | WeightMode::DiffusionOnly => {
            if depends_a && !model.deterministic_f_epsilon(p) {
                return Err(Error::Unsupported(format!(
                    "the weight for {p} needs the Malliavin derivative of a stochastic integrand; use the finite-difference estimator"
                )));
            }
            if mode == WeightMode::DiffusionOnly && path.pre_jump.iter().any(|j| {
                model.jump_param(p, j.x, j.mark).b != 0.0
            }) {
                return Err(Error::Unsupported(format!(
                    "{p} enters the jump coefficient; the diffusion-only weight does not cover it"
                )));
            }
            let f_at = |x: f64, u: f64| u * model.continuous_param(p, x).a;
            let mut l_full = 0.0;
            for k in 0..n - 1 {
                let x = path.x[k];
                let a = model.continuous(x).a;
                if a == 0.0 {
                    return Err(Error::WeightUndefined("diffusion coefficient vanishes".into()));
                }
                let e = model.continuous_param(p, x);
                let (dk, _) = model.jump_factor_param(p, x);
                let f0 = path.u[k] * (e.a0 - ctx.band_m1 * dk);
                let za = path.z[k] / a;
                out.l += path.dw[k] * za * f0;
                l_full += path.dw[k] * za;
                if depends_a {
                    let f_left = f_at(x, path.u[k]);
                    let (xr, zr, _) = path.left_limit(k + 1);
                    let f_right = f_at(xr, 1.0 / zr);
                    out.g += 0.5 * (f_left + f_right) * path.dw[k];
                    out.q += za * f_left * (path.times[k + 1] - path.times[k]);
                }
            }
            out.r = l_full * out.g / t_end;
            out.q /= t_end;
        }
        WeightMode::JumpOnly => {
            for k in 0..n - 1 {
                let x = path.x[k];
                let e = model.continuous_param(p, x);
                let (dk, _) = model.jump_factor_param(p, x);
                if e.a != 0.0 || e.a0 - ctx.band_m1 * dk != 0.0 {
                    return Err(Error::Unsupported(format!(
                        "{p} enters the drift or diffusion; the jump-only weight does not cover it"
                    )));
                }
            }
        }
    }
    if mode != WeightMode::DiffusionOnly {
        let mut sum = 0.0;
        for jp in &path.pre_jump {
            let s = NodeState { x: jp.x, z: jp.z, dz: jp.dz };
            let (v, v_z) = ctx.v_tilde(p, s, jp.mark)?;
            sum += ctx.levy.score_unchecked(jp.mark) * v + v_z;
        }
        let mut flux = 0.0;
        for k in 0..n - 1 {
            let dt = path.times[k + 1] - path.times[k];
            flux += 0.5
                * (ctx.flux_tilde(p, node_state(path, k))? + ctx.flux_tilde(p, left_state(path, k + 1))?)
                * dt;
        }
        out.j = sum - flux;
    }
    Ok(out)
}

/// Parameter weight over `[0, T]`.
pub fn gamma2(ctx: &WeightContext<'_>, path: &PathState, p: Param, mode: WeightMode) -> Result<f64> {
    Ok(vega_functionals(ctx, path, p, mode)?.weight(mode))
}

/// `F` path integrals on `[0, T/2]`; `a_first` is `A` on that segment.
pub fn gamma_tensors(
    ctx: &WeightContext<'_>,
    path: &PathState,
    a_first: f64,
    mode: WeightMode,
    form: Gamma3Form,
) -> Result<GammaTensors> {
    let mid = path
        .node_of(0.5 * horizon(path))
        .ok_or_else(|| Error::InvalidParameter("midpoint is not a grid node".into()))?;
    let mut out = GammaTensors { f1_dw: 0.0, div_jumps: 0.0, div_compensated: 0.0 };
    if mode != WeightMode::JumpOnly {
        for k in 0..mid {
            let x = path.x[k];
            let a = ctx.model.continuous(x).a;
            if a == 0.0 {
                return Err(Error::WeightUndefined("diffusion coefficient vanishes".into()));
            }
            let f1 = ctx.model.inv_a_y(x) * path.z[k] * path.z[k] + path.dz[k] / a;
            out.f1_dw += f1 * path.dw[k];
        }
    }
    if mode == WeightMode::DiffusionOnly {
        return Ok(out);
    }
    let mut weighted_jumps = 0.0;
    for jp in segment_jumps(path, 0, mid) {
        let s = NodeState { x: jp.x, z: jp.z, dz: jp.dz };
        let d = ctx.divergence(s, jp.mark, form)?;
        out.div_jumps += d;
        weighted_jumps += d / (a_first + ctx.rho(jp.mark).0);
    }
    let quad = ctx.levy.jump_quadrature();
    let mut compensator = 0.0;
    let integral_at = |s: NodeState| -> Result<f64> {
        let j = ctx.model.jump(s.x, 1.0);
        if j.b_yy == 0.0 && j.b_zy == 0.0 && j.b_zyy == 0.0 && s.dz == 0.0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for (&z, &w) in quad.nodes.iter().zip(&quad.weights) {
            acc += w * ctx.divergence(s, z, form)? / (a_first + ctx.rho(z).0);
        }
        Ok(acc)
    };
    for k in 0..mid {
        let dt = path.times[k + 1] - path.times[k];
        compensator += 0.5 * (integral_at(node_state(path, k))? + integral_at(left_state(path, k + 1))?) * dt;
    }
    out.div_compensated = weighted_jumps - compensator;
    Ok(out)
}

/// Second-order weight with the split at `T/2`.
pub fn gamma3(ctx: &WeightContext<'_>, path: &PathState, mode: WeightMode, form: Gamma3Form) -> Result<f64> {
    let t_end = horizon(path);
    let s1 = segment_functionals(ctx, path, 0.0, 0.5 * t_end, mode)?;
    let s2 = segment_functionals(ctx, path, 0.5 * t_end, t_end, mode)?;
    let tensors = gamma_tensors(ctx, path, s1.a, mode, form)?;
    Ok(assemble_gamma3(&s1, &s2, &tensors, s1.k, s2.k, mode, form))
}

fn assemble_gamma3(
    s1: &SegmentFunctionals,
    s2: &SegmentFunctionals,
    t: &GammaTensors,
    k1: f64,
    k2: f64,
    mode: WeightMode,
    form: Gamma3Form,
) -> f64 {
    let g1 = (s1.l - s1.j) / s1.a + k1 / (s1.a * s1.a);
    let g2 = (s2.l - s2.j) / s2.a + k2 / (s2.a * s2.a);
    match mode {
        WeightMode::DiffusionOnly => s2.l * s1.l / (s2.a * s1.a) + t.f1_dw / s1.a,
        _ => {
            let head = match form {
                Gamma3Form::Theorem => {
                    (g2 + k2 / (s2.a * s1.a)) * g1 + k2 * k1 / (s2.a * s1.a.powi(3))
                }
                Gamma3Form::Corrected => g2 * g1,
            };
            head - t.div_compensated + (t.f1_dw + t.div_jumps) / s1.a
        }
    }
}

/// Chain rule from the log-state to the spot `x`: order 1 gives `w / x`, order
/// 2 gives `(w - w1) / x^2` where `w1` is the first-order log-state weight.
pub fn geometric_transform(order: u8, w: f64, w1: Option<f64>, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("spot must be > 0, got {x}")));
    }
    match order {
        1 => Ok(w / x),
        2 => {
            let w1 = w1.ok_or_else(|| {
                Error::InvalidParameter("second-order transform needs the first-order weight".into())
            })?;
            Ok((w - w1) / (x * x))
        }
        _ => Err(Error::InvalidParameter(format!("transform order must be 1 or 2, got {order}"))),
    }
}

/// Weights with the `K`, `J` and sign conventions written for the additive
/// example, in log-state coordinates.
pub fn example_weights(ctx: &WeightContext<'_>, path: &PathState) -> Result<ExampleWeights> {
    let model = ctx.model;
    if !matches!(model.kind(), ModelKind::AdditiveLevy | ModelKind::GeometricLevy) {
        return Err(Error::Unsupported("example forms exist only for the additive model".into()));
    }
    let sigma1 = model.param_value(Param::Sigma1);
    let sigma2 = model.param_value(Param::Sigma2);
    let t_end = horizon(path);
    let half = 0.5 * t_end;
    let s1 = segment_functionals(ctx, path, 0.0, half, WeightMode::Full)?;
    let s2 = segment_functionals(ctx, path, half, t_end, WeightMode::Full)?;
    let mid = path.node_of(half).expect("midpoint node");
    let k_example = |i0: usize, i1: usize| -> f64 {
        segment_jumps(path, i0, i1).map(|p| p.mark / sigma2).sum()
    };
    let (k1, k2) = (k_example(0, mid), k_example(mid, path.n_nodes() - 1));
    let l = s1.l + s2.l;
    let j = s1.j + s2.j;
    let a = s1.a + s2.a;
    let delta = (l - j) / a + (k1 + k2) / (a * a);
    let tensors = GammaTensors { f1_dw: 0.0, div_jumps: 0.0, div_compensated: 0.0 };
    let gamma = assemble_gamma3(&s1, &s2, &tensors, k1, k2, WeightMode::Full, Gamma3Form::Theorem);
    let w_t: f64 = path.dw.iter().sum();
    let l_ex = -w_t / sigma1 * ctx.band_m1;
    let mut j_jumps = 0.0;
    for p in &path.pre_jump {
        let z = p.mark;
        let (k, k_z) = ctx.rho(z);
        j_jumps += (ctx.levy.score_unchecked(z) * k + k_z) / sigma2;
    }
    let d = ctx.delta;
    let flux = if d > 0.0 { (ctx.g_neg * ctx.rho(-d).0 - ctx.g_pos * ctx.rho(d).0) / sigma2 } else { 0.0 };
    let vega_sigma2 = l_ex + (j_jumps - flux * t_end);
    Ok(ExampleWeights { delta, gamma, vega_sigma2 })
}

/// Which weights to evaluate per path.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRequest {
    pub delta: bool,
    pub gamma: bool,
    pub vegas: Vec<Param>,
    pub mode: WeightMode,
    pub form: Gamma3Form,
    pub kernel: JumpKernel,
    pub example_forms: bool,
}

impl WeightRequest {
    /// Nothing requested yet; theorem-form gamma with the shifted kernel.
    pub fn new(mode: WeightMode) -> Self {
        WeightRequest {
            delta: false,
            gamma: false,
            vegas: Vec::new(),
            mode,
            form: Gamma3Form::Theorem,
            kernel: JumpKernel::Shifted,
            example_forms: false,
        }
    }
}

/// Weights of one path, already in spot coordinates for geometric models.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWeights {
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub vega: Vec<f64>,
    pub example: Option<ExampleWeights>,
}

/// Evaluates the requested weights; `spot` is the initial value of the
/// underlying and only matters for geometric models.
pub fn path_weights(
    ctx: &WeightContext<'_>,
    path: &PathState,
    req: &WeightRequest,
    spot: f64,
) -> Result<PathWeights> {
    let t_end = horizon(path);
    let half = 0.5 * t_end;
    let geometric = ctx.model.is_geometric();
    let mut out = PathWeights { delta: None, gamma: None, vega: Vec::new(), example: None };
    if req.delta && !req.gamma {
        let whole = segment_functionals(ctx, path, 0.0, t_end, req.mode)?;
        let g1 = whole.gamma1(req.mode);
        out.delta = Some(if geometric { geometric_transform(1, g1, None, spot)? } else { g1 });
    }
    if req.gamma {
        // The second-order weight needs both halves; the first-order one is
        // reused from them so that delta and gamma share their exclusions.
        let s1 = segment_functionals(ctx, path, 0.0, half, req.mode)?;
        let s2 = segment_functionals(ctx, path, half, t_end, req.mode)?;
        let whole = if req.mode == WeightMode::JumpOnly {
            segment_functionals(ctx, path, 0.0, t_end, req.mode)?
        } else {
            SegmentFunctionals {
                tau: 0.0,
                t: t_end,
                l: s1.l + s2.l,
                j: s1.j + s2.j,
                k: s1.k + s2.k,
                a: s1.a + s2.a,
                jump_sq: s1.jump_sq + s2.jump_sq,
                j_jumps: s1.j_jumps + s2.j_jumps,
                j_flux: s1.j_flux + s2.j_flux,
                n_jumps: s1.n_jumps + s2.n_jumps,
            }
        };
        let g1 = whole.gamma1(req.mode);
        if req.delta {
            out.delta = Some(if geometric { geometric_transform(1, g1, None, spot)? } else { g1 });
        }
        let tensors = gamma_tensors(ctx, path, s1.a, req.mode, req.form)?;
        let g3 = assemble_gamma3(&s1, &s2, &tensors, s1.k, s2.k, req.mode, req.form);
        out.gamma = Some(if geometric { geometric_transform(2, g3, Some(g1), spot)? } else { g3 });
    }
    for &p in &req.vegas {
        out.vega.push(gamma2(ctx, path, p, req.mode)?);
    }
    if req.example_forms {
        let mut ex = example_weights(ctx, path)?;
        if geometric {
            let d = ex.delta;
            ex.delta = geometric_transform(1, d, None, spot)?;
            ex.gamma = geometric_transform(2, ex.gamma, Some(d), spot)?;
        }
        out.example = Some(ex);
    }
    Ok(out)
}
