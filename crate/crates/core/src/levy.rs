//! Lévy measures on the real line minus the origin: densities, scores,
//! moments, the small-jump order exponent, and truncated jump sampling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate, integrate_to_infinity};
use crate::tolerances::{
    INVERSE_CDF_POINTS, INVERSE_CDF_TAIL, JUMP_QUAD_PANELS, ORDER_EXPONENT_FLOOR,
};

/// Parametric family of the Lévy density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevyFamily {
    /// `g(z) = intensity * N(z; mean, sd^2)`.
    CompoundPoissonGaussian { intensity: f64, mean: f64, sd: f64 },
    /// `g(z) = scale * exp(-lambda_pos z) z^(-1-stability)` for `z > 0`, and the
    /// mirror image with `lambda_neg` for `z < 0`.
    TemperedStable { scale: f64, stability: f64, lambda_pos: f64, lambda_neg: f64 },
}

impl LevyFamily {
    pub fn is_finite_activity(&self) -> bool {
        matches!(self, LevyFamily::CompoundPoissonGaussian { .. })
    }
}

/// Integration region for [`LevyMeasure::nu_moment`], described by |z|.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    All,
    /// `|z| <= 1`
    Inner,
    /// `|z| > 1`
    Outer,
    /// `delta <= |z| <= 1`
    Band,
    /// `|z| < delta`
    Below,
}

/// Result of [`LevyMeasure::order_exponent_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderExponent {
    Estimate(f64),
    Fails,
}

/// Ordered jump events of one path on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpTrain {
    pub times: Vec<f64>,
    pub marks: Vec<f64>,
    pub horizon: f64,
}

impl JumpTrain {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone)]
struct SignTable {
    mass: f64,
    cdf: Vec<f64>,
    log_z: Vec<f64>,
    slope: Vec<f64>,
}

impl SignTable {
    fn empty() -> Self {
        SignTable { mass: 0.0, cdf: Vec::new(), log_z: Vec::new(), slope: Vec::new() }
    }

    fn inverse(&self, u: f64) -> f64 {
        let target = u * self.cdf[self.cdf.len() - 1];
        let k = match self.cdf.partition_point(|&c| c <= target) {
            0 => 0,
            i if i >= self.cdf.len() => self.cdf.len() - 2,
            i => i - 1,
        };
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        let h = c1 - c0;
        if h <= 0.0 {
            return self.log_z[k].exp();
        }
        let t = (target - c0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * self.log_z[k]
            + (t3 - 2.0 * t2 + t) * h * self.slope[k]
            + (-2.0 * t3 + 3.0 * t2) * self.log_z[k + 1]
            + (t3 - t2) * h * self.slope[k + 1];
        y.exp()
    }
}

/// Fixed quadrature rule for `∫_{|z| >= delta} f(z) nu(dz)`, with the density
/// already folded into the weights.
#[derive(Debug, Clone, Default)]
pub struct JumpQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl JumpQuadrature {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

/// A Lévy measure with its simulation truncation level.
#[derive(Debug, Clone)]
pub struct LevyMeasure {
    family: LevyFamily,
    truncation: f64,
    pos: SignTable,
    neg: SignTable,
    z_max: (f64, f64),
    quad: JumpQuadrature,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

impl LevyMeasure {
    /// Validates the family and truncation and builds the sampling tables.
    pub fn new(family: LevyFamily, truncation: f64) -> Result<Self> {
        if !(truncation >= 0.0) || !truncation.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "truncation delta must be finite and >= 0, got {truncation}"
            )));
        }
        match family {
            LevyFamily::CompoundPoissonGaussian { intensity, mean, sd } => {
                if !(intensity >= 0.0) || !intensity.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "intensity must be finite and >= 0, got {intensity}"
                    )));
                }
                if !mean.is_finite() {
                    return Err(Error::InvalidParameter("mark mean must be finite".into()));
                }
                if !(sd > 0.0) || !sd.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "mark sd must be finite and > 0, got {sd}"
                    )));
                }
            }
            LevyFamily::TemperedStable { scale, stability, lambda_pos, lambda_neg } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidParameter(format!("scale must be > 0, got {scale}")));
                }
                if !(stability > 0.0 && stability < 2.0) {
                    return Err(Error::InvalidParameter(format!(
                        "stability must lie in (0, 2), got {stability}"
                    )));
                }
                if !(lambda_pos > 0.0 && lambda_neg > 0.0)
                    || !lambda_pos.is_finite()
                    || !lambda_neg.is_finite()
                {
                    return Err(Error::InvalidParameter(
                        "tempering rates must be finite and > 0".into(),
                    ));
                }
                if truncation == 0.0 {
                    return Err(Error::InvalidParameter(
                        "tempered-stable measure has infinite activity; truncation delta must be > 0"
                            .into(),
                    ));
                }
            }
        }
        let mut m = LevyMeasure {
            family,
            truncation,
            pos: SignTable::empty(),
            neg: SignTable::empty(),
            z_max: (0.0, 0.0),
            quad: JumpQuadrature::default(),
        };
        m.z_max = (m.tail_cutoff(1.0), m.tail_cutoff(-1.0));
        if let LevyFamily::TemperedStable { .. } = family {
            m.pos = m.build_table(1.0);
            m.neg = m.build_table(-1.0);
        }
        m.quad = m.build_quadrature();
        Ok(m)
    }

    pub fn family(&self) -> LevyFamily {
        self.family
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Largest simulated jump size on each side, `(positive, negative)` as
    /// magnitudes.
    pub fn z_max(&self) -> (f64, f64) {
        self.z_max
    }

    /// Fixed rule for per-step integrals over the simulated jump sizes.
    pub fn jump_quadrature(&self) -> &JumpQuadrature {
        &self.quad
    }

    /// Lévy density `g(z)`.
    pub fn density(&self, z: f64) -> Result<f64> {
        if z == 0.0 {
            return Err(Error::Domain("density is undefined at z = 0".into()));
        }
        Ok(self.density_unchecked(z))
    }

    pub(crate) fn density_unchecked(&self, z: f64) -> f64 {
        match self.family {
            LevyFamily::CompoundPoissonGaussian { intensity, mean, sd } => {
                let u = (z - mean) / sd;
                intensity * (-0.5 * u * u).exp() / (sd * (2.0 * PI).sqrt())
            }
            LevyFamily::TemperedStable { scale, stability, lambda_pos, lambda_neg } => {
                let (lam, r) = if z > 0.0 { (lambda_pos, z) } else { (lambda_neg, -z) };
                scale * (-lam * r).exp() * r.powf(-1.0 - stability)
            }
        }
    }

    /// Score `g'(z) / g(z)`.
    pub fn score(&self, z: f64) -> Result<f64> {
        if z == 0.0 {
            return Err(Error::Domain("score is undefined at z = 0".into()));
        }
        Ok(self.score_unchecked(z))
    }

    pub(crate) fn score_unchecked(&self, z: f64) -> f64 {
        match self.family {
            LevyFamily::CompoundPoissonGaussian { mean, sd, .. } => -(z - mean) / (sd * sd),
            LevyFamily::TemperedStable { stability, lambda_pos, lambda_neg, .. } => {
                if z > 0.0 {
                    -lambda_pos - (1.0 + stability) / z
                } else {
                    lambda_neg - (1.0 + stability) / z
                }
            }
        }
    }

    /// `∫_lo^hi r^p g(sign * r) dr` for `0 <= lo < hi <= inf`.
    fn radial_integral(&self, p: f64, sign: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(hi > lo) {
            return Ok(0.0);
        }
        match self.family {
            LevyFamily::CompoundPoissonGaussian { intensity, mean, sd } => {
                if intensity == 0.0 {
                    return Ok(0.0);
                }
                // Integrate the Gaussian in r over the window where it is not negligible.
                let center = sign * mean;
                let (wlo, whi) = ((center - 40.0 * sd).max(lo), (center + 40.0 * sd).min(hi));
                if !(whi > wlo) {
                    return Ok(0.0);
                }
                let f = |r: f64| r.powf(p) * self.density_unchecked(sign * r);
                // Split at the mode so narrow peaks are resolved.
                let mut cuts = vec![wlo];
                for c in [center - sd, center, center + sd] {
                    if c > wlo && c < whi {
                        cuts.push(c);
                    }
                }
                cuts.push(whi);
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    total += integrate(f, w[0], w[1]).value;
                }
                Ok(total)
            }
            LevyFamily::TemperedStable { scale, stability, lambda_pos, lambda_neg } => {
                let lam = if sign > 0.0 { lambda_pos } else { lambda_neg };
                let s = p - stability;
                ts_integral(s, lam, lo, hi).map(|v| scale * v)
            }
        }
    }

    /// `nu({|z| >= level})`.
    pub fn mass_above(&self, level: f64) -> Result<f64> {
        if level.is_infinite() {
            return Ok(0.0);
        }
        match self.family {
            LevyFamily::CompoundPoissonGaussian { intensity, mean, sd } => {
                let level = level.max(0.0);
                let inside = normal_cdf((level - mean) / sd) - normal_cdf((-level - mean) / sd);
                Ok(intensity * (1.0 - inside).max(0.0))
            }
            LevyFamily::TemperedStable { .. } => {
                if !(level > 0.0) {
                    return Err(Error::Domain(
                        "mass above zero is infinite for an infinite-activity measure".into(),
                    ));
                }
                Ok(self.radial_integral(0.0, 1.0, level, f64::INFINITY)?
                    + self.radial_integral(0.0, -1.0, level, f64::INFINITY)?)
            }
        }
    }

    /// Mass of the simulated jumps on one side, `nu({z >= delta})` or
    /// `nu({z <= -delta})`.
    pub fn side_mass(&self, sign: f64) -> f64 {
        let lo = self.truncation;
        match self.family {
            LevyFamily::CompoundPoissonGaussian { intensity, mean, sd } => {
                if sign > 0.0 {
                    intensity * (1.0 - normal_cdf((lo - mean) / sd))
                } else {
                    intensity * normal_cdf((-lo - mean) / sd)
                }
            }
            LevyFamily::TemperedStable { .. } => {
                if sign > 0.0 {
                    self.pos.mass
                } else {
                    self.neg.mass
                }
            }
        }
    }

    /// `∫_region z^p nu(dz)` if `signed`, else `∫_region |z|^p nu(dz)`.
    pub fn nu_moment(&self, p: f64, region: Region, signed: bool) -> Result<f64> {
        let d = self.truncation;
        let (lo, hi) = match region {
            Region::All => (0.0, f64::INFINITY),
            Region::Inner => (0.0, 1.0),
            Region::Outer => (1.0, f64::INFINITY),
            Region::Band => (d, 1.0),
            Region::Below => (0.0, d),
        };
        if let LevyFamily::TemperedStable { stability, .. } = self.family {
            if lo == 0.0 && hi > 0.0 && p - stability <= 0.0 {
                return Err(Error::Domain(format!(
                    "moment of order {p} diverges near the origin for stability {stability}"
                )));
            }
        }
        let pos = self.radial_integral(p, 1.0, lo, hi)?;
        let neg = self.radial_integral(p, -1.0, lo, hi)?;
        let neg_sign = if signed {
            // (-r)^p for integer p; non-integer signed powers of negatives use the odd extension.
            if p.fract() == 0.0 && (p as i64) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        } else {
            1.0
        };
        Ok(pos + neg_sign * neg)
    }

    /// `{2^-k : k = 4..=12}`.
    pub fn default_rho_grid() -> Vec<f64> {
        (4..=12).map(|k| 0.5f64.powi(k)).collect()
    }

    /// Estimates the small-jump exponent from `I(rho) = ∫ min(|z/rho|^2, 1) nu(dz)`
    /// by a least-squares fit of `log I` against `log(1/rho)`.
    pub fn order_exponent_estimate(&self, rho_grid: &[f64]) -> Result<OrderExponent> {
        if rho_grid.len() < 2 || rho_grid.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::InvalidParameter(
                "rho grid needs at least two points in (0, 1)".into(),
            ));
        }
        let mut xs = Vec::with_capacity(rho_grid.len());
        let mut ys = Vec::with_capacity(rho_grid.len());
        for &rho in rho_grid {
            let inner = self.radial_integral(2.0, 1.0, 0.0, rho)?
                + self.radial_integral(2.0, -1.0, 0.0, rho)?;
            let outer = self.radial_integral(0.0, 1.0, rho, f64::INFINITY)?
                + self.radial_integral(0.0, -1.0, rho, f64::INFINITY)?;
            let i = inner / (rho * rho) + outer;
            if !(i > 0.0) {
                return Ok(OrderExponent::Fails);
            }
            xs.push((1.0 / rho).ln());
            ys.push(i.ln());
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        // A finite measure has I(rho) -> nu(R) whatever the fitted slope.
        if self.family.is_finite_activity() || slope < ORDER_EXPONENT_FLOOR {
            Ok(OrderExponent::Fails)
        } else {
            Ok(OrderExponent::Estimate(slope))
        }
    }

    /// Draws the jumps with `|z| >= delta` on `[0, horizon]`.
    pub fn sample_jumps<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> JumpTrain {
        let (mp, mn) = (self.side_mass(1.0), self.side_mass(-1.0));
        let mean = horizon * (mp + mn);
        let mut train = JumpTrain { times: Vec::new(), marks: Vec::new(), horizon };
        if !(mean > 0.0) {
            return train;
        }
        let count = Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0) as usize;
        let mut events: Vec<(f64, f64)> = Vec::with_capacity(count);
        for _ in 0..count {
            let t = horizon * rng.random::<f64>();
            let z = self.sample_mark(mp / (mp + mn), rng);
            events.push((t, z));
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        events.dedup_by(|a, b| a.0 == b.0);
        for (t, z) in events {
            train.times.push(t);
            train.marks.push(z);
        }
        train
    }

    fn sample_mark<R: Rng + ?Sized>(&self, p_pos: f64, rng: &mut R) -> f64 {
        match self.family {
            LevyFamily::CompoundPoissonGaussian { mean, sd, .. } => loop {
                let n: f64 = rng.sample(StandardNormal);
                let z = mean + sd * n;
                if z != 0.0 && z.abs() >= self.truncation {
                    return z;
                }
            },
            LevyFamily::TemperedStable { .. } => {
                let positive = rng.random::<f64>() < p_pos;
                let u: f64 = rng.random();
                if positive {
                    self.pos.inverse(u)
                } else {
                    -self.neg.inverse(u)
                }
            }
        }
    }

    /// Magnitude beyond which the simulated side carries negligible mass.
    fn tail_cutoff(&self, sign: f64) -> f64 {
        match self.family {
            LevyFamily::CompoundPoissonGaussian { mean, sd, .. } => {
                (sign * mean + 12.0 * sd).max(self.truncation + sd)
            }
            LevyFamily::TemperedStable { scale, stability, lambda_pos, lambda_neg } => {
                let lam = if sign > 0.0 { lambda_pos } else { lambda_neg };
                let d = self.truncation;
                let bound = |z: f64| scale * z.powf(-1.0 - stability) * (-lam * z).exp() / lam;
                let mass = self.radial_integral(0.0, sign, d, f64::INFINITY).unwrap_or(0.0);
                let target = INVERSE_CDF_TAIL * mass;
                let mut hi = d.max(1.0 / lam);
                while bound(hi) > target {
                    hi *= 2.0;
                }
                let mut lo = d;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if bound(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    fn build_table(&self, sign: f64) -> SignTable {
        let d = self.truncation;
        let zmax = if sign > 0.0 { self.z_max.0 } else { self.z_max.1 };
        let n = INVERSE_CDF_POINTS;
        let (l0, l1) = (d.ln(), zmax.ln());
        let log_z: Vec<f64> = (0..n).map(|k| l0 + (l1 - l0) * k as f64 / (n - 1) as f64).collect();
        let mut cdf = vec![0.0; n];
        for k in 1..n {
            let piece = self
                .radial_integral(0.0, sign, log_z[k - 1].exp(), log_z[k].exp())
                .unwrap_or(0.0);
            cdf[k] = cdf[k - 1] + piece;
        }
        // d(log z)/dF = 1 / (z g(z)); limited for monotonicity.
        let mut slope: Vec<f64> = log_z
            .iter()
            .map(|&lz| {
                let z = lz.exp();
                1.0 / (z * self.density_unchecked(sign * z))
            })
            .collect();
        for k in 0..n - 1 {
            let h = cdf[k + 1] - cdf[k];
            if h <= 0.0 {
                slope[k] = 0.0;
                slope[k + 1] = 0.0;
                continue;
            }
            let secant = (log_z[k + 1] - log_z[k]) / h;
            let (a, b) = (slope[k] / secant, slope[k + 1] / secant);
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                slope[k] = t * a * secant;
                slope[k + 1] = t * b * secant;
            }
        }
        let mass = self.radial_integral(0.0, sign, d, f64::INFINITY).unwrap_or(0.0);
        SignTable { mass, cdf, log_z, slope }
    }

    fn build_quadrature(&self) -> JumpQuadrature {
        let (x, w) = gauss_legendre(8);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let log_spaced = matches!(self.family, LevyFamily::TemperedStable { .. });
        for sign in [-1.0, 1.0] {
            let zmax = if sign > 0.0 { self.z_max.0 } else { self.z_max.1 };
            let lo = self.truncation;
            if !(zmax > lo) {
                continue;
            }
            let panels = JUMP_QUAD_PANELS;
            for k in 0..panels {
                let (a, b) = if log_spaced {
                    let (l0, l1) = (lo.ln(), zmax.ln());
                    (
                        l0 + (l1 - l0) * k as f64 / panels as f64,
                        l0 + (l1 - l0) * (k + 1) as f64 / panels as f64,
                    )
                } else {
                    (
                        lo + (zmax - lo) * k as f64 / panels as f64,
                        lo + (zmax - lo) * (k + 1) as f64 / panels as f64,
                    )
                };
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                for (xi, wi) in x.iter().zip(&w) {
                    let u = c + h * xi;
                    let (r, jac) = if log_spaced { (u.exp(), u.exp()) } else { (u, 1.0) };
                    if r == 0.0 {
                        continue;
                    }
                    let z = sign * r;
                    nodes.push(z);
                    weights.push(h * wi * jac * self.density_unchecked(z));
                }
            }
        }
        JumpQuadrature { nodes, weights }
    }
}

/// `∫_lo^hi z^(s-1) exp(-lam z) dz` for `0 <= lo < hi <= inf`.
fn ts_integral(s: f64, lam: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo == 0.0 {
        if s <= 0.0 {
            return Err(Error::Domain("integral diverges at the origin".into()));
        }
        // z = w^(1/s) removes the power singularity.
        let cut = hi.min(1.0);
        let head = integrate(|w: f64| (-lam * w.powf(1.0 / s)).exp(), 0.0, cut.powf(s)).value / s;
        let tail = if hi > 1.0 { ts_integral(s, lam, 1.0, hi)? } else { 0.0 };
        return Ok(head + tail);
    }
    let f = |z: f64| z.powf(s - 1.0) * (-lam * z).exp();
    if hi.is_infinite() {
        // Log-substitution up to where the exponential has decayed, then the remainder.
        let cut = lo.max(1.0 / lam).max(1.0);
        let head = if cut > lo { log_piece(s, lam, lo, cut) } else { 0.0 };
        let tail = integrate_to_infinity(f, cut).value;
        return Ok(head + tail);
    }
    Ok(log_piece(s, lam, lo, hi))
}

fn log_piece(s: f64, lam: f64, lo: f64, hi: f64) -> f64 {
    integrate(|u: f64| (s * u - lam * u.exp()).exp(), lo.ln(), hi.ln()).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ts(beta: f64, delta: f64) -> LevyMeasure {
        LevyMeasure::new(
            LevyFamily::TemperedStable {
                scale: 1.0,
                stability: beta,
                lambda_pos: 3.0,
                lambda_neg: 3.0,
            },
            delta,
        )
        .unwrap()
    }

    fn cp(intensity: f64, mean: f64, sd: f64) -> LevyMeasure {
        LevyMeasure::new(LevyFamily::CompoundPoissonGaussian { intensity, mean, sd }, 0.0)
            .unwrap()
    }

    #[test]
    fn gaussian_density_and_score() {
        let m = cp(2.0, 0.0, 0.5);
        let pdf = (-0.5f64).exp() / (0.5 * (2.0 * PI).sqrt());
        assert!((m.density(0.5).unwrap() - 2.0 * pdf).abs() < 1e-15);
        assert_eq!(m.score(0.5).unwrap(), -2.0);
        assert!(m.density(0.0).is_err());
        assert!(m.score(0.0).is_err());
        assert_eq!(cp(0.0, 0.0, 1.0).density(0.3).unwrap(), 0.0);
    }

    #[test]
    fn tempered_stable_score() {
        let m = ts(0.5, 0.05);
        assert!((m.score(1.0).unwrap() + 4.5).abs() < 1e-15);
        assert_eq!(m.score(0.7).unwrap(), -m.score(-0.7).unwrap());
    }

    #[test]
    fn tempered_stable_requires_truncation() {
        let r = LevyMeasure::new(
            LevyFamily::TemperedStable {
                scale: 1.0,
                stability: 0.5,
                lambda_pos: 3.0,
                lambda_neg: 3.0,
            },
            0.0,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(msg)) if msg.contains("infinite activity")));
    }

    #[test]
    fn mass_limits() {
        let m = cp(2.0, 0.1, 0.5);
        assert!((m.mass_above(1e-300).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(m.mass_above(f64::INFINITY).unwrap(), 0.0);
        assert_eq!(ts(0.5, 0.05).mass_above(f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_second_moment() {
        let m = cp(2.0, 0.0, 0.5);
        assert!((m.nu_moment(2.0, Region::All, true).unwrap() - 0.5).abs() < 1e-9);
        assert!(m.nu_moment(1.0, Region::Inner, true).unwrap().abs() < 1e-12);
    }

    #[test]
    fn divergent_moment_rejected() {
        let m = ts(1.2, 0.05);
        assert!(matches!(m.nu_moment(1.0, Region::Inner, false), Err(Error::Domain(_))));
        assert!(m.nu_moment(1.0, Region::Band, false).is_ok());
    }

    #[test]
    fn inverse_cdf_is_monotone_and_in_range() {
        let m = ts(0.5, 0.05);
        let mut prev = 0.0;
        for k in 0..=1000 {
            let z = m.pos.inverse(k as f64 / 1000.0);
            assert!(z >= prev - 1e-15);
            assert!(z >= 0.05 * (1.0 - 1e-12) && z <= m.z_max.0 * (1.0 + 1e-12));
            prev = z;
        }
    }

    #[test]
    fn empty_train_when_no_mass() {
        let m = cp(0.0, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(m.sample_jumps(1.0, &mut rng).is_empty());
    }

    #[test]
    fn jump_quadrature_reproduces_band_mass() {
        let m = ts(0.5, 0.05);
        let q = m.jump_quadrature().integrate(|_| 1.0);
        let exact = m.mass_above(0.05).unwrap();
        assert!((q / exact - 1.0).abs() < 1e-8, "{q} {exact}");
        let q2 = m.jump_quadrature().integrate(|z| z * z);
        let exact2 = m.nu_moment(2.0, Region::All, false).unwrap()
            - m.nu_moment(2.0, Region::Below, false).unwrap();
        assert!((q2 / exact2 - 1.0).abs() < 1e-8, "{q2} {exact2}");
    }
}
