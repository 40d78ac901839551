//! Closed-form prices and Greeks for log-normal models and the Merton
//! jump-diffusion with Gaussian log-jumps.
//!
//! Both models are parameterised by the drift of the log price, so that the
//! sensitivity to the volatility is taken with that drift held fixed.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContractKind {
    Call,
    Put,
    /// Pays one when the spot ends above the strike.
    Digital,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contract {
    pub kind: ContractKind,
    pub strike: f64,
    pub maturity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValues {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Derivative in the diffusion volatility at fixed log drift.
    pub vega: f64,
    /// Upper bound on the price contribution of the omitted series terms.
    pub remainder_bound: f64,
}

/// `log S_T = log S_0 + log_drift * T + sigma W_T + sum of jump_scale * Y_i`
/// with `Y_i ~ N(jump_mean, jump_sd^2)` arriving at rate `intensity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MertonParams {
    pub sigma: f64,
    pub log_drift: f64,
    pub intensity: f64,
    pub jump_mean: f64,
    pub jump_sd: f64,
    pub jump_scale: f64,
    pub n_terms: usize,
}

pub const DEFAULT_MERTON_TERMS: usize = 50;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Price, spot derivatives and variance derivative when `log S_T ~ N(m, v)`
/// with `m = log spot + shift`.
fn lognormal_term(spot: f64, shift: f64, v: f64, c: &Contract) -> [f64; 4] {
    let m = spot.ln() + shift;
    let sv = v.sqrt();
    let k = c.strike;
    let fwd = (m + 0.5 * v).exp();
    let d1 = (m - k.ln() + v) / sv;
    let d2 = d1 - sv;
    let (n1, p1, p2) = (normal_cdf(d1), normal_pdf(d1), normal_pdf(d2));
    match c.kind {
        ContractKind::Call => [
            fwd * n1 - k * normal_cdf(d2),
            fwd * n1 / spot,
            fwd * p1 / (spot * spot * sv),
            0.5 * fwd * n1 + k * p2 / (2.0 * sv),
        ],
        ContractKind::Put => [
            k * normal_cdf(-d2) - fwd * normal_cdf(-d1),
            fwd * (n1 - 1.0) / spot,
            fwd * p1 / (spot * spot * sv),
            0.5 * fwd * (n1 - 1.0) + k * p2 / (2.0 * sv),
        ],
        ContractKind::Digital => [
            normal_cdf(d2),
            p2 / (spot * sv),
            -p2 * d1 / (spot * spot * v),
            -p2 * d2 / (2.0 * v),
        ],
    }
}

fn check_inputs(spot: f64, sigma: f64, c: &Contract) -> Result<()> {
    if !(spot > 0.0) {
        return Err(Error::Domain(format!("spot must be > 0, got {spot}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("volatility must be > 0, got {sigma}")));
    }
    if !(c.strike > 0.0) || !(c.maturity > 0.0) {
        return Err(Error::Domain("strike and maturity must be > 0".into()));
    }
    Ok(())
}

/// Log-normal model with `log S_T ~ N(log S_0 + log_drift T, sigma^2 T)`.
pub fn black_scholes(spot: f64, sigma: f64, log_drift: f64, c: &Contract) -> Result<OracleValues> {
    check_inputs(spot, sigma, c)?;
    let t = c.maturity;
    let [price, delta, gamma, dv] = lognormal_term(spot, log_drift * t, sigma * sigma * t, c);
    Ok(OracleValues { price, delta, gamma, vega: dv * 2.0 * sigma * t, remainder_bound: 0.0 })
}

/// Upper tail `P(N >= n)` for `N ~ Poisson(mean)`.
fn poisson_tail(mean: f64, n: usize) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mut log_p = -mean + n as f64 * mean.ln() - ln_factorial(n);
    let mut total = 0.0;
    for i in n..n + 10_000 {
        let p = log_p.exp();
        total += p;
        if i as f64 > mean && p < 1e-18 * total.max(1e-300) {
            break;
        }
        log_p += mean.ln() - ((i + 1) as f64).ln();
    }
    total.min(1.0)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Poisson mixture of log-normal terms, truncated after `n_terms` terms.
pub fn merton_series(spot: f64, p: &MertonParams, c: &Contract) -> Result<OracleValues> {
    check_inputs(spot, p.sigma, c)?;
    if p.n_terms < 1 {
        return Err(Error::InvalidParameter("series needs at least one term".into()));
    }
    if !(p.intensity >= 0.0) || !(p.jump_sd >= 0.0) {
        return Err(Error::Domain("intensity and jump sd must be >= 0".into()));
    }
    let t = c.maturity;
    let lt = p.intensity * t;
    let (mu, s2) = (p.jump_scale * p.jump_mean, (p.jump_scale * p.jump_sd).powi(2));
    let mut acc = [0.0; 4];
    let mut log_w = -lt;
    for n in 0..p.n_terms {
        let w = if lt == 0.0 { if n == 0 { 1.0 } else { 0.0 } } else { log_w.exp() };
        if w > 0.0 {
            let v = p.sigma * p.sigma * t + n as f64 * s2;
            let term = lognormal_term(spot, p.log_drift * t + n as f64 * mu, v, c);
            for i in 0..4 {
                acc[i] += w * term[i];
            }
        }
        if lt > 0.0 {
            log_w += lt.ln() - ((n + 1) as f64).ln();
        }
    }
    let remainder_bound = match c.kind {
        ContractKind::Call => {
            let q = (mu + 0.5 * s2).exp();
            let f0 = (spot.ln() + p.log_drift * t + 0.5 * p.sigma * p.sigma * t).exp();
            f0 * (lt * (q - 1.0)).exp() * poisson_tail(lt * q, p.n_terms)
        }
        ContractKind::Put => c.strike * poisson_tail(lt, p.n_terms),
        ContractKind::Digital => poisson_tail(lt, p.n_terms),
    };
    Ok(OracleValues {
        price: acc[0],
        delta: acc[1],
        gamma: acc[2],
        vega: acc[3] * 2.0 * p.sigma * t,
        remainder_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atm_delta() {
        let c = Contract { kind: ContractKind::Call, strike: 100.0, maturity: 1.0 };
        let v = black_scholes(100.0, 0.2, -0.02, &c).unwrap();
        assert!((v.delta - normal_cdf(0.1)).abs() < 1e-13);
        assert!((v.delta - 0.539_827_837_277_029).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = Contract { kind: ContractKind::Call, strike: 100.0, maturity: 1.0 };
        assert!(black_scholes(0.0, 0.2, 0.0, &c).is_err());
        assert!(black_scholes(100.0, 0.0, 0.0, &c).is_err());
        let p = MertonParams {
            sigma: 0.2,
            log_drift: 0.0,
            intensity: 1.0,
            jump_mean: 0.0,
            jump_sd: 0.1,
            jump_scale: 1.0,
            n_terms: 0,
        };
        assert!(merton_series(100.0, &p, &c).is_err());
    }

    #[test]
    fn poisson_tail_sums_to_one() {
        assert!((poisson_tail(2.5, 0) - 1.0).abs() < 1e-14);
        let p0 = (-2.5f64).exp();
        assert!((poisson_tail(2.5, 1) - (1.0 - p0)).abs() < 1e-14);
    }
}
