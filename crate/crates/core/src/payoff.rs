//! Payoffs built from finitely many linear pieces on intervals.

use crate::error::{Error, Result};

/// `coef * (intercept + slope * x)` on `lo <= x < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub coef: f64,
    pub slope: f64,
    pub intercept: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
    /// Pays one when the underlying ends above the strike.
    Digital { strike: f64 },
    Constant { value: f64 },
    /// `f(x) = x`; useful for checking flows.
    Linear,
    Piecewise(Vec<Piece>),
}

impl Payoff {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("payoff {what} must be finite")))
            }
        };
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } | Payoff::Digital { strike } => {
                finite(*strike, "strike")
            }
            Payoff::Constant { value } => finite(*value, "value"),
            Payoff::Linear => Ok(()),
            Payoff::Piecewise(pieces) => {
                if pieces.is_empty() {
                    return Err(Error::InvalidParameter("piecewise payoff needs a piece".into()));
                }
                for p in pieces {
                    finite(p.coef, "coefficient")?;
                    finite(p.slope, "slope")?;
                    finite(p.intercept, "intercept")?;
                    if p.lo.is_nan() || p.hi.is_nan() || !(p.lo < p.hi) {
                        return Err(Error::InvalidParameter(
                            "piece interval must satisfy lo < hi".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Put { strike } => (strike - x).max(0.0),
            Payoff::Digital { strike } => {
                if x > *strike {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::Constant { value } => *value,
            Payoff::Linear => x,
            Payoff::Piecewise(pieces) => pieces
                .iter()
                .filter(|p| x >= p.lo && x < p.hi)
                .map(|p| p.coef * (p.intercept + p.slope * x))
                .sum(),
        }
    }
}
