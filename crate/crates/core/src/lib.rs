//! Monte Carlo Greeks for one-dimensional jump-diffusions driven by a Brownian
//! motion and a pure-jump Lévy process.
//!
//! The library is split along the computation:
//!
//! - [`levy`]: Lévy measures, their moments, and jump-train sampling.
//! - [`coeff`]: coefficient models with analytic derivatives.
//! - [`path`]: Euler simulation of the state together with its first and second
//!   variations and parameter sensitivities.
//! - [`weights`]: per-path Malliavin weights for delta, vega and gamma.
//! - [`estimator`]: deterministic parallel Monte Carlo reduction, finite
//!   differences and convergence studies.
//! - [`oracle`]: closed-form Black-Scholes and Merton reference values.
//! - [`cli`]: configuration parsing, validation and report writers.

// Negated comparisons are the NaN-rejecting form of parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coeff;
pub mod error;
pub mod estimator;
pub mod levy;
pub mod oracle;
pub mod path;
pub mod payoff;
pub mod quadrature;
pub mod stats;
pub mod tolerances;
pub mod weights;

pub use coeff::{CoefficientModel, ModelKind, ParamVector};
pub use error::{Error, Result};
pub use estimator::{EstimatorReport, Experiment, GreekKind};
pub use levy::{LevyFamily, LevyMeasure, OrderExponent, Region};
pub use path::{GridSpec, PathState};
pub use payoff::Payoff;
pub use weights::{Gamma3Form, JumpKernel, WeightMode, WeightRequest};
