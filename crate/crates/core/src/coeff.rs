//! Coefficient models `a0`, `a`, `b_z` for a scalar state with analytic
//! derivatives, and assumption checks on a test grid.
//!
//! Every built-in jump coefficient is linear in the mark, `b(y, z) = z k(y)`,
//! which lets the compensator drift be written through the first band moment.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tolerances::{ELLIPTICITY_FLOOR, INVERTIBILITY_FLOOR};

/// Built-in model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    /// `a0 = gamma`, `a = sigma1`, `b = sigma2 z`.
    AdditiveLevy,
    /// Same coefficients for the log-state; payoffs act on `exp(x)`.
    GeometricLevy,
    /// `a0 = gamma tanh y`, `a = sigma1 (1 + eta sin y)`,
    /// `b = sigma2 z (1 + eta_tilde cos y)`.
    NonlinearTest,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::AdditiveLevy => "additive-levy",
            ModelKind::GeometricLevy => "geometric-levy",
            ModelKind::NonlinearTest => "nonlinear-test",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "additive-levy" => Some(ModelKind::AdditiveLevy),
            "geometric-levy" => Some(ModelKind::GeometricLevy),
            "nonlinear-test" => Some(ModelKind::NonlinearTest),
            _ => None,
        }
    }

    /// Parameter names read by the model, in canonical order.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::AdditiveLevy | ModelKind::GeometricLevy => &["gamma", "sigma1", "sigma2"],
            ModelKind::NonlinearTest => &["gamma", "sigma1", "sigma2", "eta", "eta_tilde"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Named model parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ParamVector {
    entries: Vec<(String, f64)>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: Into<String>, I: IntoIterator<Item = (S, f64)>>(pairs: I) -> Self {
        let mut p = Self::new();
        for (k, v) in pairs {
            p.set(k, v);
        }
        p
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn set<S: Into<String>>(&mut self, name: S, value: f64) {
        let name = name.into();
        match self.entries.iter_mut().find(|(k, _)| *k == name) {
            Some(e) => e.1 = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// A model parameter that weights and bumps can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Param {
    Gamma,
    Sigma1,
    Sigma2,
    Eta,
    EtaTilde,
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::Gamma => "gamma",
            Param::Sigma1 => "sigma1",
            Param::Sigma2 => "sigma2",
            Param::Eta => "eta",
            Param::EtaTilde => "eta_tilde",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "gamma" => Some(Param::Gamma),
            "sigma1" => Some(Param::Sigma1),
            "sigma2" => Some(Param::Sigma2),
            "eta" => Some(Param::Eta),
            "eta_tilde" => Some(Param::EtaTilde),
            _ => None,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Drift and diffusion with their state derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContinuousCoeffs {
    pub a0: f64,
    pub a0_y: f64,
    pub a0_yy: f64,
    pub a: f64,
    pub a_y: f64,
    pub a_yy: f64,
    pub a_yyy: f64,
}

/// Jump coefficient and derivatives at `(y, z)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JumpCoeffs {
    pub b: f64,
    pub b_y: f64,
    pub b_yy: f64,
    pub b_z: f64,
    pub b_zz: f64,
    pub b_zy: f64,
    pub b_zyy: f64,
    pub b_zzy: f64,
}

/// Parameter derivatives of the drift and diffusion.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContinuousParamCoeffs {
    pub a0: f64,
    pub a0_y: f64,
    pub a: f64,
    pub a_y: f64,
}

/// Parameter derivatives of the jump coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JumpParamCoeffs {
    pub b: f64,
    pub b_y: f64,
    pub b_z: f64,
    pub b_zz: f64,
}

/// Selector for [`CoefficientModel::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    A0,
    A,
    B,
    A0Y,
    AY,
    BY,
    A0Eps(Param),
    AEps(Param),
    BEps(Param),
    BZ,
    BZY,
    A0YY,
    AYY,
    BYY,
    InvAY,
}

impl Selector {
    fn needs_z(&self) -> bool {
        matches!(
            self,
            Selector::B | Selector::BY | Selector::BEps(_) | Selector::BZ | Selector::BZY | Selector::BYY
        )
    }
}

/// Immutable coefficient bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientModel {
    kind: ModelKind,
    params: ParamVector,
    gamma: f64,
    sigma1: f64,
    sigma2: f64,
    eta: f64,
    eta_tilde: f64,
}

/// One line of an assumption report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub value: f64,
    pub floor: f64,
    pub pass: bool,
}

/// Outcome of [`CoefficientModel::validate_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Floors used by the assumption checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floors {
    pub invertibility: f64,
    pub diffusion: f64,
    pub jump: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Floors {
            invertibility: INVERTIBILITY_FLOOR,
            diffusion: ELLIPTICITY_FLOOR,
            jump: ELLIPTICITY_FLOOR,
        }
    }
}

const PERTURBATION_BOUND: f64 = 0.2;

impl CoefficientModel {
    pub fn new(kind: ModelKind, params: ParamVector) -> Result<Self> {
        let mut missing = Vec::new();
        for name in kind.param_names() {
            if params.get(name).is_none() {
                missing.push(*name);
            }
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "model {kind} is missing parameters: {}",
                missing.join(", ")
            )));
        }
        for (name, v) in params.iter() {
            if !kind.param_names().contains(&name) {
                return Err(Error::UnknownParameter(name.to_string()));
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        let g = |n: &str| params.get(n).unwrap_or(0.0);
        let m = CoefficientModel {
            kind,
            gamma: g("gamma"),
            sigma1: g("sigma1"),
            sigma2: g("sigma2"),
            eta: g("eta"),
            eta_tilde: g("eta_tilde"),
            params,
        };
        if kind == ModelKind::NonlinearTest
            && (m.eta.abs() > PERTURBATION_BOUND || m.eta_tilde.abs() > PERTURBATION_BOUND)
        {
            return Err(Error::InvalidParameter(format!(
                "|eta| and |eta_tilde| must not exceed {PERTURBATION_BOUND}"
            )));
        }
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn is_geometric(&self) -> bool {
        self.kind == ModelKind::GeometricLevy
    }

    /// Looks up a parameter by name and checks the model reads it.
    pub fn param(&self, name: &str) -> Result<Param> {
        match Param::from_name(name) {
            Some(p) if self.kind.param_names().contains(&name) => Ok(p),
            _ => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn param_value(&self, p: Param) -> f64 {
        match p {
            Param::Gamma => self.gamma,
            Param::Sigma1 => self.sigma1,
            Param::Sigma2 => self.sigma2,
            Param::Eta => self.eta,
            Param::EtaTilde => self.eta_tilde,
        }
    }

    /// Copy of the model with one parameter replaced.
    pub fn with_param(&self, p: Param, value: f64) -> Result<Self> {
        self.param(p.name())?;
        let mut params = self.params.clone();
        params.set(p.name(), value);
        CoefficientModel::new(self.kind, params)
    }

    pub fn continuous(&self, y: f64) -> ContinuousCoeffs {
        match self.kind {
            ModelKind::AdditiveLevy | ModelKind::GeometricLevy => ContinuousCoeffs {
                a0: self.gamma,
                a: self.sigma1,
                ..Default::default()
            },
            ModelKind::NonlinearTest => {
                let (s, c) = y.sin_cos();
                let th = y.tanh();
                let sech2 = 1.0 - th * th;
                ContinuousCoeffs {
                    a0: self.gamma * th,
                    a0_y: self.gamma * sech2,
                    a0_yy: -2.0 * self.gamma * sech2 * th,
                    a: self.sigma1 * (1.0 + self.eta * s),
                    a_y: self.sigma1 * self.eta * c,
                    a_yy: -self.sigma1 * self.eta * s,
                    a_yyy: -self.sigma1 * self.eta * c,
                }
            }
        }
    }

    /// `(k, k', k'')` where `b(y, z) = z k(y)`.
    pub fn jump_factor(&self, y: f64) -> (f64, f64, f64) {
        match self.kind {
            ModelKind::AdditiveLevy | ModelKind::GeometricLevy => (self.sigma2, 0.0, 0.0),
            ModelKind::NonlinearTest => {
                let (s, c) = y.sin_cos();
                let e = self.eta_tilde;
                (self.sigma2 * (1.0 + e * c), -self.sigma2 * e * s, -self.sigma2 * e * c)
            }
        }
    }

    pub fn jump(&self, y: f64, z: f64) -> JumpCoeffs {
        let (k, k1, k2) = self.jump_factor(y);
        JumpCoeffs {
            b: z * k,
            b_y: z * k1,
            b_yy: z * k2,
            b_z: k,
            b_zz: 0.0,
            b_zy: k1,
            b_zyy: k2,
            b_zzy: 0.0,
        }
    }

    pub fn continuous_param(&self, p: Param, y: f64) -> ContinuousParamCoeffs {
        match (self.kind, p) {
            (_, Param::Gamma) => match self.kind {
                ModelKind::NonlinearTest => {
                    let th = y.tanh();
                    ContinuousParamCoeffs { a0: th, a0_y: 1.0 - th * th, ..Default::default() }
                }
                _ => ContinuousParamCoeffs { a0: 1.0, ..Default::default() },
            },
            (ModelKind::NonlinearTest, Param::Sigma1) => {
                let (s, c) = y.sin_cos();
                ContinuousParamCoeffs { a: 1.0 + self.eta * s, a_y: self.eta * c, ..Default::default() }
            }
            (_, Param::Sigma1) => ContinuousParamCoeffs { a: 1.0, ..Default::default() },
            (ModelKind::NonlinearTest, Param::Eta) => {
                let (s, c) = y.sin_cos();
                ContinuousParamCoeffs { a: self.sigma1 * s, a_y: self.sigma1 * c, ..Default::default() }
            }
            _ => ContinuousParamCoeffs::default(),
        }
    }

    /// `(dk/d eps, dk'/d eps)` for the jump factor.
    pub fn jump_factor_param(&self, p: Param, y: f64) -> (f64, f64) {
        match (self.kind, p) {
            (ModelKind::NonlinearTest, Param::Sigma2) => {
                let (s, c) = y.sin_cos();
                (1.0 + self.eta_tilde * c, -self.eta_tilde * s)
            }
            (_, Param::Sigma2) => (1.0, 0.0),
            (ModelKind::NonlinearTest, Param::EtaTilde) => {
                let (s, c) = y.sin_cos();
                (self.sigma2 * c, -self.sigma2 * s)
            }
            _ => (0.0, 0.0),
        }
    }

    pub fn jump_param(&self, p: Param, y: f64, z: f64) -> JumpParamCoeffs {
        let (dk, dk1) = self.jump_factor_param(p, y);
        JumpParamCoeffs { b: z * dk, b_y: z * dk1, b_z: dk, b_zz: 0.0 }
    }

    /// `d/dy (1 / a)`.
    pub fn inv_a_y(&self, y: f64) -> f64 {
        let c = self.continuous(y);
        -c.a_y / (c.a * c.a)
    }

    /// Single derivative by selector; `z` must be supplied exactly for the
    /// jump selectors.
    pub fn evaluate(&self, which: Selector, y: f64, z: Option<f64>) -> Result<f64> {
        if which.needs_z() != z.is_some() {
            return Err(Error::Config(format!(
                "selector {which:?} {} a jump size",
                if which.needs_z() { "requires" } else { "does not take" }
            )));
        }
        if let Some(zv) = z {
            if zv == 0.0 {
                return Err(Error::Domain("jump size must be non-zero".into()));
            }
        }
        let c = self.continuous(y);
        let zv = z.unwrap_or(0.0);
        let j = self.jump(y, zv);
        Ok(match which {
            Selector::A0 => c.a0,
            Selector::A => c.a,
            Selector::B => j.b,
            Selector::A0Y => c.a0_y,
            Selector::AY => c.a_y,
            Selector::BY => j.b_y,
            Selector::A0Eps(p) => {
                self.param(p.name())?;
                self.continuous_param(p, y).a0
            }
            Selector::AEps(p) => {
                self.param(p.name())?;
                self.continuous_param(p, y).a
            }
            Selector::BEps(p) => {
                self.param(p.name())?;
                self.jump_param(p, y, zv).b
            }
            Selector::BZ => j.b_z,
            Selector::BZY => j.b_zy,
            Selector::A0YY => c.a0_yy,
            Selector::AYY => c.a_yy,
            Selector::BYY => j.b_yy,
            Selector::InvAY => self.inv_a_y(y),
        })
    }

    /// True when `d a / d eps` is not identically zero.
    pub fn diffusion_depends_on(&self, p: Param) -> bool {
        match (self.kind, p) {
            (_, Param::Sigma1) => true,
            (ModelKind::NonlinearTest, Param::Eta) => self.sigma1 != 0.0,
            _ => false,
        }
    }

    /// True when `U_s d a / d eps` is a deterministic function of time.
    pub fn deterministic_f_epsilon(&self, p: Param) -> bool {
        match self.kind {
            ModelKind::AdditiveLevy | ModelKind::GeometricLevy => true,
            ModelKind::NonlinearTest => !self.diffusion_depends_on(p),
        }
    }

    pub fn elliptic_diffusion(&self) -> bool {
        self.sigma1 != 0.0
    }

    pub fn elliptic_jump(&self) -> bool {
        self.sigma2 != 0.0
    }

    /// Checks invertibility of `1 + d_y b`, vanishing of `b` at `z = 0`, and
    /// the ellipticity of `a` and `d_z b` on a grid.
    pub fn validate_assumptions(&self, ys: &[f64], zs: &[f64], floors: Floors) -> AssumptionReport {
        let mut inv = f64::INFINITY;
        let mut a2 = f64::INFINITY;
        let mut bz2 = f64::INFINITY;
        let mut b0 = 0.0f64;
        for &y in ys {
            let a = self.continuous(y).a;
            a2 = a2.min(a * a);
            b0 = b0.max(self.jump(y, 0.0).b.abs());
            for &z in zs {
                let j = self.jump(y, z);
                inv = inv.min((1.0 + j.b_y).abs());
                bz2 = bz2.min(j.b_z * j.b_z);
            }
        }
        AssumptionReport {
            checks: vec![
                AssumptionCheck {
                    name: "invertible_jump_map",
                    value: inv,
                    floor: floors.invertibility,
                    pass: inv > floors.invertibility,
                },
                AssumptionCheck {
                    name: "jump_vanishes_at_zero",
                    value: b0,
                    floor: 1e-10,
                    pass: b0 <= 1e-10,
                },
                AssumptionCheck {
                    name: "elliptic_diffusion",
                    value: a2,
                    floor: floors.diffusion,
                    pass: a2 >= floors.diffusion,
                },
                AssumptionCheck {
                    name: "elliptic_jump",
                    value: bz2,
                    floor: floors.jump,
                    pass: bz2 >= floors.jump,
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn additive(s1: f64, s2: f64) -> CoefficientModel {
        CoefficientModel::new(
            ModelKind::AdditiveLevy,
            ParamVector::from_pairs([("gamma", 0.05), ("sigma1", s1), ("sigma2", s2)]),
        )
        .unwrap()
    }

    #[test]
    fn additive_values() {
        let m = additive(0.2, 0.3);
        assert_eq!(m.evaluate(Selector::AY, 1.3, None).unwrap(), 0.0);
        assert_eq!(m.evaluate(Selector::BZ, 1.3, Some(0.7)).unwrap(), 0.3);
        assert!(m.evaluate(Selector::BZ, 1.3, None).is_err());
        assert!(m.evaluate(Selector::A, 1.3, Some(0.2)).is_err());
        assert!(m.evaluate(Selector::AEps(Param::Eta), 0.0, None).is_err());
    }

    #[test]
    fn nonlinear_a_y_at_origin() {
        let m = CoefficientModel::new(
            ModelKind::NonlinearTest,
            ParamVector::from_pairs([
                ("gamma", 0.1),
                ("sigma1", 0.2),
                ("sigma2", 0.3),
                ("eta", 0.1),
                ("eta_tilde", 0.1),
            ]),
        )
        .unwrap();
        assert!((m.evaluate(Selector::AY, 0.0, None).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn missing_and_unknown_parameters() {
        let r = CoefficientModel::new(
            ModelKind::AdditiveLevy,
            ParamVector::from_pairs([("gamma", 0.0), ("sigma1", 0.2)]),
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let r = CoefficientModel::new(
            ModelKind::AdditiveLevy,
            ParamVector::from_pairs([("gamma", 0.0), ("sigma1", 0.2), ("sigma2", 0.1), ("eta", 0.1)]),
        );
        assert!(matches!(r, Err(Error::UnknownParameter(_))));
    }

    #[test]
    fn additive_assumptions() {
        let ys: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let zs = [0.05, 0.5, 1.0, -0.05, -1.0];
        let r = additive(0.2, 0.3).validate_assumptions(&ys, &zs, Floors::default());
        assert!(r.passed());
        assert!((r.check("elliptic_diffusion").unwrap().value - 0.04).abs() < 1e-15);
        assert!((r.check("elliptic_jump").unwrap().value - 0.09).abs() < 1e-15);
        let r = additive(0.0, 0.3).validate_assumptions(&ys, &zs, Floors::default());
        assert!(!r.passed());
        assert!(!r.check("elliptic_diffusion").unwrap().pass);
    }
}
