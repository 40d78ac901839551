//! Sectioned `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::coeff::{CoefficientModel, ModelKind, Param, ParamVector};
use crate::estimator::{Experiment, GreekKind, StudyAxis, StudyTarget};
use crate::levy::{LevyFamily, LevyMeasure};
use crate::path::GridSpec;
use crate::payoff::Payoff;
use crate::weights::{Gamma3Form, JumpKernel, WeightMode};

/// One problem found while parsing, with the line it refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Simulate,
    Greeks,
    OracleCompare,
    Convergence,
}

impl Command {
    pub const ALL: [Command; 5] =
        [Command::Validate, Command::Simulate, Command::Greeks, Command::OracleCompare, Command::Convergence];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Greeks => "greeks",
            Command::OracleCompare => "oracle-compare",
            Command::Convergence => "convergence",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Weighted,
    FiniteDifference,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Weighted => "weighted",
            Method::FiniteDifference => "finite-difference",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub x0: f64,
    pub params: ParamVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevySection {
    pub family: LevyFamily,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub horizon: f64,
    pub n_steps: usize,
}

/// Optional keys are kept as given so that a config echoes unchanged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSection {
    pub command: Option<Command>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub greeks: Vec<GreekKind>,
    pub method: Option<Method>,
    pub mode: Option<WeightMode>,
    pub gamma_form: Option<Gamma3Form>,
    pub kernel: Option<JumpKernel>,
    pub example_forms: Option<bool>,
    pub target: Option<Option<GreekKind>>,
    pub axis: Option<StudyAxis>,
    pub levels: Vec<f64>,
    pub output: Option<String>,
    pub format: Option<Format>,
}

pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 0;

impl RunSection {
    pub fn n_paths(&self) -> usize {
        self.n_paths.unwrap_or(DEFAULT_PATHS)
    }
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::Weighted)
    }
    pub fn mode(&self) -> WeightMode {
        self.mode.unwrap_or(WeightMode::Full)
    }
    pub fn gamma_form(&self) -> Gamma3Form {
        self.gamma_form.unwrap_or(Gamma3Form::Theorem)
    }
    pub fn kernel(&self) -> JumpKernel {
        self.kernel.unwrap_or(JumpKernel::Shifted)
    }
    pub fn example_forms(&self) -> bool {
        self.example_forms.unwrap_or(false)
    }
    pub fn format(&self) -> Format {
        self.format.unwrap_or(Format::Csv)
    }
    pub fn study_target(&self) -> StudyTarget {
        match self.target.flatten() {
            None => StudyTarget::Price,
            Some(g) => StudyTarget::Weighted(g, self.mode(), self.gamma_form()),
        }
    }
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub levy: LevySection,
    pub grid: GridSection,
    pub payoff: Payoff,
    pub run: RunSection,
}

impl RunConfig {
    pub fn truncation(&self) -> f64 {
        self.levy.delta.unwrap_or(0.0)
    }

    pub fn coefficient_model(&self) -> crate::Result<CoefficientModel> {
        CoefficientModel::new(self.model.kind, self.model.params.clone())
    }

    pub fn levy_measure(&self) -> crate::Result<LevyMeasure> {
        LevyMeasure::new(self.levy.family, self.truncation())
    }

    pub fn experiment(&self) -> crate::Result<Experiment> {
        Experiment::new(
            self.coefficient_model()?,
            self.levy_measure()?,
            GridSpec::new(self.grid.horizon, self.grid.n_steps)?,
            self.model.x0,
            self.payoff.clone(),
        )
    }

    /// Canonical text: fixed section and key order, shortest round-trip
    /// numbers, optional keys only when set.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let o = &mut out;
        header(o, "model");
        kv(o, "name", self.model.kind.name());
        kv(o, "x0", num(self.model.x0));
        for (k, v) in self.model.params.iter() {
            kv(o, k, num(v));
        }
        header(o, "levy");
        match self.levy.family {
            LevyFamily::CompoundPoissonGaussian { intensity, mean, sd } => {
                kv(o, "family", "compound-poisson-gaussian");
                kv(o, "intensity", num(intensity));
                kv(o, "mean", num(mean));
                kv(o, "sd", num(sd));
            }
            LevyFamily::TemperedStable { scale, stability, lambda_pos, lambda_neg } => {
                kv(o, "family", "tempered-stable");
                kv(o, "scale", num(scale));
                kv(o, "stability", num(stability));
                kv(o, "lambda_pos", num(lambda_pos));
                kv(o, "lambda_neg", num(lambda_neg));
            }
        }
        if let Some(d) = self.levy.delta {
            kv(o, "delta", num(d));
        }
        header(o, "grid");
        kv(o, "T", num(self.grid.horizon));
        kv(o, "n_steps", self.grid.n_steps);
        header(o, "payoff");
        kv(o, "kind", payoff_name(&self.payoff));
        match &self.payoff {
            Payoff::Call { strike } | Payoff::Put { strike } | Payoff::Digital { strike } => {
                kv(o, "strike", num(*strike))
            }
            Payoff::Constant { value } => kv(o, "value", num(*value)),
            Payoff::Linear | Payoff::Piecewise(_) => {}
        }
        let r = &self.run;
        if *r == RunSection::default() {
            return out;
        }
        header(o, "run");
        if let Some(c) = r.command {
            kv(o, "command", c.name());
        }
        if let Some(n) = r.n_paths {
            kv(o, "n_paths", n);
        }
        if let Some(s) = r.seed {
            kv(o, "seed", s);
        }
        if !r.greeks.is_empty() {
            kv(o, "greeks", r.greeks.iter().map(|g| g.label()).collect::<Vec<_>>().join(", "));
        }
        if let Some(m) = r.method {
            kv(o, "method", m.name());
        }
        if let Some(m) = r.mode {
            kv(o, "mode", m.name());
        }
        if let Some(f) = r.gamma_form {
            kv(o, "gamma_form", f.name());
        }
        if let Some(k) = r.kernel {
            kv(o, "kernel", k.name());
        }
        if let Some(e) = r.example_forms {
            kv(o, "example_forms", e);
        }
        if let Some(t) = r.target {
            kv(o, "target", t.map(|g| g.label()).unwrap_or_else(|| "price".into()));
        }
        if let Some(a) = r.axis {
            kv(o, "axis", a.name());
        }
        if !r.levels.is_empty() {
            kv(o, "levels", r.levels.iter().map(|&v| num(v)).collect::<Vec<_>>().join(", "));
        }
        if let Some(p) = &r.output {
            kv(o, "output", p);
        }
        if let Some(f) = r.format {
            kv(o, "format", f.name());
        }
        out
    }

    /// Hex SHA-256 of the canonical text.
    pub fn sha256(&self) -> String {
        Sha256::digest(self.emit().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn header(out: &mut String, name: &str) {
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str(&format!("[{name}]\n"));
}

fn kv(out: &mut String, key: &str, value: impl fmt::Display) {
    out.push_str(&format!("{key} = {value}\n"));
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn payoff_name(p: &Payoff) -> &'static str {
    match p {
        Payoff::Call { .. } => "call",
        Payoff::Put { .. } => "put",
        Payoff::Digital { .. } => "digital",
        Payoff::Constant { .. } => "constant",
        Payoff::Linear => "linear",
        Payoff::Piecewise(_) => "piecewise",
    }
}

const SECTIONS: [&str; 5] = ["model", "levy", "grid", "payoff", "run"];

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    name: &'static str,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

/// Reads typed values from one section and records every problem found.
struct Reader<'a> {
    sec: Option<&'a mut Section>,
    name: &'static str,
    errors: &'a mut Vec<ConfigError>,
}

impl Reader<'_> {
    fn line(&self) -> Option<usize> {
        self.sec.as_ref().map(|s| s.line)
    }

    fn key_line(&self, key: &str) -> Option<usize> {
        self.sec.as_ref().and_then(|s| s.entries.get(key)).map(|e| e.line).or(self.line())
    }

    fn err(&mut self, line: Option<usize>, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        let e = self.sec.as_mut()?.entries.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn required(&mut self, key: &str) -> Option<(String, usize)> {
        let got = self.raw(key);
        if got.is_none() {
            let line = self.line();
            self.err(line, format!("{}.{key} is required", self.name));
        }
        got
    }

    fn parsed<T>(&mut self, key: &str, raw: Option<(String, usize)>, what: &str, f: impl Fn(&str) -> Option<T>) -> Option<T> {
        let (v, line) = raw?;
        let out = f(&v);
        if out.is_none() {
            self.err(Some(line), format!("{}.{key}: expected {what}, got '{v}'", self.name));
        }
        out
    }

    fn number(&mut self, key: &str, required: bool) -> Option<f64> {
        let raw = if required { self.required(key) } else { self.raw(key) };
        self.parsed(key, raw, "a finite number", parse_f64)
    }

    fn integer<T: std::str::FromStr>(&mut self, key: &str, required: bool) -> Option<T> {
        let raw = if required { self.required(key) } else { self.raw(key) };
        self.parsed(key, raw, "a non-negative integer", |s| s.parse().ok())
    }

    fn choice<T>(&mut self, key: &str, required: bool, names: &[&str], f: impl Fn(&str) -> Option<T>) -> Option<T> {
        let raw = if required { self.required(key) } else { self.raw(key) };
        let what = format!("one of {}", names.join(", "));
        self.parsed(key, raw, &what, f)
    }

    fn check(&mut self, key: &str, ok: bool, message: String) {
        if !ok {
            let line = self.key_line(key);
            self.err(line, format!("{}.{key} {message}", self.name));
        }
    }

    fn finish(&mut self) {
        if let Some(sec) = self.sec.as_ref() {
            let unknown: Vec<(usize, String)> = sec
                .entries
                .iter()
                .filter(|(_, e)| !e.used)
                .map(|(k, e)| (e.line, k.clone()))
                .collect();
            for (line, k) in unknown {
                self.err(Some(line), format!("unknown key '{k}' in [{}]", self.name));
            }
        }
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_greek(s: &str, kind: Option<ModelKind>) -> Option<GreekKind> {
    match s {
        "delta" => Some(GreekKind::Delta),
        "gamma" => Some(GreekKind::Gamma),
        _ => {
            let name = s.strip_prefix("vega(")?.strip_suffix(')')?;
            let p = Param::from_name(name)?;
            match kind {
                Some(k) if !k.param_names().contains(&name) => None,
                _ => Some(GreekKind::Vega(p)),
            }
        }
    }
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect()
}

fn lex(text: &str, errors: &mut Vec<ConfigError>) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split_once('#').map_or(raw, |(c, _)| c).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            let name = name.trim();
            match SECTIONS.iter().find(|s| **s == name) {
                Some(s) if sections.iter().any(|x| x.name == *s) => {
                    errors.push(ConfigError { line: Some(line), message: format!("duplicate section [{name}]") })
                }
                Some(s) => sections.push(Section { name: s, line, entries: BTreeMap::new() }),
                None => errors.push(ConfigError { line: Some(line), message: format!("unknown section [{name}]") }),
            }
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            errors.push(ConfigError { line: Some(line), message: format!("expected 'key = value', got '{content}'") });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(sec) = sections.last_mut() else {
            errors.push(ConfigError { line: Some(line), message: format!("key '{k}' outside any section") });
            continue;
        };
        if k.is_empty() || v.is_empty() {
            errors.push(ConfigError { line: Some(line), message: format!("empty key or value in '{content}'") });
        } else if sec.entries.contains_key(k) {
            errors.push(ConfigError { line: Some(line), message: format!("duplicate key '{k}' in [{}]", sec.name) });
        } else {
            sec.entries.insert(k.to_string(), Entry { value: v.to_string(), line, used: false });
        }
    }
    sections
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut sections = lex(text, &mut errors);
    let mut take = |name: &str| -> Option<Section> {
        let i = sections.iter().position(|s| s.name == name)?;
        Some(sections.remove(i))
    };
    let (mut sm, mut sl, mut sg, mut sp, mut sr) = (take("model"), take("levy"), take("grid"), take("payoff"), take("run"));
    for (name, s) in [("model", &sm), ("levy", &sl), ("grid", &sg), ("payoff", &sp)] {
        if s.is_none() {
            errors.push(ConfigError { line: None, message: format!("missing section [{name}]") });
        }
    }

    // [model]
    let mut r = Reader { sec: sm.as_mut(), name: "model", errors: &mut errors };
    let kinds = ["additive-levy", "geometric-levy", "nonlinear-test"];
    let kind = r.choice("name", true, &kinds, ModelKind::from_name);
    let x0 = r.number("x0", true);
    let mut params = ParamVector::new();
    let mut params_ok = true;
    if let Some(k) = kind {
        for name in k.param_names() {
            match r.number(name, true) {
                Some(v) => params.set(*name, v),
                None => params_ok = false,
            }
        }
    }
    if let (Some(k), true) = (kind, params_ok) {
        if let Err(e) = CoefficientModel::new(k, params.clone()) {
            let line = r.key_line("name");
            r.err(line, format!("model: {e}"));
        }
    }
    if kind.is_some() {
        r.finish();
    }

    // [levy]
    let mut r = Reader { sec: sl.as_mut(), name: "levy", errors: &mut errors };
    let families = ["compound-poisson-gaussian", "tempered-stable"];
    let family = match r.choice("family", true, &families, |s| families.contains(&s).then(|| s.to_string())) {
        Some(f) if f == "compound-poisson-gaussian" => {
            let (a, b, c) = (r.number("intensity", true), r.number("mean", true), r.number("sd", true));
            match (a, b, c) {
                (Some(intensity), Some(mean), Some(sd)) => {
                    Some(LevyFamily::CompoundPoissonGaussian { intensity, mean, sd })
                }
                _ => None,
            }
        }
        Some(_) => {
            let (a, b, c, d) = (
                r.number("scale", true),
                r.number("stability", true),
                r.number("lambda_pos", true),
                r.number("lambda_neg", true),
            );
            match (a, b, c, d) {
                (Some(scale), Some(stability), Some(lambda_pos), Some(lambda_neg)) => {
                    Some(LevyFamily::TemperedStable { scale, stability, lambda_pos, lambda_neg })
                }
                _ => None,
            }
        }
        None => None,
    };
    let delta_raw = r.raw("delta");
    let delta_ok = delta_raw.is_none();
    let delta = r.parsed("delta", delta_raw, "a finite number", parse_f64);
    if let Some(f) = family {
        if delta.is_some() || delta_ok {
            if let Err(e) = LevyMeasure::new(f, delta.unwrap_or(0.0)) {
                let line = r.key_line("delta");
                r.err(line, format!("levy: {e}"));
            }
        }
    }
    if r.sec.as_ref().is_some_and(|s| s.entries.contains_key("family")) {
        r.finish();
    }

    // [grid]
    let mut r = Reader { sec: sg.as_mut(), name: "grid", errors: &mut errors };
    let horizon = r.number("T", true);
    let n_steps = r.integer::<usize>("n_steps", true);
    if let Some(t) = horizon {
        r.check("T", t > 0.0, format!("must be > 0, got {t}"));
    }
    if let Some(n) = n_steps {
        r.check("n_steps", n >= 1, format!("must be >= 1, got {n}"));
    }
    r.finish();

    // [payoff]
    let mut r = Reader { sec: sp.as_mut(), name: "payoff", errors: &mut errors };
    let kinds = ["call", "put", "digital", "constant", "linear"];
    let payoff = match r.choice("kind", true, &kinds, |s| kinds.contains(&s).then(|| s.to_string())).as_deref() {
        Some("call") => r.number("strike", true).map(|strike| Payoff::Call { strike }),
        Some("put") => r.number("strike", true).map(|strike| Payoff::Put { strike }),
        Some("digital") => r.number("strike", true).map(|strike| Payoff::Digital { strike }),
        Some("constant") => r.number("value", true).map(|value| Payoff::Constant { value }),
        Some(_) => Some(Payoff::Linear),
        None => None,
    };
    if payoff.is_some() {
        r.finish();
    }

    // [run]
    let mut r = Reader { sec: sr.as_mut(), name: "run", errors: &mut errors };
    let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
    let mut run = RunSection {
        command: r.choice("command", false, &names, Command::from_name),
        n_paths: r.integer("n_paths", false),
        seed: r.integer("seed", false),
        ..Default::default()
    };
    if let Some(n) = run.n_paths {
        r.check("n_paths", n >= 2, format!("must be >= 2, got {n}"));
    }
    if let Some((v, line)) = r.raw("greeks") {
        for item in split_list(&v) {
            match parse_greek(item, kind) {
                Some(g) => run.greeks.push(g),
                None => r.err(Some(line), format!("run.greeks: unknown Greek '{item}' for this model")),
            }
        }
        if run.greeks.is_empty() {
            r.err(Some(line), "run.greeks: empty list".into());
        }
    }
    run.method = r.choice("method", false, &["weighted", "finite-difference"], |s| match s {
        "weighted" => Some(Method::Weighted),
        "finite-difference" => Some(Method::FiniteDifference),
        _ => None,
    });
    run.mode = r.choice("mode", false, &["full", "diffusion-only", "jump-only"], |s| match s {
        "full" => Some(WeightMode::Full),
        "diffusion-only" => Some(WeightMode::DiffusionOnly),
        "jump-only" => Some(WeightMode::JumpOnly),
        _ => None,
    });
    run.gamma_form = r.choice("gamma_form", false, &["theorem", "corrected"], |s| match s {
        "theorem" => Some(Gamma3Form::Theorem),
        "corrected" => Some(Gamma3Form::Corrected),
        _ => None,
    });
    run.kernel = r.choice("kernel", false, &["shifted", "square"], |s| match s {
        "shifted" => Some(JumpKernel::Shifted),
        "square" => Some(JumpKernel::Square),
        _ => None,
    });
    run.example_forms = r.choice("example_forms", false, &["true", "false"], |s| s.parse().ok());
    run.target = r.choice("target", false, &["price", "delta", "gamma", "vega(<parameter>)"], |s| match s {
        "price" => Some(None),
        _ => parse_greek(s, kind).map(Some),
    });
    run.axis = r.choice("axis", false, &["n_paths", "n_steps", "delta"], |s| match s {
        "n_paths" => Some(StudyAxis::NPaths),
        "n_steps" => Some(StudyAxis::NSteps),
        "delta" => Some(StudyAxis::Truncation),
        _ => None,
    });
    if let Some((v, line)) = r.raw("levels") {
        for item in split_list(&v) {
            match parse_f64(item) {
                Some(x) if x > 0.0 => run.levels.push(x),
                _ => r.err(Some(line), format!("run.levels: expected positive numbers, got '{item}'")),
            }
        }
    }
    run.output = r.raw("output").map(|(v, _)| v);
    run.format = r.choice("format", false, &["csv", "json"], Format::from_name);
    r.finish();

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line.unwrap_or(0));
        return Err(errors);
    }
    Ok(RunConfig {
        model: ModelSection { kind: kind.unwrap(), x0: x0.unwrap(), params },
        levy: LevySection { family: family.unwrap(), delta },
        grid: GridSection { horizon: horizon.unwrap(), n_steps: n_steps.unwrap() },
        payoff: payoff.unwrap(),
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]
name = additive-levy
x0 = 100
gamma = 0
sigma1 = 20
sigma2 = 30

[levy]
family = compound-poisson-gaussian
intensity = 1
mean = 0
sd = 0.1

[grid]
T = 1
n_steps = 16

[payoff]
kind = call
strike = 100
";

    #[test]
    fn minimal_config_echoes_unchanged() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.emit(), MINIMAL);
        assert_eq!(parse_config(&c.emit()).unwrap(), c);
    }

    #[test]
    fn comments_and_spacing_are_normalised() {
        let text = MINIMAL.replace("x0 = 100", "x0=1e2   # spot").replace("[grid]", "# grid\n[grid]");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.emit(), MINIMAL);
    }

    #[test]
    fn zero_steps_names_key_and_line() {
        let errs = parse_config(&MINIMAL.replace("n_steps = 16", "n_steps = 0")).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, Some(16));
        assert!(errs[0].message.contains("grid.n_steps") && errs[0].message.contains(">= 1"));
    }

    #[test]
    fn untruncated_tempered_stable_is_rejected() {
        let text = MINIMAL.replace(
            "family = compound-poisson-gaussian\nintensity = 1\nmean = 0\nsd = 0.1",
            "family = tempered-stable\nscale = 1\nstability = 0.5\nlambda_pos = 3\nlambda_neg = 3\ndelta = 0",
        );
        let errs = parse_config(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("infinite activity")), "{errs:?}");
    }

    #[test]
    fn all_errors_are_collected() {
        let text = MINIMAL
            .replace("sigma1 = 20", "sigma1 = abc")
            .replace("n_steps = 16", "n_steps = 0\nbogus = 1")
            .replace("[payoff]", "[payoff]\ncolour = red");
        let errs = parse_config(&text).unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.iter().all(|e| e.line.is_some()));
    }

    #[test]
    fn unknown_section_and_missing_key() {
        let text = MINIMAL.replace("strike = 100", "[extra]\nfoo = 1");
        let errs = parse_config(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("unknown section")));
        assert!(errs.iter().any(|e| e.message.contains("payoff.strike is required")));
    }

    #[test]
    fn run_section_round_trips() {
        let text = format!(
            "{MINIMAL}\n[run]\ncommand = greeks\nn_paths = 1000\nseed = 7\ngreeks = delta, gamma, vega(sigma2)\n\
             mode = full\ngamma_form = corrected\nkernel = square\nexample_forms = true\ntarget = vega(sigma1)\n\
             axis = n_steps\nlevels = 4, 8, 16\noutput = out.csv\nformat = json\n"
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(c.emit(), text);
        assert_eq!(c.run.greeks.len(), 3);
    }

    #[test]
    fn vega_of_foreign_parameter_is_rejected() {
        let text = format!("{MINIMAL}\n[run]\ngreeks = vega(eta)\n");
        assert!(parse_config(&text).is_err());
    }
}
