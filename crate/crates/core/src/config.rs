//! JSON run configuration with strict, exhaustive validation.
//!
//! Validation walks the whole document and reports every problem it finds,
//! each tagged with a JSON path such as `$.model.gamma`.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::convergence::{ExperimentPlan, DEFAULT_T_CRIT};
use crate::drift::check_ait_sahalia;
use crate::fbm::{FbmMethod, Hurst};
use crate::model::{ModelParams, ModelSpec};
use crate::moments::ProbeSettings;
use crate::solver::RootOptions;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every validation error found in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn at(&self, path: &str) -> Option<&ConfigError> {
        self.0.iter().find(|e| e.path == path)
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Serialize)]
pub struct ModelBlock {
    #[serde(flatten)]
    pub params: ModelParams,
    pub sigma: f64,
    pub y0: f64,
    pub hurst: f64,
    #[serde(skip)]
    pub spec: Option<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeBlock {
    pub steps: Option<usize>,
    pub horizon: f64,
    pub paths: usize,
    pub noise: FbmMethod,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    pub bracket_growth: f64,
}

impl Default for SchemeBlock {
    fn default() -> Self {
        let r = RootOptions::default();
        Self {
            steps: None,
            horizon: 1.0,
            paths: 1,
            noise: FbmMethod::Circulant,
            tol_abs: r.tol_abs,
            tol_rel: r.tol_rel,
            max_iter: r.max_iter,
            bracket_growth: r.bracket_growth,
        }
    }
}

impl SchemeBlock {
    pub fn root(&self) -> RootOptions {
        RootOptions {
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
            max_iter: self.max_iter,
            bracket_growth: self.bracket_growth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentBlock {
    pub k_min: u32,
    pub k_max: u32,
    pub k_ref: u32,
    pub paths: usize,
    pub p: f64,
    pub bootstrap: usize,
    pub t_crit: f64,
    pub probe_orders: Vec<f64>,
    pub probe_steps: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IoBlock {
    pub out: Option<String>,
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: u64,
    pub model: Option<ModelBlock>,
    pub scheme: SchemeBlock,
    pub experiment: Option<ExperimentBlock>,
    /// Output locations do not affect results and are left out of the digest.
    #[serde(skip)]
    pub io: IoBlock,
}

pub const COMMANDS: [&str; 5] = ["fbm", "simulate", "converge", "moments", "verify-assumptions"];

impl RunConfig {
    /// SHA-256 of the canonical JSON form, first 16 hex digits.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))[..16].to_string()
    }

    pub fn model_spec(&self) -> Result<&ModelSpec, ConfigErrors> {
        self.model
            .as_ref()
            .and_then(|m| m.spec.as_ref())
            .ok_or_else(|| missing("$.model", "model block is required for this command"))
    }

    pub fn experiment(&self) -> Result<&ExperimentBlock, ConfigErrors> {
        self.experiment.as_ref().ok_or_else(|| missing("$.experiment", "experiment block is required for this command"))
    }

    /// Check that every block `command` needs is present.
    pub fn require_for(&self, command: &str) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let need_model = matches!(command, "simulate" | "converge" | "moments" | "verify-assumptions");
        if need_model && self.model.is_none() {
            errs.push(err("$.model", format!("model block is required for `{command}`")));
        }
        if matches!(command, "converge" | "moments") && self.experiment.is_none() {
            errs.push(err("$.experiment", format!("experiment block is required for `{command}`")));
        }
        if command == "simulate" && self.scheme.steps.is_none() {
            errs.push(err("$.scheme.steps", "steps is required for `simulate`".into()));
        }
        if command == "moments" && self.experiment.as_ref().is_some_and(|e| e.probe_steps.is_empty()) {
            errs.push(err("$.experiment.probe_steps", "probe_steps is required for `moments`".into()));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    pub fn experiment_plan(&self) -> Result<ExperimentPlan, ConfigErrors> {
        let model = self.model_spec()?.clone();
        let e = self.experiment()?;
        let mut plan = ExperimentPlan::new(model, e.k_min, e.k_max, e.k_ref, e.paths, self.seed);
        plan.horizon = self.scheme.horizon;
        plan.p = e.p;
        plan.method = self.scheme.noise;
        plan.bootstrap = e.bootstrap;
        plan.root = self.scheme.root();
        plan.t_crit = e.t_crit;
        Ok(plan)
    }

    pub fn probe_settings(&self) -> Result<ProbeSettings, ConfigErrors> {
        let e = self.experiment()?;
        let mut s = ProbeSettings::new(self.scheme.horizon, e.paths, e.probe_orders.clone(), self.seed);
        s.method = self.scheme.noise;
        s.root = self.scheme.root();
        Ok(s)
    }
}

fn err(path: &str, message: String) -> ConfigError {
    ConfigError { path: path.to_string(), message }
}

fn missing(path: &str, message: &str) -> ConfigErrors {
    ConfigErrors(vec![err(path, message.to_string())])
}

struct Validator {
    errors: Vec<ConfigError>,
}

impl Validator {
    fn push(&mut self, path: String, message: impl Into<String>) {
        self.errors.push(ConfigError { path, message: message.into() });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => {
                self.push(path.to_string(), "expected an object");
                None
            }
        }
    }

    fn keys(&mut self, m: &Map<String, Value>, allowed: &[&str], path: &str) {
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                self.push(format!("{path}.{k}"), format!("unknown key {k:?}"));
            }
        }
    }

    fn number(&mut self, m: &Map<String, Value>, key: &str, path: &str, required: bool) -> Option<f64> {
        let p = format!("{path}.{key}");
        match m.get(key) {
            None if required => {
                self.push(p, "missing required number");
                None
            }
            None => None,
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    self.push(p, format!("expected a finite number, got {v}"));
                    None
                }
            },
        }
    }

    /// Number that must satisfy `ok`; `rule` describes the admissible range.
    fn ranged(
        &mut self,
        m: &Map<String, Value>,
        key: &str,
        path: &str,
        required: bool,
        ok: impl Fn(f64) -> bool,
        rule: &str,
    ) -> Option<f64> {
        let x = self.number(m, key, path, required)?;
        if ok(x) {
            Some(x)
        } else {
            self.push(format!("{path}.{key}"), format!("{key} = {x} out of range: {rule}"));
            None
        }
    }

    fn integer(&mut self, m: &Map<String, Value>, key: &str, path: &str, required: bool, min: u64) -> Option<u64> {
        let p = format!("{path}.{key}");
        match m.get(key) {
            None if required => {
                self.push(p, "missing required integer");
                None
            }
            None => None,
            Some(v) => match v.as_u64() {
                Some(x) if x >= min => Some(x),
                Some(x) => {
                    self.push(p, format!("{key} = {x} out of range: must be >= {min}"));
                    None
                }
                None => {
                    self.push(p, format!("expected a nonnegative integer, got {v}"));
                    None
                }
            },
        }
    }

    fn string<'a>(&mut self, m: &'a Map<String, Value>, key: &str, path: &str) -> Option<&'a str> {
        let v = m.get(key)?;
        match v.as_str() {
            Some(s) => Some(s),
            None => {
                self.push(format!("{path}.{key}"), format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn model(&mut self, v: &Value) -> Option<ModelBlock> {
        const P: &str = "$.model";
        let m = self.object(v, P)?;
        let family = match m.get("model").and_then(Value::as_str) {
            Some(f @ ("mean_reverting" | "ait_sahalia")) => f,
            Some(other) => {
                self.push(
                    format!("{P}.model"),
                    format!("unknown model {other:?}; expected \"mean_reverting\" or \"ait_sahalia\""),
                );
                return None;
            }
            None => {
                self.push(format!("{P}.model"), "missing model family");
                return None;
            }
        };
        let common = ["model", "sigma", "y0", "hurst"];
        let sigma = self.ranged(m, "sigma", P, true, |x| x != 0.0, "must be nonzero");
        let y0 = self.ranged(m, "y0", P, true, |x| x > 0.0, "must be positive");
        let hurst = self.ranged(m, "hurst", P, true, |x| x > 0.5 && x < 1.0, "must lie in (1/2, 1)");
        let params = if family == "mean_reverting" {
            let allowed: Vec<&str> = common.iter().copied().chain(["a1", "a2", "gamma"]).collect();
            self.keys(m, &allowed, P);
            let a1 = self.ranged(m, "a1", P, true, |x| x > 0.0, "must be positive");
            let a2 = self.number(m, "a2", P, true);
            let gamma = self.ranged(m, "gamma", P, true, |x| (0.5..1.0).contains(&x), "must lie in [1/2, 1)");
            match (a1, a2, gamma) {
                (Some(a1), Some(a2), Some(gamma)) => Some(ModelParams::MeanReverting { a1, a2, gamma }),
                _ => None,
            }
        } else {
            let allowed: Vec<&str> = common.iter().copied().chain(["a_m1", "a0", "a1", "a2", "r", "rho"]).collect();
            self.keys(m, &allowed, P);
            let pos = |me: &mut Self, k| me.ranged(m, k, P, true, |x| x > 0.0, "must be positive");
            let (a_m1, a0, a1, a2) = (pos(self, "a_m1"), pos(self, "a0"), pos(self, "a1"), pos(self, "a2"));
            let r = self.number(m, "r", P, true);
            let rho = self.ranged(m, "rho", P, true, |x| x > 1.0, "must exceed 1");
            match (a_m1, a0, a1, a2, r, rho) {
                (Some(a_m1), Some(a0), Some(a1), Some(a2), Some(r), Some(rho)) => {
                    if let Err(e) = check_ait_sahalia(a_m1, a0, a1, a2, r, rho) {
                        self.push(format!("{P}.r"), e.to_string());
                        None
                    } else {
                        Some(ModelParams::AitSahalia { a_m1, a0, a1, a2, r, rho })
                    }
                }
                _ => None,
            }
        };
        let (params, sigma, y0, hurst) = (params?, sigma?, y0?, hurst?);
        let spec = Hurst::new(hurst).and_then(|h| ModelSpec::new(params, sigma, y0, h));
        match spec {
            Ok(spec) => Some(ModelBlock { params, sigma, y0, hurst, spec: Some(spec) }),
            Err(e) => {
                self.push(P.to_string(), e.to_string());
                None
            }
        }
    }

    fn scheme(&mut self, v: &Value) -> SchemeBlock {
        const P: &str = "$.scheme";
        let mut s = SchemeBlock::default();
        let Some(m) = self.object(v, P) else { return s };
        self.keys(m, &["steps", "horizon", "paths", "noise", "tol_abs", "tol_rel", "max_iter", "bracket_growth"], P);
        s.steps = self.integer(m, "steps", P, false, 1).map(|x| x as usize);
        if let Some(x) = self.ranged(m, "horizon", P, false, |x| x > 0.0, "must be positive") {
            s.horizon = x;
        }
        if let Some(x) = self.integer(m, "paths", P, false, 1) {
            s.paths = x as usize;
        }
        if let Some(name) = self.string(m, "noise", P) {
            match name.parse::<FbmMethod>() {
                Ok(method) => s.noise = method,
                Err(_) => self.push(
                    format!("{P}.noise"),
                    format!("unknown noise method {name:?}; expected \"cholesky\" or \"circulant\""),
                ),
            }
        }
        if let Some(x) = self.ranged(m, "tol_abs", P, false, |x| x > 0.0, "must be positive") {
            s.tol_abs = x;
        }
        if let Some(x) = self.ranged(m, "tol_rel", P, false, |x| x > 0.0, "must be positive") {
            s.tol_rel = x;
        }
        if let Some(x) = self.integer(m, "max_iter", P, false, 8) {
            s.max_iter = x as usize;
        }
        if let Some(x) = self.ranged(m, "bracket_growth", P, false, |x| x > 1.0, "must exceed 1") {
            s.bracket_growth = x;
        }
        s
    }

    fn experiment(&mut self, v: &Value) -> Option<ExperimentBlock> {
        const P: &str = "$.experiment";
        let m = self.object(v, P)?;
        self.keys(
            m,
            &["k_min", "k_max", "k_ref", "paths", "p", "bootstrap", "t_crit", "probe_orders", "probe_steps"],
            P,
        );
        let k_min = self.integer(m, "k_min", P, false, 1).unwrap_or(4);
        let k_max = self.integer(m, "k_max", P, false, 1).unwrap_or(9);
        let k_ref = self.integer(m, "k_ref", P, false, 1).unwrap_or(k_max + 4);
        let paths = self.integer(m, "paths", P, true, 2);
        let p = self.ranged(m, "p", P, false, |x| x >= 1.0, "must be >= 1").unwrap_or(2.0);
        let bootstrap = self.integer(m, "bootstrap", P, false, 0).unwrap_or(1000);
        let t_crit = self.ranged(m, "t_crit", P, false, |x| x > 0.0, "must be positive").unwrap_or(DEFAULT_T_CRIT);
        let mut ok = true;
        if k_min > k_max {
            self.push(format!("{P}.k_min"), format!("k_min = {k_min} exceeds k_max = {k_max}"));
            ok = false;
        }
        if k_ref < k_max + 3 {
            self.push(format!("{P}.k_ref"), format!("k_ref = {k_ref} must be at least k_max + 3 = {}", k_max + 3));
            ok = false;
        }
        if k_ref > 26 {
            self.push(format!("{P}.k_ref"), format!("k_ref = {k_ref} out of range: must be <= 26"));
            ok = false;
        }
        let probe_orders = self.number_list(m, "probe_orders", P, |x| x > 0.0, "positive").unwrap_or_else(|| vec![4.0]);
        let probe_steps = self
            .number_list(m, "probe_steps", P, |x| x >= 1.0 && x.fract() == 0.0, "positive integers")
            .map(|v| v.into_iter().map(|x| x as usize).collect())
            .unwrap_or_default();
        let paths = paths? as usize;
        ok.then_some(ExperimentBlock {
            k_min: k_min as u32,
            k_max: k_max as u32,
            k_ref: k_ref as u32,
            paths,
            p,
            bootstrap: bootstrap as usize,
            t_crit,
            probe_orders,
            probe_steps,
        })
    }

    fn number_list(
        &mut self,
        m: &Map<String, Value>,
        key: &str,
        path: &str,
        ok: impl Fn(f64) -> bool,
        rule: &str,
    ) -> Option<Vec<f64>> {
        let v = m.get(key)?;
        let Some(items) = v.as_array() else {
            self.push(format!("{path}.{key}"), "expected an array");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut good = true;
        for (i, item) in items.iter().enumerate() {
            match item.as_f64() {
                Some(x) if ok(x) => out.push(x),
                _ => {
                    self.push(format!("{path}.{key}[{i}]"), format!("expected {rule}, got {item}"));
                    good = false;
                }
            }
        }
        good.then_some(out)
    }

    fn io(&mut self, v: &Value) -> IoBlock {
        const P: &str = "$.io";
        let mut io = IoBlock::default();
        let Some(m) = self.object(v, P) else { return io };
        self.keys(m, &["out", "out_dir"], P);
        io.out = self.string(m, "out", P).map(str::to_string);
        io.out_dir = self.string(m, "out_dir", P).map(str::to_string);
        io
    }
}

/// Parse and fully validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        ConfigErrors(vec![err("$", format!("syntax error at line {} column {}: {e}", e.line(), e.column()))])
    })?;
    let mut v = Validator { errors: Vec::new() };
    let Some(top) = v.object(&root, "$") else {
        return Err(ConfigErrors(v.errors));
    };
    v.keys(top, &["command", "seed", "model", "scheme", "experiment", "io"], "$");
    let command = v.string(top, "command", "$").map(str::to_string);
    if let Some(c) = &command {
        if !COMMANDS.contains(&c.as_str()) {
            v.push("$.command".into(), format!("unknown command {c:?}"));
        }
    }
    let seed = v.integer(top, "seed", "$", false, 0).unwrap_or(0);
    let model = top.get("model").and_then(|m| v.model(m));
    let scheme = top.get("scheme").map(|s| v.scheme(s)).unwrap_or_default();
    let experiment = top.get("experiment").and_then(|e| v.experiment(e));
    let io = top.get("io").map(|i| v.io(i)).unwrap_or_default();
    if v.errors.is_empty() {
        Ok(RunConfig { command, seed, model, scheme, experiment, io })
    } else {
        Err(ConfigErrors(v.errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"model": "mean_reverting", "a1": 1, "a2": 1, "gamma": 0.7,
        "sigma": 0.5, "y0": 1, "hurst": 0.7}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.scheme.tol_abs, 1e-12);
        assert_eq!(c.scheme.tol_rel, 1e-12);
        assert_eq!(c.scheme.max_iter, 200);
        assert_eq!(c.scheme.bracket_growth, 2.0);
        assert_eq!(c.scheme.horizon, 1.0);
        assert_eq!(c.seed, 0);
        assert!(c.model_spec().is_ok());
    }

    #[test]
    fn gamma_out_of_range() {
        let text = MINIMAL.replace("0.7,\n", "1.2,\n").replace("\"gamma\": 0.7", "\"gamma\": 1.2");
        let e = parse_config(&text).unwrap_err();
        assert!(e.at("$.model.gamma").is_some(), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"gamma\": 0.7", "\"gama\": 0.7");
        let e = parse_config(&text).unwrap_err();
        let unknown = e.at("$.model.gama").expect("unknown key reported");
        assert!(unknown.message.contains("gama"));
        // The missing gamma is reported too: all errors, not just the first.
        assert!(e.at("$.model.gamma").is_some());
    }

    #[test]
    fn syntax_error_has_position() {
        let e = parse_config("{\n  \"seed\": 1,\n  oops\n}").unwrap_err();
        assert!(e.0[0].message.contains("line 3"), "{e}");
    }

    #[test]
    fn collects_errors_across_blocks() {
        let text = r#"{"model": {"model": "ait_sahalia", "a_m1": 1, "a0": 1, "a1": 1, "a2": 1,
            "r": 2.4, "rho": 1.5, "sigma": 0.5, "y0": 1, "hurst": 0.7},
            "scheme": {"max_iter": 3, "noise": "fft"}, "bogus": 1}"#;
        let e = parse_config(text).unwrap_err();
        assert!(e.at("$.model.r").is_some(), "{e}");
        assert!(e.at("$.scheme.max_iter").is_some(), "{e}");
        assert!(e.at("$.scheme.noise").is_some(), "{e}");
        assert!(e.at("$.bogus").is_some(), "{e}");
    }

    #[test]
    fn requirement_and_digest() {
        let c = parse_config(MINIMAL).unwrap();
        assert!(c.require_for("verify-assumptions").is_ok());
        assert!(c.require_for("converge").is_err());
        assert!(c.require_for("simulate").unwrap_err().at("$.scheme.steps").is_some());
        assert_eq!(c.digest(), parse_config(MINIMAL).unwrap().digest());
        let other = parse_config(&MINIMAL.replace("\"y0\": 1", "\"y0\": 2")).unwrap();
        assert_ne!(c.digest(), other.digest());
    }

    #[test]
    fn experiment_block_checks_reference_gap() {
        let text = MINIMAL.replacen('{', r#"{"experiment": {"k_min": 4, "k_max": 9, "k_ref": 11, "paths": 10},"#, 1);
        let e = parse_config(&text).unwrap_err();
        assert!(e.at("$.experiment.k_ref").is_some(), "{e}");
    }
}
