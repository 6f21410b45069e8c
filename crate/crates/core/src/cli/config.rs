//! Flat `key = value` run configuration.
//!
//! ```text
//! # library problem
//! problem = smooth_double_well
//! n_max = 50
//! ```
//!
//! Inline problems give `phi`, `separator`, `z0`, `z1` (and optionally
//! `bounded = true`) instead of `problem`. Every `SolverParams` field is a key.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::functionals::{parse_expr, parse_point, problem_library, MinMaxProblem};
use crate::geometry::SeparatingSet;
use crate::solver::{DistanceMode, SolverParams};

/// Where the problem comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSource {
    Library(String),
    Inline {
        phi: String,
        separator: String,
        z0: String,
        z1: String,
        bounded: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub params: SolverParams,
    pub mode: DistanceMode,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemSource::Library("smooth_double_well".into()),
            params: SolverParams::default(),
            mode: DistanceMode::Delta,
            out: None,
        }
    }
}

const PROBLEM_KEYS: [&str; 6] = ["problem", "phi", "separator", "z0", "z1", "bounded"];

fn param_map(p: &SolverParams) -> BTreeMap<String, Value> {
    match serde_json::to_value(p) {
        Ok(Value::Object(m)) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

impl RunConfig {
    /// Builds the problem; inline coordinates count is taken from `z0`.
    pub fn build_problem(&self) -> Result<MinMaxProblem<f64>> {
        match &self.problem {
            ProblemSource::Library(name) => problem_library(name),
            ProblemSource::Inline {
                phi,
                separator,
                z0,
                z1,
                bounded,
            } => {
                let z0 = parse_point::<f64>(z0)?;
                let z1 = parse_point::<f64>(z1)?;
                let dim = z0.dim();
                let phi = parse_expr(phi, dim)?;
                let sep = SeparatingSet::implicit(parse_expr(separator, dim)?, *bounded);
                MinMaxProblem::new("inline", phi, z0, z1, sep)
            }
        }
    }

    /// Serializes to the key-value format; [`RunConfig::parse`] inverts it.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        match &self.problem {
            ProblemSource::Library(name) => out.push_str(&format!("problem = {name}\n")),
            ProblemSource::Inline {
                phi,
                separator,
                z0,
                z1,
                bounded,
            } => {
                out.push_str(&format!("phi = {phi}\n"));
                out.push_str(&format!("separator = {separator}\n"));
                out.push_str(&format!("z0 = {z0}\n"));
                out.push_str(&format!("z1 = {z1}\n"));
                out.push_str(&format!("bounded = {bounded}\n"));
            }
        }
        out.push_str(&format!("mode = {}\n", self.mode));
        if let Some(dir) = &self.out {
            out.push_str(&format!("out = {}\n", dir.display()));
        }
        for (k, v) in param_map(&self.params) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Usage(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = k.trim().to_string();
            if kv.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Usage(format!(
                    "config line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        let mut cfg = RunConfig::default();
        let inline_keys = ["phi", "separator", "z0", "z1"];
        let has_inline = inline_keys.iter().any(|k| kv.contains_key(*k));
        match (kv.remove("problem"), has_inline) {
            (Some(_), true) => {
                return Err(Error::Usage(
                    "give either `problem` or inline `phi`/`separator`/`z0`/`z1`, not both".into(),
                ))
            }
            (Some(name), false) => cfg.problem = ProblemSource::Library(name),
            (None, true) => {
                let mut take = |k: &str| {
                    kv.remove(k)
                        .ok_or_else(|| Error::Usage(format!("inline problem is missing `{k}`")))
                };
                let phi = take("phi")?;
                let separator = take("separator")?;
                let z0 = take("z0")?;
                let z1 = take("z1")?;
                let bounded = match kv.remove("bounded").as_deref() {
                    None | Some("false") => false,
                    Some("true") => true,
                    Some(other) => {
                        return Err(Error::Usage(format!("`bounded` must be true or false, got `{other}`")))
                    }
                };
                cfg.problem = ProblemSource::Inline {
                    phi,
                    separator,
                    z0,
                    z1,
                    bounded,
                };
            }
            (None, false) => {}
        }
        if let Some(b) = kv.remove("bounded") {
            return Err(Error::Usage(format!("`bounded = {b}` only applies to inline problems")));
        }
        if let Some(m) = kv.remove("mode") {
            cfg.mode = m.parse()?;
        }
        if let Some(o) = kv.remove("out") {
            cfg.out = Some(PathBuf::from(o));
        }
        let mut params = param_map(&cfg.params);
        for (k, v) in kv {
            if PROBLEM_KEYS.contains(&k.as_str()) || !params.contains_key(&k) {
                return Err(Error::Usage(format!("unknown config key `{k}`")));
            }
            let value: Value = serde_json::from_str(&v)
                .map_err(|_| Error::Usage(format!("config key `{k}`: cannot parse `{v}`")))?;
            params.insert(k, value);
        }
        cfg.params = serde_json::from_value(Value::Object(params.into_iter().collect()))
            .map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.params.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.params.n_max = 17;
        cfg.params.beta = 0.3;
        cfg.out = Some(PathBuf::from("/tmp/x"));
        assert_eq!(RunConfig::parse(&cfg.dump()).unwrap(), cfg);
        let inline = RunConfig {
            problem: ProblemSource::Inline {
                phi: "add(sq(x0),sq(x1))".into(),
                separator: "x0".into(),
                z0: "-1,0".into(),
                z1: "1,0".into(),
                bounded: false,
            },
            mode: DistanceMode::Norm,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&inline.dump()).unwrap(), inline);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "problem = a\nphi = x0",
            "n_max = ten",
            "nope = 1",
            "grid_m = 1",
            "mode = sideways",
            "problem smooth_double_well",
            "phi = x0",
            "n_max = 2\nn_max = 3",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Usage(_))), "{text}");
        }
    }

    #[test]
    fn malformed_inline_expression_names_token() {
        let cfg = RunConfig::parse("phi = add(x0, foo(x1))\nseparator = x0\nz0 = -1,0\nz1 = 1,0").unwrap();
        match cfg.build_problem() {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "foo"),
            other => panic!("{other:?}"),
        }
    }
}
