//! JSON system-definition files.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::parse;
use crate::interval::{IntervalBox, Rounding};
use crate::paving::Region;
use crate::synthesis::SynthesisConfig;
use crate::system::{discretize_euler, discretize_linear_affine, InclusionStrategy, Mode, SwitchedSystem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

/// A matrix or vector entry: a number or a constant expression such as
/// `"-0.05/3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

impl Scalar {
    fn value(&self, field: &str) -> Result<f64, ConfigError> {
        match self {
            Scalar::Number(v) => Ok(*v),
            Scalar::Expr(s) => parse(s, 0)
                .and_then(|e| e.eval_real(&[]))
                .map_err(|e| invalid(field, e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearAffine {
    #[serde(rename = "A")]
    pub a: Vec<Vec<Scalar>>,
    pub b: Vec<Scalar>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Euler {
    pub field: Vec<String>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_affine: Option<LinearAffine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euler: Option<Euler>,
}

fn default_strategy() -> String {
    "natural".into()
}

fn default_rounding() -> String {
    "outward".into()
}

fn default_policy() -> String {
    "inertial".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub dimension: usize,
    pub modes: Vec<ModeConfig>,
    /// Boxes as flat `[lo1, hi1, lo2, hi2, ...]` lists.
    pub omega: Vec<Vec<f64>>,
    pub epsilon: f64,
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_rounding")]
    pub rounding: String,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Default initial state for simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: SystemConfig,
    pub system: SwitchedSystem,
    pub omega: Region,
    pub synthesis: SynthesisConfig,
}

pub fn rounding_from_name(s: &str) -> Option<Rounding> {
    match s.to_ascii_lowercase().as_str() {
        "outward" => Some(Rounding::Outward),
        "none" => Some(Rounding::None),
        _ => None,
    }
}

pub fn rounding_name(r: Rounding) -> &'static str {
    match r {
        Rounding::Outward => "outward",
        Rounding::None => "none",
    }
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn build(&self) -> Result<Loaded, ConfigError> {
        let n = self.dimension;
        if n == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        let mut modes = Vec::with_capacity(self.modes.len());
        for (i, m) in self.modes.iter().enumerate() {
            modes.push(build_mode(m, n, &format!("modes[{i}]"))?);
        }
        let system = SwitchedSystem::new(n, modes).map_err(|e| invalid("modes", e))?;

        let mut roots = Vec::with_capacity(self.omega.len());
        for (i, flat) in self.omega.iter().enumerate() {
            let field = format!("omega[{i}]");
            if flat.len() != 2 * n {
                return Err(invalid(field, format!("expected {} bounds, got {}", 2 * n, flat.len())));
            }
            let b = IntervalBox::from_flat(flat).map_err(|e| invalid(&field, e))?;
            if !b.is_finite() || b.dims().iter().any(|d| d.width() <= 0.0) {
                return Err(invalid(field, "box must be bounded with positive width"));
            }
            roots.push(b);
        }
        let omega = Region::full(&roots).map_err(|e| invalid("omega", e))?;

        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid("epsilon", "must be positive"));
        }
        let strategy = InclusionStrategy::from_name(&self.strategy)
            .ok_or_else(|| invalid("strategy", format!("unknown strategy {:?}", self.strategy)))?;
        let rounding = rounding_from_name(&self.rounding)
            .ok_or_else(|| invalid("rounding", format!("unknown rounding {:?}", self.rounding)))?;
        if crate::controller::SwitchPolicy::from_name(&self.policy, self.seed).is_none() {
            return Err(invalid("policy", format!("unknown policy {:?}", self.policy)));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(invalid("x0", format!("expected {n} coordinates")));
            }
        }
        let mut synthesis = SynthesisConfig {
            epsilon: self.epsilon,
            strategy,
            rounding,
            ..SynthesisConfig::default()
        };
        if let Some(m) = self.max_iterations {
            if m == 0 {
                return Err(invalid("max_iterations", "must be at least 1"));
            }
            synthesis.max_iterations = m;
        }
        Ok(Loaded {
            config: self.clone(),
            system,
            omega,
            synthesis,
        })
    }
}

fn build_mode(m: &ModeConfig, n: usize, field: &str) -> Result<Mode, ConfigError> {
    let forms = [m.update.is_some(), m.linear_affine.is_some(), m.euler.is_some()];
    if forms.iter().filter(|f| **f).count() != 1 {
        return Err(invalid(
            field,
            format!("mode {:?} needs exactly one of update, linear_affine, euler", m.name),
        ));
    }
    let parse_all = |exprs: &[String], sub: &str| {
        if exprs.len() != n {
            return Err(invalid(
                format!("{field}.{sub}"),
                format!("mode {:?} has {} expressions, expected {n}", m.name, exprs.len()),
            ));
        }
        exprs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                parse(s, n).map_err(|e| invalid(format!("{field}.{sub}[{k}]"), format!("mode {:?}: {e}", m.name)))
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let err = |e: crate::system::SystemError| invalid(field, e);
    if let Some(update) = &m.update {
        Mode::new(m.name.clone(), parse_all(update, "update")?).map_err(err)
    } else if let Some(la) = &m.linear_affine {
        let sub = format!("{field}.linear_affine");
        if la.a.len() != n || la.a.iter().any(|r| r.len() != n) || la.b.len() != n {
            return Err(invalid(sub, format!("A must be {n}x{n} and b of length {n}")));
        }
        let mut a = DMatrix::zeros(n, n);
        for (i, row) in la.a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = v.value(&format!("{sub}.A[{i}][{j}]"))?;
            }
        }
        let b = la
            .b
            .iter()
            .enumerate()
            .map(|(i, v)| v.value(&format!("{sub}.b[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        discretize_linear_affine(m.name.clone(), &a, &b, la.tau).map_err(err)
    } else {
        let eu = m.euler.as_ref().expect("one form present");
        let field_exprs = parse_all(&eu.field, "euler.field")?;
        discretize_euler(m.name.clone(), &field_exprs, eu.tau).map_err(err)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SystemConfig::from_json(&text)?.build()
}
