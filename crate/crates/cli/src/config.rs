//! Run configuration documents.

use std::path::Path;

use expansive_core::model::Real;
use expansive_core::ExpansiveSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: &str = "expansive/1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One run. Command-line flags override the matching keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ExpansiveSpec>,
    /// Raw weights `c_0, c_1, …` (transform and sample only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Real>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub big_n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, rename = "N_max", skip_serializing_if = "Option::is_none")]
    pub big_n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_guard: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_window: Option<bool>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(CliError::Config(format!("schema must be {SCHEMA:?}, got {:?}", self.schema)));
        }
        if self.spec.is_some() && self.weights.is_some() {
            return Err(CliError::Config("give either spec or weights, not both".into()));
        }
        if let Some(s) = &self.spec {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.exact == Some(true) && self.precision.is_some() {
            return Err(CliError::Config("exact and precision are mutually exclusive".into()));
        }
        if self.big_n.is_some() && self.lambda.is_some() {
            return Err(CliError::Config("give either N or lambda, not both".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<&ExpansiveSpec, CliError> {
        self.spec.as_ref().ok_or_else(|| CliError::Config("this command needs a spec".into()))
    }

    pub fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
        v.ok_or_else(|| CliError::Config(format!("missing key {key:?}")))
    }

    /// `n` values: `n_grid` if given, else the single `n`.
    pub fn ns(&self) -> Result<Vec<u64>, CliError> {
        match (&self.n_grid, self.n) {
            (Some(g), _) if !g.is_empty() => Ok(g.clone()),
            (_, Some(n)) => Ok(vec![n]),
            _ => Err(CliError::Config("missing key \"n\" or \"n_grid\"".into())),
        }
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }
}
