//! The TOML run document.
//!
//! ```toml
//! command = "simulate"
//! output_format = "json"
//!
//! [scenario]
//! replications = 200
//! master_seed = 7
//!
//! [scenario.dgp]
//! n = 500
//! k = 250
//! sigma_vu = [0.5]
//! pi = { kind = "fixed_support", support_size = 3, value = 1.0 }
//! design = { kind = "iid_gaussian" }
//!
//! [[scenario.estimators]]
//! method = "tsls"
//! label = "tsls"
//! ```
//!
//! Unknown keys anywhere in the document are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{EstimatorSpec, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Estimate,
    Diagnose,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

fn default_c() -> f64 {
    1.0
}

/// Inputs specific to `diagnose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseOptions {
    /// First-stage coefficients for a single endogenous regressor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    /// CSV with a header row, K rows and one column per endogenous regressor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_path: Option<PathBuf>,
    /// Multiplier in the effectiveness threshold `c/√N`.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Instrument counts at which `Q_K` is evaluated. Defaults to
    /// K/8, K/4, K/2 and K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    /// Quadrature weights for the covariance spectrum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            pi: None,
            pi_path: None,
            c: default_c(),
            k_grid: None,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_path: Option<PathBuf>,
    /// Where the report goes; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub output_format: OutputFormat,
    /// Estimators for `estimate`. Defaults to OLS and 2SLS.
    #[serde(default)]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseOptions>,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Fills `command` when the document omits it; must agree otherwise.
    pub command: Option<Command>,
    pub input_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub output_format: Option<OutputFormat>,
    pub seed: Option<u64>,
}

/// Parses and validates a run document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &Overrides::default())
}

/// Parses a run document, applies `overrides`, fills defaults and validates.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("document", e.message()))?;
    if let Some(command) = overrides.command {
        match table.get("command").and_then(|v| v.as_str()) {
            Some(existing) if existing != command.label() => {
                return Err(Error::config(
                    "command",
                    format!(
                        "document declares `{existing}` but `{}` was requested",
                        command.label()
                    ),
                ))
            }
            _ => {
                table.insert("command".into(), command.label().into());
            }
        }
    }
    let mut config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("document", e.message()))?;

    if let Some(path) = &overrides.input_path {
        config.input_path = Some(path.clone());
    }
    if let Some(path) = &overrides.output_path {
        config.output_path = Some(path.clone());
    }
    if let Some(format) = overrides.output_format {
        config.output_format = format;
    }
    if let Some(seed) = overrides.seed {
        match &mut config.scenario {
            Some(scenario) => scenario.master_seed = seed,
            None => {
                return Err(Error::config(
                    "seed",
                    "there is no [scenario] section for the seed to apply to",
                ))
            }
        }
    }
    config.resolve_defaults();
    config.validate()?;
    Ok(config)
}

/// Canonical TOML form; parsing it again yields an identical config.
pub fn to_canonical(config: &RunConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::config("document", e.to_string()))
}

impl RunConfig {
    pub fn resolve_defaults(&mut self) {
        if let Some(scenario) = &mut self.scenario {
            scenario.resolve_defaults();
        }
        if self.command == Command::Estimate && self.estimators.is_empty() {
            self.estimators = vec![EstimatorSpec::ols(), EstimatorSpec::tsls()];
        }
        if self.command == Command::Diagnose && self.diagnose.is_none() {
            self.diagnose = Some(DiagnoseOptions::default());
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.command {
            Command::Simulate if self.scenario.is_none() => {
                return Err(Error::config("scenario", "simulate requires a [scenario] section"))
            }
            Command::Estimate | Command::Diagnose if self.input_path.is_none() => {
                return Err(Error::config(
                    "input_path",
                    format!("{} requires input data (--data <path>)", self.command.label()),
                ))
            }
            _ => {}
        }
        if let Some(scenario) = &self.scenario {
            scenario.validate("scenario")?;
            if scenario.master_seed > i64::MAX as u64 {
                return Err(Error::config(
                    "scenario.master_seed",
                    format!("must not exceed {}", i64::MAX),
                ));
            }
        }
        let mut labels = std::collections::HashSet::new();
        for (i, spec) in self.estimators.iter().enumerate() {
            spec.validate(&format!("estimators[{i}]"))?;
            if !labels.insert(spec.label()) {
                return Err(Error::config(
                    format!("estimators[{i}].label"),
                    format!("duplicate label `{}`", spec.label()),
                ));
            }
        }
        if let Some(opts) = &self.diagnose {
            if !(opts.c > 0.0 && opts.c.is_finite()) {
                return Err(Error::config(
                    "diagnose.c",
                    format!("must be positive and finite, got {}", opts.c),
                ));
            }
            if opts.pi.is_some() && opts.pi_path.is_some() {
                return Err(Error::config("diagnose.pi", "give either pi or pi_path, not both"));
            }
            if let Some(grid) = &opts.k_grid {
                if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config(
                        "diagnose.k_grid",
                        "must be a non-empty strictly ascending list of positive counts",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Master seed of the scenario section, if any.
    pub fn seed(&self) -> Option<u64> {
        self.scenario.as_ref().map(|s| s.master_seed)
    }
}
