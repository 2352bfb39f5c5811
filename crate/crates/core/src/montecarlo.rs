//! Replicated experiments over a DGP and a list of estimators.
//!
//! Replication `r` of the cell with sample size `n` draws its dataset from a
//! seed derived only from `(master_seed, n, r)`, and every estimator sees that
//! same dataset. Replications run on a rayon pool; results are gathered in
//! replication order, so the statistics do not depend on the worker count.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{simulate_dataset, Dataset, DgpConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    ols, select_alpha_with_folds, tsls_regularized_with_basis, tsls_with_basis, EstimatorResult,
    RegularizationScheme, SchemeKind, SpectralBasis, DEFAULT_FOLDS,
};
use crate::rng::derive_seed;

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

/// One estimator to run, with a unique label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Ols {
        label: String,
    },
    Tsls {
        label: String,
    },
    /// Regularized 2SLS with a fixed scheme.
    TslsRegularized {
        label: String,
        scheme: RegularizationScheme,
    },
    /// Regularized 2SLS with the parameter chosen by cross-validation over
    /// `grid` on each dataset.
    TslsSelected {
        label: String,
        scheme_kind: SchemeKind,
        grid: Vec<f64>,
        #[serde(default = "default_folds")]
        folds: usize,
    },
}

impl EstimatorSpec {
    pub fn ols() -> Self {
        EstimatorSpec::Ols {
            label: "ols".into(),
        }
    }

    pub fn tsls() -> Self {
        EstimatorSpec::Tsls {
            label: "tsls".into(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            EstimatorSpec::Ols { label }
            | EstimatorSpec::Tsls { label }
            | EstimatorSpec::TslsRegularized { label, .. }
            | EstimatorSpec::TslsSelected { label, .. } => label,
        }
    }

    fn needs_basis(&self) -> bool {
        !matches!(self, EstimatorSpec::Ols { .. })
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.label().is_empty() {
            return Err(Error::config(format!("{field}.label"), "must not be empty"));
        }
        match self {
            EstimatorSpec::TslsRegularized { scheme, .. } => scheme.validate(&format!("{field}.scheme")),
            EstimatorSpec::TslsSelected { grid, folds, .. } => {
                if grid.is_empty() {
                    return Err(Error::config(format!("{field}.grid"), "must not be empty"));
                }
                if grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                    return Err(Error::config(
                        format!("{field}.grid"),
                        "values must be positive and finite",
                    ));
                }
                if grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config(
                        format!("{field}.grid"),
                        "values must be strictly ascending",
                    ));
                }
                if *folds < 2 {
                    return Err(Error::config(
                        format!("{field}.folds"),
                        format!("must be at least 2, got {folds}"),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Runs this estimator on `data`.
    pub fn estimate(&self, data: &Dataset) -> Result<EstimatorResult> {
        let basis = if self.needs_basis() {
            Some(SpectralBasis::new(data.z())?)
        } else {
            None
        };
        self.estimate_with(data, basis.as_ref())
    }

    /// Runs this estimator reusing a precomputed basis of `data.z()`.
    pub fn estimate_with(&self, data: &Dataset, basis: Option<&SpectralBasis>) -> Result<EstimatorResult> {
        let basis = || basis.ok_or_else(|| Error::Parameter("spectral basis required".into()));
        match self {
            EstimatorSpec::Ols { .. } => ols(data),
            EstimatorSpec::Tsls { .. } => tsls_with_basis(data, basis()?),
            EstimatorSpec::TslsRegularized { scheme, .. } => {
                tsls_regularized_with_basis(data, basis()?, scheme)
            }
            EstimatorSpec::TslsSelected {
                scheme_kind,
                grid,
                folds,
                ..
            } => {
                let scheme = select_alpha_with_folds(data, *scheme_kind, grid, *folds)?;
                tsls_regularized_with_basis(data, basis()?, &scheme)
            }
        }
    }
}

/// Runs every spec on one dataset, sharing the spectral basis.
pub fn estimate_all(specs: &[EstimatorSpec], data: &Dataset) -> Vec<Result<EstimatorResult>> {
    let basis = if specs.iter().any(EstimatorSpec::needs_basis) {
        Some(SpectralBasis::new(data.z()))
    } else {
        None
    };
    specs
        .iter()
        .map(|spec| match (&basis, spec.needs_basis()) {
            (Some(Err(e)), true) => Err(Error::Data(e.to_string())),
            (Some(Ok(b)), true) => spec.estimate_with(data, Some(b)),
            _ => spec.estimate_with(data, None),
        })
        .collect()
}

fn default_estimators() -> Vec<EstimatorSpec> {
    vec![EstimatorSpec::ols(), EstimatorSpec::tsls()]
}

fn default_replications() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dgp: DgpConfig,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Sample sizes to run; each overrides `dgp.n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
}

impl ScenarioConfig {
    /// Parses a TOML document holding just the scenario fields, fills
    /// defaults and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::config("scenario", e.message()))?;
        config.resolve_defaults();
        config.validate("scenario")?;
        Ok(config)
    }

    pub fn resolve_defaults(&mut self) {
        self.dgp.resolve_defaults();
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config(format!("{field}.replications"), "must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config(format!("{field}.estimators"), "must not be empty"));
        }
        let mut labels = HashSet::new();
        for (i, spec) in self.estimators.iter().enumerate() {
            spec.validate(&format!("{field}.estimators[{i}]"))?;
            if !labels.insert(spec.label()) {
                return Err(Error::config(
                    format!("{field}.estimators[{i}].label"),
                    format!("duplicate label `{}`", spec.label()),
                ));
            }
        }
        if let Some(grid) = &self.n_grid {
            if grid.is_empty() {
                return Err(Error::config(format!("{field}.n_grid"), "must not be empty"));
            }
            for &n in grid {
                self.cell_config(n)
                    .validate(&format!("{field}.dgp"))
                    .map_err(|e| match e {
                        Error::Config { field: f, message } => Error::config(
                            f,
                            format!("{message} (with n = {n} from {field}.n_grid)"),
                        ),
                        other => other,
                    })?;
            }
        } else {
            self.dgp.validate(&format!("{field}.dgp"))?;
        }
        Ok(())
    }

    /// Sample sizes in run order.
    pub fn sample_sizes(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| vec![self.dgp.n])
    }

    fn cell_config(&self, n: usize) -> DgpConfig {
        DgpConfig {
            n,
            ..self.dgp.clone()
        }
    }
}

/// Seed of replication `r` in the cell with sample size `n`.
pub fn replication_seed(master_seed: u64, n: usize, r: usize) -> u64 {
    derive_seed(derive_seed(master_seed, n as u64), r as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateStats {
    pub coordinate: usize,
    pub mean_bias: f64,
    pub median_bias: f64,
    /// Median of `|δ̂ − δ_true|`.
    pub mad: f64,
    pub mse: f64,
    /// 90th minus 10th percentile of `δ̂`.
    pub decile_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub estimator: String,
    pub n: usize,
    pub successes: usize,
    pub failure_count: usize,
    /// Empty when every replication failed.
    pub coordinates: Vec<CoordinateStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationStats {
    pub cells: Vec<CellStats>,
}

impl ReplicationStats {
    pub fn cell(&self, estimator: &str, n: usize) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.n == n)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bias and dispersion statistics of replicated estimates, one entry per
/// coordinate of `delta_true`.
pub fn summarize(raw: &[Vec<f64>], delta_true: &[f64]) -> Result<Vec<CoordinateStats>> {
    if raw.is_empty() {
        return Err(Error::Parameter("no replications to summarize".into()));
    }
    if let Some(bad) = raw.iter().find(|row| row.len() != delta_true.len()) {
        return Err(Error::Parameter(format!(
            "estimate has {} coordinates but delta_true has {}",
            bad.len(),
            delta_true.len()
        )));
    }
    let count = raw.len() as f64;
    Ok(delta_true
        .iter()
        .enumerate()
        .map(|(j, &truth)| {
            let errors: Vec<f64> = raw.iter().map(|row| row[j] - truth).collect();
            let mean_bias = errors.iter().sum::<f64>() / count;
            let mse = errors.iter().map(|e| e * e).sum::<f64>() / count;
            let mut sorted = errors.clone();
            sorted.sort_by(f64::total_cmp);
            let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
            abs.sort_by(f64::total_cmp);
            CoordinateStats {
                coordinate: j,
                mean_bias,
                median_bias: quantile(&sorted, 0.5),
                mad: quantile(&abs, 0.5),
                mse,
                decile_range: quantile(&sorted, 0.9) - quantile(&sorted, 0.1),
            }
        })
        .collect())
}

/// Runs the scenario on the current rayon pool.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ReplicationStats> {
    config.validate("scenario")?;
    let mut cells = Vec::new();
    for n in config.sample_sizes() {
        let dgp = config.cell_config(n);
        let per_replication: Vec<Vec<Result<Vec<f64>>>> = (0..config.replications)
            .into_par_iter()
            .map(|r| -> Result<Vec<Result<Vec<f64>>>> {
                let data = simulate_dataset(&dgp, replication_seed(config.master_seed, n, r))?;
                Ok(estimate_all(&config.estimators, &data)
                    .into_iter()
                    .map(|res| res.map(|e| e.delta_hat))
                    .collect())
            })
            .collect::<Result<_>>()?;

        for (e, spec) in config.estimators.iter().enumerate() {
            let mut estimates = Vec::with_capacity(config.replications);
            let mut failure_count = 0;
            for rep in &per_replication {
                match &rep[e] {
                    Ok(delta) if delta.iter().all(|v| v.is_finite()) => estimates.push(delta.clone()),
                    _ => failure_count += 1,
                }
            }
            let coordinates = if estimates.is_empty() {
                Vec::new()
            } else {
                summarize(&estimates, &dgp.delta_true)?
            };
            cells.push(CellStats {
                estimator: spec.label().to_string(),
                n,
                successes: estimates.len(),
                failure_count,
                coordinates,
            });
        }
    }
    Ok(ReplicationStats { cells })
}

/// Runs the scenario on a dedicated pool of `workers` threads.
pub fn run_scenario_with_workers(config: &ScenarioConfig, workers: usize) -> Result<ReplicationStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_scenario(config))
}
