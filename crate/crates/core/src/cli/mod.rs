//! The `simulate`, `estimate` and `diagnose` workflows behind the binary.

pub mod config;
pub mod ingest;
pub mod report;

use std::path::Path;

use nalgebra::DMatrix;

use crate::dgp::{pi_matrix, Dataset};
use crate::diagnostics::{assumption3_checks, covariance_spectrum, effective_count, q_sequence};
use crate::error::{Error, Result};
use crate::montecarlo::{estimate_all, run_scenario};

pub use config::{parse_config, parse_config_with, to_canonical, Command, OutputFormat, Overrides, RunConfig};
pub use report::{DiagnoseReport, LabeledResult, Report, ReportBody};

/// Runs the Monte Carlo scenario of a `simulate` config.
pub fn cmd_simulate(config: &RunConfig) -> Result<Report> {
    let scenario = config
        .scenario
        .as_ref()
        .ok_or_else(|| Error::config("scenario", "simulate requires a [scenario] section"))?;
    let stats = run_scenario(scenario)?;
    Ok(Report::new(config, ReportBody::Simulate(stats)))
}

fn load_input(config: &RunConfig) -> Result<Dataset> {
    let path = config
        .input_path
        .as_ref()
        .ok_or_else(|| Error::config("input_path", "input data is required (--data <path>)"))?;
    ingest::read_dataset_file(path)
}

/// Runs each configured estimator on the input data. Any estimator error
/// fails the command.
pub fn cmd_estimate(config: &RunConfig) -> Result<Report> {
    let data = load_input(config)?;
    let results = estimate_all(&config.estimators, &data)
        .into_iter()
        .zip(&config.estimators)
        .map(|(res, spec)| {
            res.map(|result| LabeledResult {
                label: spec.label().to_string(),
                result,
            })
            .map_err(|e| annotate(e, spec.label()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report::new(config, ReportBody::Estimate(results)))
}

fn annotate(e: Error, label: &str) -> Error {
    match e {
        Error::Rank(m) => Error::Rank(format!("estimator `{label}`: {m}")),
        Error::Parameter(m) => Error::Parameter(format!("estimator `{label}`: {m}")),
        Error::Data(m) => Error::Data(format!("estimator `{label}`: {m}")),
        other => other,
    }
}

/// Many-instrument diagnostics of the input data.
pub fn cmd_diagnose(config: &RunConfig) -> Result<Report> {
    let data = load_input(config)?;
    let opts = config.diagnose.clone().unwrap_or_default();
    let pi = resolve_pi(config, &data)?;
    let effective_count = pi
        .column_iter()
        .map(|col| effective_count(col.as_slice(), data.n(), opts.c))
        .collect();
    let k_grid = opts.k_grid.clone().unwrap_or_else(|| default_k_grid(data.k()));
    let cauchy_gap = q_sequence(data.z(), &pi, &k_grid)?;
    let spectrum = covariance_spectrum(data.z(), opts.weights.as_deref())?;
    let assumption3 = assumption3_checks(&data, &pi)?;
    Ok(Report::new(
        config,
        ReportBody::Diagnose(DiagnoseReport {
            effective_count,
            cauchy_gap,
            spectrum,
            assumption3,
        }),
    ))
}

/// K/8, K/4, K/2 and K, without repeats.
pub fn default_k_grid(k: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = [k / 8, k / 4, k / 2, k].into_iter().map(|v| v.max(1)).collect();
    grid.dedup();
    grid
}

fn resolve_pi(config: &RunConfig, data: &Dataset) -> Result<DMatrix<f64>> {
    let (k, g) = (data.k(), data.g());
    let opts = config.diagnose.as_ref();
    let pi = if let Some(values) = opts.and_then(|o| o.pi.as_ref()) {
        if g != 1 {
            return Err(Error::Parameter(format!(
                "diagnose.pi gives one column but the data has g = {g} regressors; use diagnose.pi_path"
            )));
        }
        DMatrix::from_column_slice(values.len(), 1, values)
    } else if let Some(path) = opts.and_then(|o| o.pi_path.as_ref()) {
        ingest::read_pi_file(path)?
    } else if let Some(scenario) = &config.scenario {
        let dgp = &scenario.dgp;
        if dgp.k != k || dgp.g != g {
            return Err(Error::Parameter(format!(
                "scenario.dgp describes k = {}, g = {} but the data has k = {k}, g = {g}",
                dgp.k, dgp.g
            )));
        }
        pi_matrix(&dgp.pi, k, g, data.n())?
    } else {
        return Err(Error::Parameter(
            "diagnose needs the first-stage coefficients: either supply them directly \
             (diagnose.pi inline, or diagnose.pi_path pointing to a CSV with K rows and one column \
             per regressor) or include the [scenario.dgp] section that generated the data"
                .into(),
        ));
    };
    if pi.shape() != (k, g) {
        return Err(Error::Parameter(format!(
            "pi has shape {}×{} but the data needs {k}×{g}",
            pi.nrows(),
            pi.ncols()
        )));
    }
    Ok(pi)
}

/// Runs the configured command and renders its report.
pub fn execute(config: &RunConfig) -> Result<String> {
    let report = match config.command {
        Command::Simulate => cmd_simulate(config)?,
        Command::Estimate => cmd_estimate(config)?,
        Command::Diagnose => cmd_diagnose(config)?,
    };
    report.render(config.output_format)
}

/// [`execute`] on a pool of `workers` threads, or the default pool.
pub fn execute_with_workers(config: &RunConfig, workers: Option<usize>) -> Result<String> {
    match workers {
        None => execute(config),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {w} workers: {e}")))?
            .install(|| execute(config)),
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_report(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Machine-readable error record for standard error.
pub fn error_record(e: &Error) -> String {
    serde_json::json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        }
    })
    .to_string()
}
