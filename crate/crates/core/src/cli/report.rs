//! Report documents in JSON and CSV.
//!
//! Both formats embed the toolkit version, the master seed and the resolved
//! configuration. Floats are written in their shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::diagnostics::{CauchyGapReport, EffectiveCountReport, SpectrumReport};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorResult, CONDITION_NUMBER, EFFECTIVE_DF};
use crate::montecarlo::ReplicationStats;
use crate::VERSION;

use super::config::{OutputFormat, RunConfig};

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledResult {
    pub label: String,
    #[serde(flatten)]
    pub result: EstimatorResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseReport {
    /// One entry per endogenous regressor.
    pub effective_count: Vec<EffectiveCountReport>,
    pub cauchy_gap: CauchyGapReport,
    pub spectrum: SpectrumReport,
    pub assumption3: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportBody {
    Simulate(ReplicationStats),
    Estimate(Vec<LabeledResult>),
    Diagnose(DiagnoseReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// The resolved configuration, without its output path so that the same
    /// run written to two places produces identical bytes.
    pub config: RunConfig,
    pub body: ReportBody,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Results<'a> {
    Simulate(&'a ReplicationStats),
    Estimate(&'a [LabeledResult]),
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    config: &'a RunConfig,
    results: Option<Results<'a>>,
    diagnostics: Option<&'a DiagnoseReport>,
    version: &'a str,
    seed: Option<u64>,
}

impl Report {
    pub fn new(config: &RunConfig, body: ReportBody) -> Self {
        let mut config = config.clone();
        config.output_path = None;
        Report { config, body }
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let (results, diagnostics) = match &self.body {
            ReportBody::Simulate(stats) => (Some(Results::Simulate(stats)), None),
            ReportBody::Estimate(results) => (Some(Results::Estimate(results)), None),
            ReportBody::Diagnose(report) => (None, Some(report)),
        };
        let doc = JsonDocument {
            config: &self.config,
            results,
            diagnostics,
            version: VERSION,
            seed: self.config.seed(),
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(json_error)?;
        text.push('\n');
        Ok(text)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        let config = serde_json::to_string(&self.config).map_err(json_error)?;
        let seed = self.config.seed().map_or_else(String::new, |s| s.to_string());
        writeln!(out, "# version={VERSION}").unwrap();
        writeln!(out, "# seed={seed}").unwrap();
        writeln!(out, "# config={config}").unwrap();
        match &self.body {
            ReportBody::Simulate(stats) => simulate_rows(&mut out, stats),
            ReportBody::Estimate(results) => estimate_rows(&mut out, results),
            ReportBody::Diagnose(report) => diagnose_rows(&mut out, report),
        }
        Ok(out)
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Data(format!("cannot serialize report: {e}"))
}

fn simulate_rows(out: &mut String, stats: &ReplicationStats) {
    out.push_str(
        "estimator,n,coordinate,successes,failure_count,mean_bias,median_bias,mad,mse,decile_range\n",
    );
    for cell in &stats.cells {
        if cell.coordinates.is_empty() {
            writeln!(
                out,
                "{},{},,{},{},,,,,",
                cell.estimator, cell.n, cell.successes, cell.failure_count
            )
            .unwrap();
        }
        for c in &cell.coordinates {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                cell.estimator,
                cell.n,
                c.coordinate,
                cell.successes,
                cell.failure_count,
                fmt_f64(c.mean_bias),
                fmt_f64(c.median_bias),
                fmt_f64(c.mad),
                fmt_f64(c.mse),
                fmt_f64(c.decile_range),
            )
            .unwrap();
        }
    }
}

fn estimate_rows(out: &mut String, results: &[LabeledResult]) {
    out.push_str("estimator,method,coordinate,delta_hat,condition_number,effective_df\n");
    let opt = |v: Option<&f64>| v.map_or_else(String::new, |v| fmt_f64(*v));
    for r in results {
        for (j, d) in r.result.delta_hat.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.label,
                r.result.method,
                j,
                fmt_f64(*d),
                opt(r.result.diagnostics.get(CONDITION_NUMBER)),
                opt(r.result.diagnostics.get(EFFECTIVE_DF)),
            )
            .unwrap();
        }
    }
}

/// Long format: one value per row, keyed by section, name and index.
fn diagnose_rows(out: &mut String, report: &DiagnoseReport) {
    out.push_str("section,key,index,value\n");
    let mut row = |section: &str, key: &str, index: Option<usize>, value: String| {
        let index = index.map_or_else(String::new, |i| i.to_string());
        writeln!(out, "{section},{key},{index},{value}").unwrap();
    };
    for (g, ec) in report.effective_count.iter().enumerate() {
        row("effective_count", "threshold", Some(g), fmt_f64(ec.threshold));
        row("effective_count", "count_effective", Some(g), ec.count_effective.to_string());
        row(
            "effective_count",
            "count_below_threshold",
            Some(g),
            ec.count_below_threshold.to_string(),
        );
        row("effective_count", "count_irrelevant", Some(g), ec.count_irrelevant.to_string());
    }
    let gap = &report.cauchy_gap;
    for (i, (k, q)) in gap.k_grid.iter().zip(&gap.q_values).enumerate() {
        row("cauchy_gap", "k", Some(i), k.to_string());
        // The trace summarizes the G×G matrix; for G = 1 it is Q_K itself.
        row("cauchy_gap", "q_trace", Some(i), fmt_f64(q.trace()));
    }
    for (i, g) in gap.gaps.iter().enumerate() {
        row("cauchy_gap", "gap", Some(i), fmt_f64(*g));
    }
    let verdict = serde_json::to_value(gap.verdict)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    row("cauchy_gap", "verdict", None, verdict);
    let s = &report.spectrum;
    for (i, l) in s.eigenvalues.iter().enumerate() {
        row("spectrum", "eigenvalue", Some(i), fmt_f64(*l));
    }
    for t in &s.tail_mass {
        row("spectrum", "tail_mass", Some(t.m), fmt_f64(t.mass));
    }
    row("spectrum", "flatness", None, fmt_f64(s.flatness));
    row("spectrum", "decay_fit", None, fmt_f64(s.decay_fit));
    row("spectrum", "nuclear_estimate", None, fmt_f64(s.nuclear_estimate));
    for (k, v) in &report.assumption3 {
        row("assumption3", k, None, fmt_f64(*v));
    }
}
