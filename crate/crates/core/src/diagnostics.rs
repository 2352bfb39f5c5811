//! Diagnostics for many-instrument asymptotics: effective-instrument counts,
//! the `Q_K = π'_K (Z'_K Z_K / N) π_K` sequence and its successive gaps,
//! the covariance spectrum of the instruments, and the sample counterparts
//! of the usual many-instrument regularity conditions.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::dgp::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, sorted_symmetric_eigen};

/// Minimum late-gap size for a `diverging` verdict.
pub const EPSILON_DIV: f64 = 1e-2;
/// Gap size under which a shrinking sequence is `cauchy_like`.
pub const EPSILON_CAUCHY: f64 = 1e-3;
/// Truncation points reported in [`SpectrumReport::tail_mass`].
pub const TAIL_MASS_POINTS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveCountReport {
    /// `c / √N`.
    pub threshold: f64,
    pub count_effective: usize,
    pub count_below_threshold: usize,
    pub count_irrelevant: usize,
    pub indices_effective: Vec<usize>,
}

/// Classifies each coefficient: effective iff `|π_k| > c/√n`, irrelevant iff
/// `π_k = 0`, otherwise below threshold.
pub fn effective_count(pi: &[f64], n: usize, c: f64) -> EffectiveCountReport {
    let threshold = c / (n.max(1) as f64).sqrt();
    let mut indices_effective = Vec::new();
    let mut count_irrelevant = 0;
    for (i, &p) in pi.iter().enumerate() {
        if p == 0.0 {
            count_irrelevant += 1;
        } else if p.abs() > threshold {
            indices_effective.push(i);
        }
    }
    let count_effective = indices_effective.len();
    EffectiveCountReport {
        threshold,
        count_effective,
        count_below_threshold: pi.len() - count_effective - count_irrelevant,
        count_irrelevant,
        indices_effective,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CauchyLike,
    Diverging,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyGapReport {
    pub k_grid: Vec<usize>,
    /// One G×G matrix per grid point, serialized as a list of rows.
    #[serde(serialize_with = "serialize_matrices")]
    pub q_values: Vec<DMatrix<f64>>,
    /// Frobenius norms of successive differences, length `k_grid.len() − 1`.
    pub gaps: Vec<f64>,
    pub verdict: Verdict,
}

fn serialize_matrices<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<Vec<f64>>> = ms
        .iter()
        .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
        .collect();
    rows.serialize(s)
}

/// `Q_K` for each K in `k_grid`, using the leading K columns of `z` and rows
/// of `pi` (K×G), and the gaps between consecutive grid points.
pub fn q_sequence(z: &DMatrix<f64>, pi: &DMatrix<f64>, k_grid: &[usize]) -> Result<CauchyGapReport> {
    let (n, k_max) = z.shape();
    if pi.nrows() != k_max {
        return Err(Error::Parameter(format!(
            "pi has {} rows but Z has {k_max} columns",
            pi.nrows()
        )));
    }
    if k_grid.is_empty() {
        return Err(Error::Parameter("k_grid is empty".into()));
    }
    if k_grid.iter().any(|&k| k == 0 || k > k_max) {
        return Err(Error::Parameter(format!(
            "k_grid values must lie in [1, {k_max}], got {k_grid:?}"
        )));
    }
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(format!(
            "k_grid must be strictly ascending, got {k_grid:?}"
        )));
    }
    if !all_finite(z) || !all_finite(pi) {
        return Err(Error::Data("non-finite values in Z or pi".into()));
    }

    // Q_K = (Z_K π_K)'(Z_K π_K)/n; the fitted values are accumulated column
    // block by column block.
    let mut fitted = DMatrix::<f64>::zeros(n, pi.ncols());
    let mut done = 0;
    let mut q_values = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        fitted += z.columns(done, k - done) * pi.rows(done, k - done);
        done = k;
        q_values.push(fitted.tr_mul(&fitted) / n as f64);
    }
    let gaps: Vec<f64> = q_values.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
    let verdict = classify_gaps(&gaps);
    Ok(CauchyGapReport {
        k_grid: k_grid.to_vec(),
        q_values,
        gaps,
        verdict,
    })
}

/// `diverging` when the mean of the last third of the gaps is at least the
/// mean of the first third and at least [`EPSILON_DIV`]; `cauchy_like` when
/// the gaps never increase and the last is below [`EPSILON_CAUCHY`].
pub fn classify_gaps(gaps: &[f64]) -> Verdict {
    if gaps.is_empty() {
        return Verdict::Inconclusive;
    }
    let third = gaps.len().div_ceil(3);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&gaps[..third]);
    let last = mean(&gaps[gaps.len() - third..]);
    if last >= first && last >= EPSILON_DIV {
        Verdict::Diverging
    } else if gaps.windows(2).all(|w| w[1] <= w[0]) && gaps[gaps.len() - 1] < EPSILON_CAUCHY {
        Verdict::CauchyLike
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailMass {
    pub m: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// Eigenvalues of `D^{1/2}(Z'Z/n)D^{1/2}`, descending.
    pub eigenvalues: Vec<f64>,
    /// `Σ_{j>m} λ_j / Σ λ_j` for m in [`TAIL_MASS_POINTS`].
    pub tail_mass: Vec<TailMass>,
    /// `λ_min / λ_max`.
    pub flatness: f64,
    /// Average ratio of successive eigenvalues, `(λ_last/λ_1)^{1/(r−1)}`
    /// over the r positive eigenvalues.
    pub decay_fit: f64,
    /// `Σ λ_j`.
    pub nuclear_estimate: f64,
}

/// Spectrum of the (optionally quadrature-weighted) instrument covariance.
pub fn covariance_spectrum(z: &DMatrix<f64>, weights: Option<&[f64]>) -> Result<SpectrumReport> {
    let (n, k) = z.shape();
    if n == 0 || k == 0 {
        return Err(Error::Data("instrument matrix is empty".into()));
    }
    if !all_finite(z) {
        return Err(Error::Data("instrument matrix contains non-finite values".into()));
    }
    let mut cov = z.tr_mul(z) / n as f64;
    if let Some(w) = weights {
        if w.len() != k {
            return Err(Error::Parameter(format!(
                "weights have length {} but Z has {k} columns",
                w.len()
            )));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Parameter("weights must be non-negative".into()));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("weights must sum to 1, got {total}")));
        }
        let root: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] *= root[i] * root[j];
            }
        }
    }
    let (mut eigenvalues, _) = sorted_symmetric_eigen(&cov);
    // Round-off can leave tiny negative eigenvalues.
    eigenvalues.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(spectrum_report(eigenvalues))
}

fn spectrum_report(eigenvalues: Vec<f64>) -> SpectrumReport {
    let total: f64 = eigenvalues.iter().sum();
    let tail_mass = TAIL_MASS_POINTS
        .iter()
        .map(|&m| {
            let tail: f64 = eigenvalues.iter().skip(m).sum();
            TailMass {
                m,
                mass: if total > 0.0 { tail / total } else { 0.0 },
            }
        })
        .collect();
    let max = eigenvalues[0];
    let min = *eigenvalues.last().expect("non-empty spectrum");
    let flatness = if max > 0.0 { (min / max).clamp(0.0, 1.0) } else { 0.0 };
    let positive: Vec<f64> = eigenvalues.iter().copied().filter(|&v| v > 0.0).collect();
    let decay_fit = match positive.len() {
        0 | 1 => 1.0,
        r => (positive[r - 1] / positive[0]).powf(1.0 / (r - 1) as f64),
    };
    SpectrumReport {
        eigenvalues,
        tail_mass,
        flatness,
        decay_fit,
        nuclear_estimate: total,
    }
}

/// Sample counterparts of the many-instrument regularity conditions:
/// `kappa_hat = K/N`, `max_leverage = max_i ‖π'Z_i‖/√N` and `q_hat`, the
/// smallest eigenvalue of `π'(Z'Z/N)π`.
pub fn assumption3_checks(data: &Dataset, pi: &DMatrix<f64>) -> Result<BTreeMap<String, f64>> {
    let (n, k) = (data.n(), data.k());
    if pi.nrows() != k {
        return Err(Error::Parameter(format!(
            "pi has {} rows but the data has K = {k} instruments",
            pi.nrows()
        )));
    }
    let fitted = data.z() * pi;
    let root_n = (n as f64).sqrt();
    let max_leverage = fitted
        .row_iter()
        .map(|r| r.norm() / root_n)
        .fold(0.0, f64::max);
    let q = fitted.tr_mul(&fitted) / n as f64;
    let (values, _) = sorted_symmetric_eigen(&q);
    let q_hat = values.last().copied().unwrap_or(0.0).max(0.0);
    Ok(BTreeMap::from([
        ("kappa_hat".to_string(), k as f64 / n as f64),
        ("max_leverage".to_string(), max_leverage),
        ("q_hat".to_string(), q_hat),
    ]))
}
