//! OLS, 2SLS and spectrally regularized 2SLS.

mod filter;
mod select;
mod spectral;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dgp::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, symmetrize};

pub use filter::{factors_for, filter_factors, RegularizationScheme, SchemeKind};
pub use select::{select_alpha, select_alpha_with_folds, DEFAULT_FOLDS};
pub use spectral::{eigensystem_of_gram, EigenSystem, SpectralBasis, PSD_TOL, RANK_TOL};

/// Diagnostics key for the condition number of the second-stage matrix.
pub const CONDITION_NUMBER: &str = "condition_number";
/// Diagnostics key for the sum of filter factors.
pub const EFFECTIVE_DF: &str = "effective_df";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub delta_hat: Vec<f64>,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<RegularizationScheme>,
    /// `P^q X`, the fitted first stage. Kept out of reports.
    #[serde(skip)]
    pub first_stage_fitted: Option<DMatrix<f64>>,
    pub diagnostics: BTreeMap<String, f64>,
}

/// `(X'X)⁻¹X'y`.
pub fn ols(data: &Dataset) -> Result<EstimatorResult> {
    let x = data.x();
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(&DMatrix::from_column_slice(data.n(), 1, data.y().as_slice()));
    let (delta, cond) = solve_spd(&xtx, &xty, "X'X", "")?;
    Ok(EstimatorResult {
        delta_hat: delta.column(0).iter().copied().collect(),
        method: "ols".into(),
        scheme: None,
        first_stage_fitted: None,
        diagnostics: BTreeMap::from([(CONDITION_NUMBER.to_string(), cond)]),
    })
}

/// `P_Z v` with `P_Z = Z(Z'Z)⁻¹Z'`. Requires `Z` of full column rank.
pub fn projection_apply(z: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.nrows() != v.nrows() {
        return Err(Error::Data(format!(
            "Z has {} rows but v has {}",
            z.nrows(),
            v.nrows()
        )));
    }
    let basis = SpectralBasis::new(z)?;
    basis.require_full_rank()?;
    Ok(basis.apply(&vec![1.0; z.ncols()], v))
}

/// Filtered projection `P^q v` for a regularization scheme. Works for any
/// shape of `Z`, including K ≥ N.
pub fn regularized_projection_apply(
    z: &DMatrix<f64>,
    v: &DMatrix<f64>,
    scheme: &RegularizationScheme,
) -> Result<DMatrix<f64>> {
    if z.nrows() != v.nrows() {
        return Err(Error::Data(format!(
            "Z has {} rows but v has {}",
            z.nrows(),
            v.nrows()
        )));
    }
    let basis = SpectralBasis::new(z)?;
    let q = factors_for(basis.eigenvalues(), scheme)?;
    Ok(basis.apply(&q, v))
}

/// Classical 2SLS, `(X'P_Z X)⁻¹ X'P_Z y`.
pub fn tsls(data: &Dataset) -> Result<EstimatorResult> {
    tsls_with_basis(data, &SpectralBasis::new(data.z())?)
}

/// 2SLS reusing a precomputed basis of `data.z()`.
pub fn tsls_with_basis(data: &Dataset, basis: &SpectralBasis) -> Result<EstimatorResult> {
    basis.require_full_rank()?;
    let q = vec![1.0; data.k()];
    filtered_iv(data, basis, &q, "tsls", None, "")
}

/// Regularized 2SLS, `(X'P^q X)⁻¹ X'P^q y` with `P^q` built from
/// [`filter_factors`].
pub fn tsls_regularized(data: &Dataset, scheme: &RegularizationScheme) -> Result<EstimatorResult> {
    tsls_regularized_with_basis(data, &SpectralBasis::new(data.z())?, scheme)
}

pub fn tsls_regularized_with_basis(
    data: &Dataset,
    basis: &SpectralBasis,
    scheme: &RegularizationScheme,
) -> Result<EstimatorResult> {
    let q = factors_for(basis.eigenvalues(), scheme)?;
    let label = format!("tsls_{}", scheme.kind());
    filtered_iv(
        data,
        basis,
        &q,
        &label,
        Some(*scheme),
        "; try stronger regularization (e.g. a larger alpha)",
    )
}

fn filtered_iv(
    data: &Dataset,
    basis: &SpectralBasis,
    q: &[f64],
    method: &str,
    scheme: Option<RegularizationScheme>,
    hint: &str,
) -> Result<EstimatorResult> {
    let x = data.x();
    let fitted = basis.apply(q, x);
    let a = symmetrize(&x.tr_mul(&fitted));
    let b = fitted.tr_mul(&DMatrix::from_column_slice(data.n(), 1, data.y().as_slice()));
    let (delta, cond) = solve_spd(&a, &b, "X'PX", hint)?;
    let effective_df: f64 = q.iter().sum();
    Ok(EstimatorResult {
        delta_hat: delta.column(0).iter().copied().collect(),
        method: method.into(),
        scheme,
        first_stage_fitted: Some(fitted),
        diagnostics: BTreeMap::from([
            (CONDITION_NUMBER.to_string(), cond),
            (EFFECTIVE_DF.to_string(), effective_df),
        ]),
    })
}
