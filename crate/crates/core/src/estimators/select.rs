//! Data-driven choice of the regularization parameter by V-fold
//! cross-validation of the filtered first stage.
//!
//! For each fold the first stage is fitted on the remaining rows,
//! `π̂ = U diag(q_j/λ_j) U' Z'_train X_train`, and scored by the squared
//! prediction error of `Z_test π̂` on the held-out rows. The grid member with
//! the smallest pooled error wins; near-ties go to the larger parameter.

use nalgebra::DMatrix;

use crate::dgp::Dataset;
use crate::error::{Error, Result};

use super::filter::{factors_for, RegularizationScheme, SchemeKind};
use super::spectral::{eigensystem_of_gram, SpectralBasis};

pub const DEFAULT_FOLDS: usize = 5;

/// Relative slack under which two CV scores count as tied.
const TIE_TOL: f64 = 1e-12;

/// [`select_alpha_with_folds`] with [`DEFAULT_FOLDS`] folds.
pub fn select_alpha(
    data: &Dataset,
    scheme_kind: SchemeKind,
    grid: &[f64],
) -> Result<RegularizationScheme> {
    select_alpha_with_folds(data, scheme_kind, grid, DEFAULT_FOLDS)
}

/// Picks the grid member minimizing the cross-validated first-stage error.
///
/// The grid is read per scheme: Tikhonov `alpha`, spectral cut-off
/// `threshold`, principal-components `m` and Landweber `iterations` (the
/// last two rounded to integers). Landweber uses step `1/λ_max` of the full
/// Gram matrix, which is admissible on every training fold.
pub fn select_alpha_with_folds(
    data: &Dataset,
    scheme_kind: SchemeKind,
    grid: &[f64],
    folds: usize,
) -> Result<RegularizationScheme> {
    validate_grid(grid)?;
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(Error::Parameter(format!(
            "cross-validation needs between 2 and n = {n} folds, got {folds}"
        )));
    }
    let landweber_step = match scheme_kind {
        SchemeKind::Landweber => {
            let max = SpectralBasis::new(data.z())?.max_eigenvalue();
            if max <= 0.0 {
                return Err(Error::Rank("instrument matrix is zero".into()));
            }
            1.0 / max
        }
        _ => 0.0,
    };
    let candidates: Vec<RegularizationScheme> = grid
        .iter()
        .map(|&value| candidate(scheme_kind, value, landweber_step))
        .collect::<Result<_>>()?;
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }

    let scores = cv_scores(data, &candidates, folds)?;
    let mut best = 0;
    for (i, &score) in scores.iter().enumerate().skip(1) {
        if score <= scores[best] * (1.0 + TIE_TOL) {
            best = i;
        }
    }
    Ok(candidates[best])
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Parameter("regularization grid is empty".into()));
    }
    if grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::Parameter(
            "regularization grid values must be positive and finite".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "regularization grid must be sorted strictly ascending".into(),
        ));
    }
    Ok(())
}

fn candidate(kind: SchemeKind, value: f64, landweber_step: f64) -> Result<RegularizationScheme> {
    let count = |what: &str| -> Result<u32> {
        let rounded = value.round();
        if rounded < 1.0 || rounded > u32::MAX as f64 {
            Err(Error::Parameter(format!(
                "grid value {value} is not a valid {what}"
            )))
        } else {
            Ok(rounded as u32)
        }
    };
    Ok(match kind {
        SchemeKind::Tikhonov => RegularizationScheme::Tikhonov { alpha: value },
        SchemeKind::SpectralCutoff => RegularizationScheme::SpectralCutoff { threshold: value },
        SchemeKind::PrincipalComponents => RegularizationScheme::PrincipalComponents {
            m: count("component count")? as usize,
        },
        SchemeKind::Landweber => RegularizationScheme::Landweber {
            iterations: count("iteration count")?,
            step: landweber_step,
        },
    })
}

/// Pooled held-out squared error per candidate, divided by n.
pub(crate) fn cv_scores(
    data: &Dataset,
    candidates: &[RegularizationScheme],
    folds: usize,
) -> Result<Vec<f64>> {
    let n = data.n();
    let z = data.z();
    let x = data.x();
    let mut totals = vec![0.0; candidates.len()];

    for fold in 0..folds {
        let start = fold * n / folds;
        let end = (fold + 1) * n / folds;
        let train: Vec<usize> = (0..start).chain(end..n).collect();
        let test: Vec<usize> = (start..end).collect();

        let z_train = z.select_rows(&train);
        let x_train = x.select_rows(&train);
        let z_test = z.select_rows(&test);
        let x_test = x.select_rows(&test);

        let eig = eigensystem_of_gram(&z_train)?;
        let r = eig.eigenvectors.ncols();
        // U' Z'X on the training rows (r×g) and Z_test U (n_test×r).
        let coords = eig.eigenvectors.tr_mul(&z_train.tr_mul(&x_train));
        let test_scores = &z_test * &eig.eigenvectors;

        for (total, scheme) in totals.iter_mut().zip(candidates) {
            let q = factors_for(&eig.eigenvalues, scheme)?;
            let mut weighted = coords.clone();
            for j in 0..r {
                let lambda = eig.eigenvalues[j];
                let w = if lambda > 0.0 { q[j] / lambda } else { 0.0 };
                weighted.row_mut(j).scale_mut(w);
            }
            let predicted: DMatrix<f64> = &test_scores * weighted;
            *total += (&x_test - predicted).norm_squared();
        }
    }
    Ok(totals.into_iter().map(|t| t / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate_dataset, DgpConfig, InstrumentDesign, PiScheme};

    fn config(k: usize, sigma_v: f64) -> DgpConfig {
        DgpConfig {
            n: 200,
            k,
            g: 1,
            pi: PiScheme::FixedSupport {
                support_size: 3,
                value: 1.0,
            },
            design: InstrumentDesign::IidGaussian,
            delta_true: vec![1.0],
            sigma_u: 1.0,
            sigma_vu: vec![0.0],
            sigma_v,
        }
    }

    #[test]
    fn singleton_grid_returns_its_member() {
        let data = simulate_dataset(&config(10, 1.0), 1).unwrap();
        let s = select_alpha(&data, SchemeKind::Tikhonov, &[0.1]).unwrap();
        assert_eq!(s, RegularizationScheme::Tikhonov { alpha: 0.1 });
    }

    #[test]
    fn empty_or_unsorted_grid_is_parameter_error() {
        let data = simulate_dataset(&config(10, 1.0), 1).unwrap();
        for grid in [&[][..], &[1.0, 0.5][..], &[-1.0][..]] {
            assert!(matches!(
                select_alpha(&data, SchemeKind::Tikhonov, grid),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn noiseless_first_stage_prefers_smallest_alpha() {
        // With X = Zπ exactly the held-out error grows with α; checked on
        // 10 seeds.
        let grid: Vec<f64> = (0..10).map(|i| 10f64.powi(i - 2)).collect();
        for seed in 0..10 {
            let data = simulate_dataset(&config(10, 1e-9), seed).unwrap();
            let candidates: Vec<_> = grid
                .iter()
                .map(|&alpha| RegularizationScheme::Tikhonov { alpha })
                .collect();
            let scores = cv_scores(&data, &candidates, DEFAULT_FOLDS).unwrap();
            assert!(scores.windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {scores:?}");
            let chosen = select_alpha(&data, SchemeKind::Tikhonov, &grid).unwrap();
            assert_eq!(chosen, RegularizationScheme::Tikhonov { alpha: grid[0] });
        }
    }

    #[test]
    fn other_families_resolve_to_valid_schemes() {
        let data = simulate_dataset(&config(20, 1.0), 4).unwrap();
        let pc = select_alpha(&data, SchemeKind::PrincipalComponents, &[1.0, 3.0, 10.0, 20.0]).unwrap();
        assert!(matches!(pc, RegularizationScheme::PrincipalComponents { m } if [1, 3, 10, 20].contains(&m)));
        let lw = select_alpha(&data, SchemeKind::Landweber, &[1.0, 10.0, 100.0]).unwrap();
        assert!(matches!(lw, RegularizationScheme::Landweber { step, .. } if step > 0.0));
        let cut = select_alpha(&data, SchemeKind::SpectralCutoff, &[1.0, 100.0]).unwrap();
        assert!(matches!(cut, RegularizationScheme::SpectralCutoff { .. }));
    }

    #[test]
    fn fold_count_is_checked() {
        let data = simulate_dataset(&config(10, 1.0), 1).unwrap();
        assert!(select_alpha_with_folds(&data, SchemeKind::Tikhonov, &[1.0, 2.0], 1).is_err());
    }
}
