//! Spectral filters for regularized projections.
//!
//! Each scheme is reduced to damping factors `q_j ∈ [0, 1]` on the Gram
//! eigenvalues `λ_j`, so the regularized projector is
//! `P^q = Z U diag(q_j / λ_j) U' Z'` (with `q_j / λ_j = 0` at `λ_j = 0`).
//! Unregularized 2SLS is `q_j = 1` everywhere.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::spectral::EigenSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizationScheme {
    /// `q = λ² / (λ² + α)`, the ridge form `[Λ² + αI]⁻¹Λ` in filter terms.
    Tikhonov { alpha: f64 },
    /// Keep directions with `λ ≥ threshold`.
    SpectralCutoff { threshold: f64 },
    /// Keep the `m` leading directions.
    PrincipalComponents { m: usize },
    /// `q = 1 − (1 − step·λ)^iterations`.
    Landweber { iterations: u32, step: f64 },
}

impl RegularizationScheme {
    pub fn kind(&self) -> SchemeKind {
        match self {
            RegularizationScheme::Tikhonov { .. } => SchemeKind::Tikhonov,
            RegularizationScheme::SpectralCutoff { .. } => SchemeKind::SpectralCutoff,
            RegularizationScheme::PrincipalComponents { .. } => SchemeKind::PrincipalComponents,
            RegularizationScheme::Landweber { .. } => SchemeKind::Landweber,
        }
    }

    /// Checks the parameter invariants that do not depend on the data.
    pub fn validate(&self, field: &str) -> Result<()> {
        let bad = |name: &str, msg: String| Err(Error::config(format!("{field}.{name}"), msg));
        match *self {
            RegularizationScheme::Tikhonov { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                bad("alpha", format!("must be positive and finite, got {alpha}"))
            }
            RegularizationScheme::SpectralCutoff { threshold }
                if !(threshold > 0.0 && threshold.is_finite()) =>
            {
                bad("threshold", format!("must be positive and finite, got {threshold}"))
            }
            RegularizationScheme::PrincipalComponents { m } if m == 0 => {
                bad("m", "must be at least 1".into())
            }
            RegularizationScheme::Landweber { step, .. } if !(step > 0.0 && step.is_finite()) => {
                bad("step", format!("must be positive and finite, got {step}"))
            }
            _ => Ok(()),
        }
    }
}

/// Filter family without its parameter, used for data-driven selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Tikhonov,
    SpectralCutoff,
    PrincipalComponents,
    Landweber,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Tikhonov => "tikhonov",
            SchemeKind::SpectralCutoff => "spectral_cutoff",
            SchemeKind::PrincipalComponents => "principal_components",
            SchemeKind::Landweber => "landweber",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tikhonov" => Ok(SchemeKind::Tikhonov),
            "spectral_cutoff" => Ok(SchemeKind::SpectralCutoff),
            "principal_components" => Ok(SchemeKind::PrincipalComponents),
            "landweber" => Ok(SchemeKind::Landweber),
            other => Err(Error::Parameter(format!(
                "unknown regularization scheme `{other}` \
                 (expected tikhonov, spectral_cutoff, principal_components or landweber)"
            ))),
        }
    }
}

/// Damping factors for `eigs` under `scheme`.
pub fn filter_factors(eigs: &EigenSystem, scheme: &RegularizationScheme) -> Result<Vec<f64>> {
    factors_for(&eigs.eigenvalues, scheme)
}

/// Damping factors for a descending list of Gram eigenvalues. Zero
/// eigenvalues always get `q = 0`.
pub fn factors_for(eigenvalues: &[f64], scheme: &RegularizationScheme) -> Result<Vec<f64>> {
    scheme
        .validate("scheme")
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let q: Vec<f64> = match *scheme {
        RegularizationScheme::Tikhonov { alpha } => eigenvalues
            .iter()
            .map(|&l| {
                let l2 = l * l;
                l2 / (l2 + alpha)
            })
            .collect(),
        RegularizationScheme::SpectralCutoff { threshold } => eigenvalues
            .iter()
            .map(|&l| if l >= threshold { 1.0 } else { 0.0 })
            .collect(),
        RegularizationScheme::PrincipalComponents { m } => eigenvalues
            .iter()
            .enumerate()
            .map(|(j, _)| if j < m { 1.0 } else { 0.0 })
            .collect(),
        RegularizationScheme::Landweber { iterations, step } => {
            let max = eigenvalues.first().copied().unwrap_or(0.0);
            if max > 0.0 && step >= 2.0 / max {
                return Err(Error::Parameter(format!(
                    "landweber step {step} must be below 2/λ_max = {}",
                    2.0 / max
                )));
            }
            let iterations = i32::try_from(iterations).unwrap_or(i32::MAX);
            eigenvalues
                .iter()
                .map(|&l| 1.0 - (1.0 - step * l).powi(iterations))
                .collect()
        }
    };
    Ok(q.into_iter()
        .zip(eigenvalues)
        .map(|(q, &l)| if l > 0.0 { q } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tikhonov(alpha: f64) -> RegularizationScheme {
        RegularizationScheme::Tikhonov { alpha }
    }

    #[test]
    fn tikhonov_vanishing_alpha_keeps_everything() {
        let q = factors_for(&[2.0, 1.0], &tikhonov(1e-14)).unwrap();
        assert!(q.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn tikhonov_scalar_value() {
        // λ²/(λ²+α) = 4/(4+4)
        let q = factors_for(&[2.0], &tikhonov(4.0)).unwrap();
        assert_eq!(q, vec![0.5]);
    }

    #[test]
    fn principal_components_keeps_leading_directions() {
        let q = factors_for(&[3.0, 2.0, 1.0], &RegularizationScheme::PrincipalComponents { m: 1 })
            .unwrap();
        assert_eq!(q, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn spectral_cutoff_threshold_is_inclusive() {
        let q = factors_for(&[3.0, 2.0, 1.0], &RegularizationScheme::SpectralCutoff { threshold: 2.0 })
            .unwrap();
        assert_eq!(q, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn landweber_closed_form_and_step_bound() {
        let scheme = RegularizationScheme::Landweber {
            iterations: 3,
            step: 0.25,
        };
        let q = factors_for(&[2.0, 1.0], &scheme).unwrap();
        assert!((q[0] - (1.0 - 0.5_f64.powi(3))).abs() < 1e-15);
        assert!((q[1] - (1.0 - 0.75_f64.powi(3))).abs() < 1e-15);

        let too_big = RegularizationScheme::Landweber {
            iterations: 3,
            step: 1.0,
        };
        assert!(matches!(factors_for(&[2.0, 1.0], &too_big), Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_eigenvalues_are_filtered_out() {
        for scheme in [
            tikhonov(1.0),
            RegularizationScheme::PrincipalComponents { m: 5 },
            RegularizationScheme::SpectralCutoff { threshold: 1e-3 },
        ] {
            let q = factors_for(&[4.0, 0.0], &scheme).unwrap();
            assert_eq!(q[1], 0.0, "{scheme:?}");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(factors_for(&[1.0], &tikhonov(0.0)).is_err());
        assert!(factors_for(&[1.0], &RegularizationScheme::PrincipalComponents { m: 0 }).is_err());
    }

    #[test]
    fn scheme_kind_round_trips_through_labels() {
        for kind in [
            SchemeKind::Tikhonov,
            SchemeKind::SpectralCutoff,
            SchemeKind::PrincipalComponents,
            SchemeKind::Landweber,
        ] {
            assert_eq!(kind.label().parse::<SchemeKind>().unwrap(), kind);
        }
        assert!("ridge".parse::<SchemeKind>().is_err());
    }

    proptest! {
        #[test]
        fn tikhonov_monotone_in_lambda_and_alpha(
            l1 in 1e-3f64..1e3, dl in 1e-3f64..1e3, a1 in 1e-3f64..1e3, da in 1e-3f64..1e3,
        ) {
            let l2 = l1 + dl;
            let q = factors_for(&[l2, l1], &tikhonov(a1)).unwrap();
            prop_assert!(q[0] > q[1]);
            let q_more = factors_for(&[l2, l1], &tikhonov(a1 + da)).unwrap();
            prop_assert!(q_more[0] < q[0] && q_more[1] < q[1]);
            prop_assert!(q.iter().chain(&q_more).all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
