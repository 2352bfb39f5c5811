//! Spectral decompositions of the instrument Gram matrix.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, sorted_symmetric_eigen};

/// Relative size below which a Gram eigenvalue counts as zero.
pub const PSD_TOL: f64 = 1e-10;

/// Relative eigenvalue floor below which `Z` is declared rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Eigen-decomposition `Z'Z = U Λ U'`.
///
/// `eigenvalues` always has length `source_dim` (= K) and is sorted
/// descending. When K > N only the leading N eigenvalues can be nonzero; the
/// rest are structural zeros and `eigenvectors` keeps only the columns for
/// the computed part, so it is K×min(N, K).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: DMatrix<f64>,
    pub source_dim: usize,
}

impl EigenSystem {
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// `U Λ U'` rebuilt from the factors.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let r = self.eigenvectors.ncols();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..r {
            scaled.column_mut(j).scale_mut(self.eigenvalues[j]);
        }
        scaled * self.eigenvectors.transpose()
    }
}

/// Zeroes eigenvalues below `PSD_TOL` times the largest magnitude.
fn clamp_psd(values: &mut [f64]) {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = PSD_TOL * scale;
    for v in values.iter_mut() {
        if *v < tol {
            *v = 0.0;
        }
    }
}

/// Eigen-decomposition of `Z'Z`, working on whichever of `Z'Z` (K×K) or
/// `ZZ'` (N×N) is smaller.
pub fn eigensystem_of_gram(z: &DMatrix<f64>) -> Result<EigenSystem> {
    if !all_finite(z) {
        return Err(Error::Data("instrument matrix contains non-finite values".into()));
    }
    let (n, k) = z.shape();
    if k <= n {
        let (mut values, vectors) = sorted_symmetric_eigen(&z.tr_mul(z));
        clamp_psd(&mut values);
        return Ok(EigenSystem {
            eigenvalues: values,
            eigenvectors: vectors,
            source_dim: k,
        });
    }

    // K > N: eigenpairs (λ, w) of ZZ' map to (λ, Z'w/√λ) for Z'Z.
    let (mut values, left) = sorted_symmetric_eigen(&(z * z.transpose()));
    clamp_psd(&mut values);
    let mut vectors = z.tr_mul(&left);
    for (j, &lambda) in values.iter().enumerate() {
        let mut col = vectors.column_mut(j);
        if lambda > 0.0 {
            col /= lambda.sqrt();
        } else {
            // Null direction of ZZ'; any vector works since λ = 0, but keep
            // the basis orthonormal.
            col.fill(0.0);
        }
    }
    let positive = values.iter().take_while(|&&v| v > 0.0).count();
    let vectors = vectors.columns(0, positive).into_owned();
    values.truncate(positive);
    values.resize(k, 0.0);
    Ok(EigenSystem {
        eigenvalues: values,
        eigenvectors: vectors,
        source_dim: k,
    })
}

/// Left singular basis of `Z`: `Z = W Σ V'` with `λ_j = σ_j²` the Gram
/// eigenvalues. Any spectrally filtered projector is `Σ_j q_j w_j w_j'`,
/// which this type applies without forming an N×N matrix.
///
/// Working from the SVD keeps `W` orthonormal to machine precision however
/// ill-conditioned `Z` is, which the Gram route cannot.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    left: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn new(z: &DMatrix<f64>) -> Result<Self> {
        if !all_finite(z) {
            return Err(Error::Data("instrument matrix contains non-finite values".into()));
        }
        let k = z.ncols();
        let svd = z.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors were requested");
        let sigma = svd.singular_values;
        let mut order: Vec<usize> = (0..sigma.len()).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
        let left = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
        let mut eigenvalues: Vec<f64> = order.iter().map(|&j| sigma[j] * sigma[j]).collect();
        clamp_psd(&mut eigenvalues);
        eigenvalues.resize(k, 0.0);
        Ok(SpectralBasis { eigenvalues, left })
    }

    /// Gram eigenvalues, length K, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Smallest over largest Gram eigenvalue; zero when K > N.
    pub fn eigenvalue_ratio(&self) -> f64 {
        let max = self.max_eigenvalue();
        if max > 0.0 {
            self.eigenvalues.last().copied().unwrap_or(0.0) / max
        } else {
            0.0
        }
    }

    /// Errors unless every Gram eigenvalue clears `RANK_TOL · λ_max`.
    pub fn require_full_rank(&self) -> Result<()> {
        let ratio = self.eigenvalue_ratio();
        if ratio > RANK_TOL {
            Ok(())
        } else {
            Err(Error::Rank(format!(
                "instrument Gram matrix is rank deficient: smallest/largest eigenvalue ratio {ratio:e} \
                 is not above {RANK_TOL:e}; use a regularized projection instead"
            )))
        }
    }

    /// `Σ_j q_j w_j w_j' v`. `q` has one entry per Gram eigenvalue; entries
    /// beyond the rank of `Z` are ignored.
    pub fn apply(&self, q: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut coords = self.left.tr_mul(v);
        for (j, mut row) in coords.row_iter_mut().enumerate() {
            row *= q.get(j).copied().unwrap_or(0.0);
        }
        &self.left * coords
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn scalar_gram() {
        let z = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let e = eigensystem_of_gram(&z).unwrap();
        assert!((e.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!((e.eigenvectors[(0, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_gram() {
        let e = eigensystem_of_gram(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(e.eigenvalues.len(), 2);
        assert!(e.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn reconstruction_residual_is_tiny() {
        let z = gaussian(50, 5, 17);
        let e = eigensystem_of_gram(&z).unwrap();
        let gram = z.tr_mul(&z);
        let resid = (&gram - e.reconstruct()).norm();
        assert!(resid < 1e-10, "{resid}");
        assert!(resid <= 1e-8 * gram.norm());
        let ortho = (e.eigenvectors.tr_mul(&e.eigenvectors) - DMatrix::<f64>::identity(5, 5)).norm();
        assert!(ortho < 1e-8);
    }

    #[test]
    fn wide_matrices_go_through_the_small_gram() {
        let z = gaussian(6, 15, 3);
        let e = eigensystem_of_gram(&z).unwrap();
        assert_eq!(e.eigenvalues.len(), 15);
        assert_eq!(e.eigenvectors.shape(), (15, 6));
        assert!(e.eigenvalues[6..].iter().all(|&v| v == 0.0));
        let gram = z.tr_mul(&z);
        assert!((&gram - e.reconstruct()).norm() <= 1e-8 * gram.norm());
        let direct = sorted_symmetric_eigen(&gram).0;
        for (a, b) in e.eigenvalues.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-8 * direct[0]);
        }
    }

    #[test]
    fn non_finite_input_is_data_error() {
        let z = DMatrix::from_column_slice(2, 1, &[1.0, f64::INFINITY]);
        assert!(matches!(eigensystem_of_gram(&z), Err(Error::Data(_))));
    }

    #[test]
    fn svd_and_gram_routes_agree() {
        for (n, k) in [(40, 7), (7, 40), (12, 12)] {
            let z = gaussian(n, k, (n * k) as u64);
            let a = eigensystem_of_gram(&z).unwrap();
            let b = SpectralBasis::new(&z).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(b.eigenvalues()) {
                assert!((x - y).abs() < 1e-9 * a.max_eigenvalue(), "{n}x{k}: {x} vs {y}");
            }
        }
    }
}
