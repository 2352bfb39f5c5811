//! Small dense helpers shared by the estimators and diagnostics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest admissible condition number for a matrix we invert.
pub const CONDITION_BOUND: f64 = 1e12;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral condition number of a symmetric positive semi-definite matrix.
/// Returns infinity when the smallest eigenvalue is not positive.
pub fn spd_condition_number(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sorted_symmetric_eigen(m);
    let (Some(&max), Some(&min)) = (values.first(), values.last()) else {
        return f64::INFINITY;
    };
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` for symmetric positive definite `a`, rejecting systems
/// whose condition number exceeds [`CONDITION_BOUND`]. Returns the solution
/// and the condition number.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str, hint: &str) -> Result<(DMatrix<f64>, f64)> {
    let cond = spd_condition_number(a);
    if !(cond <= CONDITION_BOUND) {
        return Err(Error::Rank(format!(
            "{what} is singular or ill-conditioned (condition number {cond:e} exceeds {CONDITION_BOUND:e}){hint}"
        )));
    }
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Rank(format!("{what} is singular{hint}")))?;
    Ok((x, cond))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
