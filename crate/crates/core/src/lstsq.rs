//! Minimum-norm linear least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of `min ‖Fβ − y‖²` with the smallest `‖β‖` among minimisers.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub beta: Vec<f64>,
    /// Numerical rank of the design matrix.
    pub rank: usize,
}

/// Solves the least-squares problem for a row-major design matrix with
/// `cols` columns through a singular value decomposition of the design.
///
/// Singular values below `max(rows, cols) · ε · σ_max` are treated as zero,
/// which selects the minimum-norm solution of the (possibly singular)
/// normal equations `FᵀF β = Fᵀy`.
pub fn min_norm_lstsq(design: &[f64], cols: usize, y: &[f64]) -> Result<LstsqSolution> {
    if cols == 0 {
        return Err(Error::Empty("design matrix has no columns"));
    }
    let rows = y.len();
    if rows == 0 {
        return Err(Error::Empty("training set"));
    }
    if design.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            got: design.len(),
        });
    }
    if design.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite entry in least-squares data".into()));
    }
    let f = DMatrix::from_row_slice(rows, cols, design);
    let rhs = DVector::from_column_slice(y);
    let svd = f.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(LstsqSolution {
            beta: vec![0.0; cols],
            rank: 0,
        });
    }
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let mut beta = DVector::<f64>::zeros(cols);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        rank += 1;
        let coef = u.column(k).dot(&rhs) / s;
        beta += v_t.row(k).transpose() * coef;
    }
    Ok(LstsqSolution {
        beta: beta.iter().copied().collect(),
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_recovered() {
        // y = 2 + 3x
        let xs = [0.0, 1.0, 2.0, 3.0];
        let design: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let sol = min_norm_lstsq(&design, 2, &y).unwrap();
        assert_eq!(sol.rank, 2);
        assert!((sol.beta[0] - 2.0).abs() < 1e-12);
        assert!((sol.beta[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // identical columns: any beta with b0 + b1 = 4 fits; min-norm is (2, 2)
        let design = vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let y = vec![4.0, 4.0, 4.0];
        let sol = min_norm_lstsq(&design, 2, &y).unwrap();
        assert_eq!(sol.rank, 1);
        assert!((sol.beta[0] - 2.0).abs() < 1e-12);
        assert!((sol.beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(min_norm_lstsq(&[1.0, 2.0], 2, &[1.0, 2.0]).is_err());
        assert!(min_norm_lstsq(&[], 2, &[]).is_err());
    }
}
