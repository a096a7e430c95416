//! Closed-form ridge regression for the linear readout.

use nalgebra::DMatrix;

use super::EsnError;

/// Solves `W = Y Xᵀ (X Xᵀ + λI)⁻¹` for the readout.
///
/// `states` is `m × k` (one reservoir state per column) and `targets` is
/// `n × k`. When there are fewer samples than neurons and `λ > 0`, the
/// algebraically identical dual form `W = Y (XᵀX + λI)⁻¹ Xᵀ` is solved
/// instead, which only needs a `k × k` factorization.
pub fn ridge(states: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>, EsnError> {
    let (m, k) = states.shape();
    debug_assert_eq!(targets.ncols(), k);
    if k < m && lambda > 0.0 {
        let mut gram = states.tr_mul(states);
        for i in 0..k {
            gram[(i, i)] += lambda;
        }
        // solve gram * Z = Yᵀ, then W = (X Z)ᵀ
        let z = solve_spd(gram, targets.transpose())?;
        return Ok((states * z).transpose());
    }

    let mut gram = states * states.transpose();
    for i in 0..m {
        gram[(i, i)] += lambda;
    }
    let rhs = states * targets.transpose();
    Ok(solve_spd(gram, rhs)?.transpose())
}

/// Solves a symmetric positive (semi)definite system. Cholesky first; if
/// that breaks down the system is treated as singular rather than being
/// silently regularized.
fn solve_spd(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>, EsnError> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let n = a.nrows();
    if let Some(chol) = a.clone().cholesky() {
        let l = chol.l();
        let min_pivot = (0..n).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        // pivots this small mean the Gram matrix is numerically rank deficient
        if min_pivot * min_pivot > scale * 1e-14 {
            return Ok(chol.solve(&b));
        }
    }
    Err(EsnError::SingularSystem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primal_and_dual_agree() {
        let x = DMatrix::from_fn(30, 12, |i, j| ((i * 7 + j * 3) as f64).sin());
        let y = DMatrix::from_fn(2, 12, |i, j| ((i + 2 * j) as f64).cos());
        let dual = ridge(&x, &y, 1e-3).unwrap();
        // primal formula evaluated directly
        let mut g = &x * x.transpose();
        for i in 0..30 {
            g[(i, i)] += 1e-3;
        }
        let primal = &y * x.transpose() * g.try_inverse().unwrap();
        assert!((dual - primal).amax() < 1e-9);
    }

    #[test]
    fn zero_targets_give_zero_readout() {
        let x = DMatrix::from_fn(5, 20, |i, j| ((i * 5 + j) as f64 * 0.37).sin());
        let y = DMatrix::zeros(2, 20);
        assert_eq!(ridge(&x, &y, 1e-6).unwrap(), DMatrix::zeros(2, 5));
    }

    #[test]
    fn singular_without_regularization() {
        let mut x = DMatrix::from_fn(4, 10, |i, j| ((i * 10 + j) as f64).sin());
        let row = x.row(0).clone_owned();
        x.set_row(3, &row);
        let y = DMatrix::from_element(1, 10, 1.0);
        assert!(matches!(ridge(&x, &y, 0.0), Err(EsnError::SingularSystem)));
        assert!(ridge(&x, &y, 1e-3).is_ok());
    }
}
