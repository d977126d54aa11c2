//! Small dense eigenvalue helpers on top of faer.

use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{get_global_parallelism, Mat, Side};

use super::AnalysisError;

/// Largest dense problem accepted by the estimators.
pub const MAX_DENSE_DOFS: usize = 4000;

pub(crate) fn check_size(n: usize, what: &str) -> Result<(), AnalysisError> {
    if n > MAX_DENSE_DOFS {
        return Err(AnalysisError::TooLarge {
            what: what.to_string(),
            dofs: n,
            max: MAX_DENSE_DOFS,
        });
    }
    if n == 0 {
        return Err(AnalysisError::Empty(what.to_string()));
    }
    Ok(())
}

/// Eigenvalues (ascending) of `A x = λ B x` for symmetric `A` and SPD `B`,
/// with the relative residual `‖A x − λ B x‖ / (‖A‖ ‖x‖)` of the lowest pair.
pub(crate) fn generalized_eigen(
    a: &Mat<f64>,
    b: &Mat<f64>,
) -> Result<(Vec<f64>, f64), AnalysisError> {
    let n = a.nrows();
    let par = get_global_parallelism();
    let llt = b
        .llt(Side::Lower)
        .map_err(|_| AnalysisError::NotPositiveDefinite)?;
    let l = llt.L();
    // C = L⁻¹ A L⁻ᵀ
    let mut x = a.clone();
    solve_lower_triangular_in_place(l, x.as_mut(), par);
    let mut c = x.transpose().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), par);
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let eig = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| AnalysisError::EigenFailure)?;
    let values: Vec<f64> = (0..n).map(|i| eig.S()[i]).collect();
    let mut y = Mat::from_fn(n, 1, |i, _| eig.U()[(i, 0)]);
    solve_upper_triangular_in_place(l.transpose(), y.as_mut(), par);
    let ax = a * &y;
    let bx = b * &y;
    let lam = values[0];
    let r = (0..n)
        .map(|i| (ax[(i, 0)] - lam * bx[(i, 0)]).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .norm_max()
        .max(b.norm_max() * lam.abs())
        .max(f64::MIN_POSITIVE)
        * y.norm_l2();
    Ok((values, r / scale))
}

/// Orthonormal basis (as columns) of the complement of `v`.
pub(crate) fn complement_basis(v: &[f64]) -> Mat<f64> {
    let n = v.len();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    // Householder reflector with H e₀ = −s v/|v|
    let mut w: Vec<f64> = v.iter().map(|x| x / norm).collect();
    w[0] += s;
    let ww: f64 = w.iter().map(|x| x * x).sum();
    Mat::from_fn(n, n - 1, |i, j| {
        let col = j + 1;
        f64::from(u8::from(i == col)) - 2.0 * w[i] * w[col] / ww
    })
}

/// Singular values in nonincreasing order.
pub(crate) fn singular_values(m: &Mat<f64>) -> Result<Vec<f64>, AnalysisError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut s = m
        .singular_values()
        .map_err(|_| AnalysisError::EigenFailure)?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_problem_matches_closed_form() {
        let a = Mat::from_fn(2, 2, |i, j| [[2.0, 1.0], [1.0, 2.0]][i][j]);
        let b = Mat::from_fn(2, 2, |i, j| [[2.0, 0.0], [0.0, 1.0]][i][j]);
        let (vals, res) = generalized_eigen(&a, &b).unwrap();
        // det(A − λB) = 2λ² − 6λ + 3
        let l0 = (6.0 - 12f64.sqrt()) / 4.0;
        assert!((vals[0] - l0).abs() < 1e-14 && res < 1e-14);
    }

    #[test]
    fn complement_is_orthonormal() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let q = complement_basis(&v);
        for j in 0..3 {
            let d: f64 = (0..4).map(|i| q[(i, j)] * v[i]).sum();
            assert!(d.abs() < 1e-14);
            for k in 0..3 {
                let g: f64 = (0..4).map(|i| q[(i, j)] * q[(i, k)]).sum();
                assert!((g - f64::from(u8::from(j == k))).abs() < 1e-14);
            }
        }
    }
}
