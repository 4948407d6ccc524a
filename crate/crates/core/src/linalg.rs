//! Small dense linear algebra helpers.

use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` for a (numerically) singular matrix.
pub fn solve<T: Scalar, const N: usize>(a: &[[T; N]; N], b: &[T; N]) -> Option<[T; N]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(m[pivot][col].abs() > T::min_positive_value()) {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..N {
            let factor = m[row][col] / m[col][col];
            if factor == T::zero() {
                continue;
            }
            let pivot_row = m[col];
            for (dst, &v) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst = *dst - factor * v;
            }
            rhs[row] = rhs[row] - factor * rhs[col];
        }
    }
    let mut x = [T::zero(); N];
    for row in (0..N).rev() {
        let tail: T = (row + 1..N).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn to_dmatrix<T: Scalar, const N: usize>(a: &[[T; N]; N]) -> DMatrix<f64> {
    DMatrix::from_fn(N, N, |i, j| a[i][j].to_f64_lossy())
}

/// Eigenvalues as `(re, im)` pairs, computed in double precision.
pub fn eigenvalues<T: Scalar, const N: usize>(a: &[[T; N]; N]) -> Vec<(f64, f64)> {
    to_dmatrix(a)
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Scalar, const N: usize>(a: &[[T; N]; N]) -> f64 {
    eigenvalues(a)
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max)
}
