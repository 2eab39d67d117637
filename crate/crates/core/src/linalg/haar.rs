use rand::Rng;

use super::matrix::{inner, ComplexMatrix, C64};
use crate::rng::complex_gaussian;

/// Ginibre matrix with i.i.d. unit-variance complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Random Hermitian matrix `(G + G^dagger)/2`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    ginibre(n, n, rng).hermitian_part()
}

/// Orthonormalize columns in place with modified Gram-Schmidt, run twice.
/// Returns false if a column collapsed (rank deficiency).
fn orthonormalize(cols: &mut [Vec<C64>]) -> bool {
    for _ in 0..2 {
        for k in 0..cols.len() {
            let (done, rest) = cols.split_at_mut(k);
            let v = &mut rest[0];
            for q in done.iter() {
                let c = inner(q, v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
            let n = super::matrix::norm_sqr(v).sqrt();
            if n < 1e-10 {
                return false;
            }
            for x in v.iter_mut() {
                *x /= n;
            }
        }
    }
    true
}

/// `n x k` isometry whose column span is a Haar-uniform `k`-dim subspace
/// (orthonormalized Gaussian columns).
pub fn haar_isometry<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> ComplexMatrix {
    assert!(k <= n, "isometry with more columns than rows");
    loop {
        let mut cols: Vec<Vec<C64>> = (0..k)
            .map(|_| (0..n).map(|_| complex_gaussian(rng)).collect())
            .collect();
        if orthonormalize(&mut cols) {
            return ComplexMatrix::from_fn(n, k, |i, j| cols[j][i]);
        }
    }
}

/// Haar-random unitary. Gram-Schmidt on a Ginibre matrix fixes the phases
/// of the implied R factor to be positive, which is exactly the Haar measure.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    haar_isometry(n, n, rng)
}

/// Haar-random unit vector.
pub fn haar_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    haar_isometry(n, 1, rng).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigen::unitarity_residual;
    use crate::rng::stream;

    #[test]
    fn haar_unitary_is_unitary() {
        let u = haar_unitary(24, &mut stream(1, 0));
        assert!(unitarity_residual(&u) < 1e-12);
    }

    #[test]
    fn isometry_columns_orthonormal() {
        let v = haar_isometry(10, 3, &mut stream(2, 0));
        let g = &v.adjoint() * &v;
        assert!((&g - &ComplexMatrix::identity(3)).max_abs() < 1e-12);
    }
}
