use faer::Side;
use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, C64};
use crate::error::{Error, Result};

/// Relative Hermiticity tolerance accepted by [`eigh`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Spectral decomposition `M = V diag(values) V^dagger` with ascending values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    /// `V f(Λ) V^dagger` for a real spectral function.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.vectors;
        let scaled = ComplexMatrix::from_fn(n, n, |i, j| v[(i, j)] * f(self.values[j]));
        &scaled * &v.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_fn(|x| C64::new(x, 0.0))
    }

    /// Largest eigenvalue minus the second largest; `None` for dimension < 2.
    pub fn top_gap(&self) -> Option<f64> {
        let n = self.dim();
        (n >= 2).then(|| self.values[n - 1] - self.values[n - 2])
    }
}

fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "eigh (square input)",
            expected: m.rows(),
            found: m.cols(),
        });
    }
    let residual = m.hermitian_residual();
    if residual > HERMITIAN_TOL * m.max_abs().max(f64::MIN_POSITIVE) && residual > 0.0 {
        return Err(Error::NotHermitian { residual });
    }
    Ok(())
}

/// Hermitian eigendecomposition. Rejects input whose Hermiticity residual
/// exceeds `1e-12 * max|M|`, then symmetrizes away the roundoff before solving.
pub fn eigh(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    check_hermitian(m)?;
    let n = m.rows();
    if n == 0 {
        return Err(Error::EmptySpectrum);
    }
    let sym = m.hermitian_part().to_faer();
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
    let values = order.iter().map(|&k| s[k].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok(EigenDecomposition { values, vectors })
}

/// Eigenvalues of a Hermitian matrix in ascending order, without vectors.
pub fn eigvalsh(m: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    if m.rows() == 0 {
        return Err(Error::EmptySpectrum);
    }
    let mut values = m
        .hermitian_part()
        .to_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Largest singular value. Hermitian input uses `max |eig|`; anything else
/// goes through the smaller of `M^dagger M` and `M M^dagger`.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    if m.is_square() && m.hermitian_residual() <= HERMITIAN_TOL * scale {
        let e = eigvalsh(m).expect("Hermitian input passed the residual check");
        return e[0].abs().max(e[e.len() - 1].abs());
    }
    let gram = if m.cols() <= m.rows() {
        &m.adjoint() * m
    } else {
        m * &m.adjoint()
    };
    let e = eigvalsh(&gram.hermitian_part()).expect("Gram matrix is Hermitian");
    e[e.len() - 1].max(0.0).sqrt()
}

/// `exp(i θ A)` for Hermitian `A`.
pub fn expm_i(a: &ComplexMatrix, theta: f64) -> Result<ComplexMatrix> {
    let e = eigh(a)?;
    Ok(e.apply_fn(|x| C64::from_polar(1.0, theta * x)))
}

/// Operator norm of `U^dagger U - I`.
pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    let g = &u.adjoint() * u;
    operator_norm(&(&g - &ComplexMatrix::identity(u.cols())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar::random_hermitian;
    use crate::rng::stream;

    #[test]
    fn identity_spectrum() {
        let e = eigh(&ComplexMatrix::identity(4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
    }

    #[test]
    fn diagonal_spectrum_is_sorted_with_permutation_vectors() {
        let e = eigh(&ComplexMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        for (k, &src) in [1usize, 2, 0].iter().enumerate() {
            assert!((e.vectors[(src, k)].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(eigh(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = stream(11, 0);
        let h = random_hermitian(8, &mut rng);
        let e = eigh(&h).unwrap();
        let r = operator_norm(&(&e.reconstruct() - &h));
        assert!(r <= 1e-10 * operator_norm(&h));
        assert!(unitarity_residual(&e.vectors) < 1e-10);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(operator_norm(&ComplexMatrix::zeros(3, 3)), 0.0);
        let d = ComplexMatrix::from_diag(&[2.0, -5.0]);
        assert!((operator_norm(&d) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn norm_of_rectangular_matrix() {
        // Rank-one outer product of unit vectors scaled by 3.
        let u = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let v = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let m = ComplexMatrix::outer(&u, &v).scale_real(3.0);
        assert!((operator_norm(&m) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn expm_zero_is_identity() {
        let mut rng = stream(3, 1);
        let h = random_hermitian(5, &mut rng);
        let u = expm_i(&h, 0.0).unwrap();
        assert!((&u - &ComplexMatrix::identity(5)).max_abs() < 1e-12);
    }

    #[test]
    fn expm_of_involution_closed_form() {
        // Pauli-Y is an involution.
        let y = ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(0.0, 0.0),
                C64::new(0.0, -1.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let theta = 0.37;
        let u = expm_i(&y, theta).unwrap();
        let expect = &ComplexMatrix::identity(2).scale_real(theta.cos()) + &y.scale(C64::new(0.0, theta.sin()));
        assert!((&u - &expect).max_abs() < 1e-10);
    }
}
