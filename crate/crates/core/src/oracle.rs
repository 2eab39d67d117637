//! Subspace reflection oracles, their controlled lifts, and the small
//! verifiers built from one controlled query.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::{require, Violation};
use crate::error::{Error, Result};
use crate::linalg::haar::{haar_isometry, haar_state, random_hermitian};
use crate::linalg::{eigh, expm_i, norm_sqr, unitarity_residual, ComplexMatrix, C64, ZERO};
use crate::rng::{stream, substream};

pub const ORACLE_DIM_CAP: usize = 256;
const UNITARY_TOL: f64 = 1e-10;

/// `O_S = I - 2 Π_S` for the span of the columns of `basis`.
#[derive(Clone, Debug)]
pub struct SubspaceOracle {
    basis: ComplexMatrix,
    projector: ComplexMatrix,
    unitary: ComplexMatrix,
}

impl SubspaceOracle {
    /// `basis` is `N x k` with orthonormal columns (`k = 0` gives the identity oracle).
    pub fn new(basis: ComplexMatrix) -> Result<Self> {
        let n = basis.rows();
        if n == 0 || n > ORACLE_DIM_CAP {
            return Err(Error::CapExceeded {
                what: "oracle ambient dimension",
                size: n,
                cap: ORACLE_DIM_CAP,
            });
        }
        let k = basis.cols();
        if k > n {
            return Err(Error::InvalidParameter(format!("subspace dimension {k} > N = {n}")));
        }
        let gram = &basis.adjoint() * &basis;
        let residual = (&gram - &ComplexMatrix::identity(k)).max_abs();
        if k > 0 && residual > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "basis columns not orthonormal (residual {residual:.2e})"
            )));
        }
        let projector = &basis * &basis.adjoint();
        let unitary = &ComplexMatrix::identity(n) - &projector.scale_real(2.0);
        Ok(Self {
            basis,
            projector,
            unitary,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(ComplexMatrix::zeros(n, 0))
    }

    /// Haar-random `k`-dimensional subspace of `C^n`.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Self::identity(n);
        }
        if k > n {
            return Err(Error::InvalidParameter(format!("subspace dimension {k} > N = {n}")));
        }
        Self::new(haar_isometry(n, k, rng))
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn projector(&self) -> &ComplexMatrix {
        &self.projector
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    /// Oracle for the span of both bases. The subspaces must be orthogonal.
    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        let n = self.ambient_dim();
        if other.ambient_dim() != n {
            return Err(Error::DimensionMismatch {
                context: "direct sum of oracles",
                expected: n,
                found: other.ambient_dim(),
            });
        }
        let (k1, k2) = (self.subspace_dim(), other.subspace_dim());
        let basis = ComplexMatrix::from_fn(n, k1 + k2, |i, j| {
            if j < k1 {
                self.basis[(i, j)]
            } else {
                other.basis[(i, j - k1)]
            }
        });
        Self::new(basis)
    }

    /// `||Π_S ψ||`.
    pub fn overlap(&self, psi: &[C64]) -> f64 {
        closed_form_acceptance(self, psi).sqrt()
    }
}

/// `O^Π = (I - Π) ⊗ I + Π ⊗ O` with `Π = |0><0|` on a control qubit.
/// The control is the slow index: entry `c * N + i`.
#[derive(Clone, Debug)]
pub struct ControlledOracle {
    lifted: ComplexMatrix,
    n: usize,
}

impl ControlledOracle {
    pub fn new(oracle: &SubspaceOracle) -> Result<Self> {
        let n = oracle.ambient_dim();
        let o = oracle.unitary();
        let lifted = ComplexMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let (cr, i) = (r / n, r % n);
            let (cc, j) = (c / n, c % n);
            match (cr, cc) {
                (0, 0) => o[(i, j)],
                (1, 1) if i == j => C64::new(1.0, 0.0),
                _ => ZERO,
            }
        });
        let residual = unitarity_residual(&lifted);
        if residual > UNITARY_TOL {
            return Err(Error::Decomposition(format!(
                "lifted oracle not unitary ({residual:.2e})"
            )));
        }
        Ok(Self { lifted, n })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.lifted
    }

    pub fn system_dim(&self) -> usize {
        self.n
    }
}

fn plus_state(psi: &[C64]) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    psi.iter().chain(psi).map(|z| z * s).collect()
}

/// Amplitude of `|->` on the control: `(top - bottom) / √2`.
fn minus_component(phi: &[C64], n: usize) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n).map(|i| (phi[i] - phi[n + i]) * s).collect()
}

/// `|->⟨-| ⊗ I` on the control-plus-system space.
pub fn minus_projector(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(2 * n, 2 * n, |r, c| {
        if r % n != c % n {
            ZERO
        } else if r / n == c / n {
            C64::new(0.5, 0.0)
        } else {
            C64::new(-0.5, 0.0)
        }
    })
}

/// `|+⟩⟨+| ⊗ I`.
pub fn plus_projector(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(
        2 * n,
        2 * n,
        |r, c| {
            if r % n == c % n {
                C64::new(0.5, 0.0)
            } else {
                ZERO
            }
        },
    )
}

/// Prepare `|+⟩|ψ⟩`, apply the controlled oracle, Hadamard the control and
/// return the probability of reading `|->`.
pub fn simple_verifier(oracle: &SubspaceOracle, witness: &[C64]) -> Result<f64> {
    let n = oracle.ambient_dim();
    if witness.len() != n {
        return Err(Error::DimensionMismatch {
            context: "witness length",
            expected: n,
            found: witness.len(),
        });
    }
    let norm = norm_sqr(witness);
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("witness has squared norm {norm}")));
    }
    let lifted = ControlledOracle::new(oracle)?;
    let out = lifted.matrix().matvec(&plus_state(witness))?;
    Ok(norm_sqr(&minus_component(&out, n)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OverlapOutcome {
    /// Preconditions hold; `lhs >= delta` is the asserted inequality.
    Checked { lhs: f64, delta: f64 },
    /// Completeness or soundness fails for this witness, so nothing is claimed.
    Rejected { completeness: f64, soundness: f64 },
}

pub fn overlap_delta(eps: f64) -> f64 {
    ((1.0 - eps).sqrt() - eps.sqrt()) / 2.0
}

/// Checks `||Π_out O Π_in φ|| ≥ √(1-ε)` and `||Π_out Π_in φ|| ≤ √ε`, then
/// reports `||Π_S φ||` against `δ = (√(1-ε) - √ε)/2`. `subspace` is the
/// projector the oracle reflects about (`O = I - 2Π_S`).
pub fn overlap_bound_check(
    pi_out: &ComplexMatrix,
    pi_in: &ComplexMatrix,
    oracle: &ComplexMatrix,
    subspace: &ComplexMatrix,
    witness: &[C64],
    eps: f64,
) -> Result<OverlapOutcome> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::InvalidParameter(format!("ε = {eps} outside [0, 1/2)")));
    }
    let dim = witness.len();
    for (name, m) in [
        ("Π_out", pi_out),
        ("Π_in", pi_in),
        ("oracle", oracle),
        ("Π_S", subspace),
    ] {
        if m.rows() != dim || m.cols() != dim {
            return Err(Error::InvalidParameter(format!("{name} is not {dim} x {dim}")));
        }
    }
    let phi = pi_in.matvec(witness)?;
    let completeness = norm_sqr(&pi_out.matvec(&oracle.matvec(&phi)?)?).sqrt();
    let soundness = norm_sqr(&pi_out.matvec(&phi)?).sqrt();
    let tol = 1e-12;
    if completeness + tol < (1.0 - eps).sqrt() || soundness > eps.sqrt() + tol {
        return Ok(OverlapOutcome::Rejected {
            completeness,
            soundness,
        });
    }
    Ok(OverlapOutcome::Checked {
        lhs: norm_sqr(&subspace.matvec(&phi)?).sqrt(),
        delta: overlap_delta(eps),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverlapExperiment {
    pub n: usize,
    pub dim_s: usize,
    pub eps: f64,
    pub delta: f64,
    pub checked: usize,
    pub rejected: usize,
    pub min_lhs: f64,
    pub violations: Vec<Violation>,
}

/// One near-ideal constructed verifier: the simple verifier's output
/// projector conjugated by a small random unitary, and a witness `|+⟩ψ` with
/// `ψ` tilted slightly out of `S`.
fn near_ideal_instance(n: usize, k: usize, eps: f64, seed: u64) -> Result<OverlapOutcome> {
    let mut rng = stream(seed, 0);
    let oracle = SubspaceOracle::random(n, k, &mut rng)?;
    let lifted = ControlledOracle::new(&oracle)?;

    let s = haar_state(k, &mut rng);
    let in_s = oracle.basis().matvec(&s)?;
    let t = haar_state(n, &mut rng);
    let pt = oracle.projector().matvec(&t)?;
    let mut perp: Vec<C64> = t.iter().zip(&pt).map(|(a, b)| a - b).collect();
    let pn = norm_sqr(&perp).sqrt();
    perp.iter_mut().for_each(|z| *z /= pn);
    let theta = rng.gen::<f64>() * eps.sqrt();
    let psi: Vec<C64> = in_s
        .iter()
        .zip(&perp)
        .map(|(a, b)| a * theta.cos() + b * theta.sin())
        .collect();

    let g = random_hermitian(2 * n, &mut rng);
    let g = g.scale_real(1.0 / crate::linalg::operator_norm(&g));
    let w = expm_i(&g, rng.gen::<f64>() * eps.sqrt() / 2.0)?;
    let pi_out = (&w.adjoint() * &minus_projector(n)) * &w;

    let mut subspace = ComplexMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            subspace[(i, j)] = oracle.projector()[(i, j)];
        }
    }
    overlap_bound_check(
        &pi_out,
        &plus_projector(n),
        lifted.matrix(),
        &subspace,
        &plus_state(&psi),
        eps,
    )
}

/// Keeps drawing instances until `instances` pass the preconditions
/// (or `20 * instances` draws have been made).
pub fn overlap_experiment(n: usize, k: usize, eps: f64, instances: usize, seed: u64) -> Result<OverlapExperiment> {
    let max_draws = 20 * instances.max(1);
    let mut checked = 0;
    let mut rejected = 0;
    let mut min_lhs = f64::INFINITY;
    let mut violations = Vec::new();
    let batch = instances.max(1);
    let mut next = 0usize;
    while checked < instances && next < max_draws {
        let hi = (next + batch).min(max_draws);
        let outcomes: Vec<(usize, OverlapOutcome)> = (next..hi)
            .into_par_iter()
            .map(|t| {
                let s = substream(seed, 0, t as u64).gen::<u64>();
                near_ideal_instance(n, k, eps, s).map(|o| (t, o))
            })
            .collect::<Result<_>>()?;
        next = hi;
        for (t, o) in outcomes {
            if checked == instances {
                break;
            }
            match o {
                OverlapOutcome::Checked { lhs, delta } => {
                    checked += 1;
                    min_lhs = min_lhs.min(lhs);
                    require(&mut violations, lhs >= delta - 1e-12, "delta_lower_bound", seed, || {
                        format!("draw {t}: ||Π_S φ|| = {lhs} < δ = {delta}")
                    });
                }
                OverlapOutcome::Rejected { .. } => rejected += 1,
            }
        }
    }
    Ok(OverlapExperiment {
        n,
        dim_s: k,
        eps,
        delta: overlap_delta(eps),
        checked,
        rejected,
        min_lhs,
        violations,
    })
}

/// Acceptance operator of the one-query verifier on the witness register,
/// `⟨+| O^Π† (|-⟩⟨-| ⊗ I) O^Π |+⟩`.
pub fn verifier_acceptance_operator(oracle: &SubspaceOracle) -> Result<ComplexMatrix> {
    let n = oracle.ambient_dim();
    let lifted = ControlledOracle::new(oracle)?;
    let full = (&lifted.matrix().adjoint() * &minus_projector(n)) * lifted.matrix();
    let iso = ComplexMatrix::from_fn(2 * n, n, |r, c| {
        if r % n == c {
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
        } else {
            ZERO
        }
    });
    Ok((&iso.adjoint() * &full) * &iso)
}

/// Dimensions of the eigenspaces of the acceptance operator above `a` and `b`.
pub fn qxc_dimension_count(oracle: &SubspaceOracle, a: f64, b: f64) -> Result<(usize, usize)> {
    if a <= b {
        return Err(Error::InvalidParameter(format!(
            "thresholds need a > b (a = {a}, b = {b})"
        )));
    }
    let values = eigh(&verifier_acceptance_operator(oracle)?)?.values;
    let tol = 1e-9;
    let count = |t: f64| values.iter().filter(|&&v| v >= t - tol).count();
    Ok((count(a), count(b)))
}

/// `||O_S O_Δ - O_{S⊕Δ}||_max` for a random orthogonal pair of dimensions `k1`, `k2`.
pub fn composition_residual(n: usize, k1: usize, k2: usize, seed: u64) -> Result<f64> {
    let basis = haar_isometry(n, k1 + k2, &mut stream(seed, 0));
    let cols = |r: std::ops::Range<usize>| {
        let off = r.start;
        ComplexMatrix::from_fn(n, r.len(), |i, j| basis[(i, off + j)])
    };
    let s = SubspaceOracle::new(cols(0..k1))?;
    let d = SubspaceOracle::new(cols(k1..k1 + k2))?;
    let sum = s.direct_sum(&d)?;
    Ok((&(s.unitary() * d.unitary()) - sum.unitary()).max_abs())
}

/// `‖Π_S ψ‖²` from the basis, for comparison with [`simple_verifier`].
pub fn closed_form_acceptance(oracle: &SubspaceOracle, psi: &[C64]) -> f64 {
    let a = oracle
        .basis()
        .adjoint()
        .matvec(psi)
        .expect("dimension checked by caller");
    a.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_is_hermitian_involution() {
        let o = SubspaceOracle::random(32, 4, &mut stream(1, 0)).unwrap();
        let u = o.unitary();
        assert!(u.hermitian_residual() < 1e-10);
        assert!((&(u * u) - &ComplexMatrix::identity(32)).max_abs() < 1e-10);
        assert!(unitarity_residual(ControlledOracle::new(&o).unwrap().matrix()) < 1e-10);
    }

    #[test]
    fn yes_case_accepts_with_certainty() {
        let mut rng = stream(2, 0);
        let o = SubspaceOracle::random(16, 3, &mut rng).unwrap();
        let psi = o.basis().matvec(&haar_state(3, &mut rng)).unwrap();
        assert!((simple_verifier(&o, &psi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_oracle_never_accepts() {
        let o = SubspaceOracle::identity(8).unwrap();
        let psi = haar_state(8, &mut stream(3, 0));
        assert_eq!(simple_verifier(&o, &psi).unwrap(), 0.0);
    }

    #[test]
    fn partial_overlap_gives_square() {
        let mut rng = stream(4, 0);
        let o = SubspaceOracle::random(16, 2, &mut rng).unwrap();
        let psi = haar_state(16, &mut rng);
        let p = simple_verifier(&o, &psi).unwrap();
        assert!((p - o.overlap(&psi).powi(2)).abs() < 1e-10);
        assert!((p - closed_form_acceptance(&o, &psi)).abs() < 1e-10);
    }

    #[test]
    fn ideal_overlap_instance() {
        let mut rng = stream(5, 0);
        let o = SubspaceOracle::random(8, 2, &mut rng).unwrap();
        let psi = o.basis().matvec(&haar_state(2, &mut rng)).unwrap();
        let mut sub = ComplexMatrix::zeros(16, 16);
        for i in 0..8 {
            for j in 0..8 {
                sub[(i, j)] = o.projector()[(i, j)];
            }
        }
        let out = overlap_bound_check(
            &minus_projector(8),
            &plus_projector(8),
            ControlledOracle::new(&o).unwrap().matrix(),
            &sub,
            &plus_state(&psi),
            0.0,
        )
        .unwrap();
        match out {
            OverlapOutcome::Checked { lhs, delta } => {
                assert_eq!(delta, 0.5);
                // The lifted subspace only sees the control-|0> half.
                assert!((lhs - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delta_formula() {
        assert!((overlap_delta(0.25) - 0.183012701892).abs() < 1e-11);
    }

    #[test]
    fn qxc_counts() {
        let mut rng = stream(6, 0);
        let yes = SubspaceOracle::random(32, 2, &mut rng).unwrap();
        let no = SubspaceOracle::random(32, 4, &mut rng).unwrap();
        assert_eq!(qxc_dimension_count(&yes, 2.0 / 3.0, 1.0 / 3.0).unwrap(), (2, 2));
        assert_eq!(qxc_dimension_count(&no, 2.0 / 3.0, 1.0 / 3.0).unwrap(), (4, 4));
        let empty = SubspaceOracle::identity(8).unwrap();
        assert_eq!(qxc_dimension_count(&empty, 0.9, 0.1).unwrap(), (0, 0));
        assert!(qxc_dimension_count(&yes, 0.1, 0.2).is_err());
    }

    #[test]
    fn composition_identity() {
        assert!(composition_residual(32, 3, 5, 7).unwrap() < 1e-10);
    }

    #[test]
    fn small_overlap_experiment() {
        let r = overlap_experiment(16, 2, 0.01, 20, 9).unwrap();
        assert_eq!(r.checked, 20);
        assert!(r.violations.is_empty());
    }
}
