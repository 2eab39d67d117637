//! Hamiltonians with cached eigendecompositions, energy windows and their
//! spectral projectors.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::haar::{haar_unitary, random_hermitian};
use crate::linalg::{eigh, operator_norm, ComplexMatrix, EigenDecomposition, C64};
use crate::rng::stream;

/// Largest qubit count accepted by [`Hamiltonian::random_local`].
pub const MAX_QUBITS: usize = 12;

/// Closed-interval slack used for window membership.
pub const BOUNDARY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Provenance {
    SyntheticSpectrum,
    RandomLocal { qubits: usize, terms: usize, seed: u64 },
}

/// Eigenbasis used when building a Hamiltonian from its spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Basis {
    Identity,
    Random { seed: u64 },
}

#[derive(Clone, Debug)]
pub struct Hamiltonian {
    matrix: ComplexMatrix,
    eigen: EigenDecomposition,
    provenance: Provenance,
}

impl Hamiltonian {
    /// `V diag(λ) V^dagger` with the values sorted ascending. The cached
    /// eigenvalues are the requested values bit for bit.
    pub fn from_spectrum(eigenvalues: &[f64], basis: Basis) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if let Some(bad) = eigenvalues.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("eigenvalue {bad} is not finite")));
        }
        let mut values = eigenvalues.to_vec();
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let vectors = match basis {
            Basis::Identity => ComplexMatrix::identity(n),
            Basis::Random { seed } => haar_unitary(n, &mut stream(seed, 0)),
        };
        let eigen = EigenDecomposition { values, vectors };
        let matrix = eigen.reconstruct().hermitian_part();
        Ok(Self {
            matrix,
            eigen,
            provenance: Provenance::SyntheticSpectrum,
        })
    }

    /// Sum of `terms` random two-qubit Hermitian terms on `n` qubits, each
    /// rescaled to unit operator norm. A single qubit gets one-qubit terms.
    pub fn random_local(n: usize, terms: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one qubit".into()));
        }
        if n > MAX_QUBITS {
            return Err(Error::CapExceeded {
                what: "qubit count",
                size: n,
                cap: MAX_QUBITS,
            });
        }
        let dim = 1usize << n;
        let mut h = ComplexMatrix::zeros(dim, dim);
        for t in 0..terms {
            let mut rng = stream(seed, t as u64);
            let support: Vec<usize> = if n == 1 {
                vec![0]
            } else {
                let i = rand::Rng::gen_range(&mut rng, 0..n);
                let mut j = rand::Rng::gen_range(&mut rng, 0..n - 1);
                if j >= i {
                    j += 1;
                }
                vec![i.min(j), i.max(j)]
            };
            let local = random_hermitian(1 << support.len(), &mut rng);
            let local = local.scale_real(1.0 / operator_norm(&local));
            add_local_term(&mut h, n, &support, &local);
        }
        let eigen = eigh(&h)?;
        Ok(Self {
            matrix: h,
            eigen,
            provenance: Provenance::RandomLocal { qubits: n, terms, seed },
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Apply an affine map to the spectrum; eigenvectors are unchanged.
    pub fn rescaled(&self, map: UnitRescale) -> Self {
        let values = self.eigen.values.iter().map(|&x| map.apply(x)).collect();
        let eigen = EigenDecomposition {
            values,
            vectors: self.eigen.vectors.clone(),
        };
        let n = self.dim();
        let matrix =
            (&self.matrix.scale_real(map.scale) + &ComplexMatrix::identity(n).scale_real(map.shift)).hermitian_part();
        Self {
            matrix,
            eigen,
            provenance: self.provenance,
        }
    }
}

/// `h[x][y] += local[(x restricted to support), (y restricted to support)]`
/// whenever `x` and `y` agree off the support. Qubit 0 is the most significant bit.
fn add_local_term(h: &mut ComplexMatrix, n: usize, support: &[usize], local: &ComplexMatrix) {
    let dim = 1usize << n;
    let bit = |q: usize| 1usize << (n - 1 - q);
    let k = support.len();
    let mask: usize = support.iter().map(|&q| bit(q)).sum();
    let local_index = |x: usize| {
        support
            .iter()
            .fold(0usize, |acc, &q| (acc << 1) | usize::from(x & bit(q) != 0))
    };
    for x in 0..dim {
        let lx = local_index(x);
        let rest = x & !mask;
        for ly in 0..(1usize << k) {
            let mut y = rest;
            for (p, &q) in support.iter().enumerate() {
                if ly & (1 << (k - 1 - p)) != 0 {
                    y |= bit(q);
                }
            }
            h[(x, y)] += local[(lx, ly)];
        }
    }
}

/// Affine map `λ ↦ scale·λ + shift`, recorded so reports can undo it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRescale {
    pub scale: f64,
    pub shift: f64,
}

impl UnitRescale {
    /// Map `[min, max]` of the spectrum onto `[margin, 1 - margin]`.
    pub fn fit(values: &[f64], margin: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) {
            return Err(Error::InvalidParameter(format!(
                "rescale margin {margin} outside [0, 0.5)"
            )));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::EmptySpectrum);
        }
        let width = (hi - lo).max(f64::EPSILON);
        let scale = (1.0 - 2.0 * margin) / width;
        Ok(Self {
            scale,
            shift: margin - scale * lo,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }
}

/// Closed interval `[e0 - Δ/2, e0 + Δ/2]` together with the wider RMT window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub e0: f64,
    pub delta: f64,
    pub delta_rmt: f64,
}

impl EnergyWindow {
    pub fn new(e0: f64, delta: f64, delta_rmt: f64) -> Result<Self> {
        if !(e0.is_finite() && delta.is_finite() && delta_rmt.is_finite()) {
            return Err(Error::InvalidWindow("non-finite parameter".into()));
        }
        if delta <= 0.0 {
            return Err(Error::InvalidWindow(format!("width {delta} must be positive")));
        }
        if delta > delta_rmt {
            return Err(Error::InvalidWindow(format!(
                "width {delta} exceeds the RMT width {delta_rmt}"
            )));
        }
        Ok(Self { e0, delta, delta_rmt })
    }

    /// Window whose RMT width equals its own width.
    pub fn simple(e0: f64, delta: f64) -> Result<Self> {
        Self::new(e0, delta, delta)
    }

    pub fn lo(&self) -> f64 {
        self.e0 - self.delta / 2.0
    }

    pub fn hi(&self) -> f64 {
        self.e0 + self.delta / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        in_band(x, self.e0, self.delta)
    }
}

fn in_band(x: f64, center: f64, width: f64) -> bool {
    width >= 0.0 && (x - center).abs() <= width / 2.0 + BOUNDARY_SLACK
}

fn count_in_band(values: &[f64], center: f64, width: f64) -> usize {
    values.iter().filter(|&&x| in_band(x, center, width)).count()
}

#[derive(Clone, Debug)]
pub struct WindowProjector {
    pub matrix: ComplexMatrix,
    /// Eigen-indices (ascending) whose eigenvalue lies in the window.
    pub members: Vec<usize>,
}

impl WindowProjector {
    pub fn dim(&self) -> usize {
        self.members.len()
    }
}

pub fn window_projector(h: &Hamiltonian, window: &EnergyWindow) -> WindowProjector {
    let members: Vec<usize> = h
        .eigenvalues()
        .iter()
        .enumerate()
        .filter(|(_, &x)| window.contains(x))
        .map(|(k, _)| k)
        .collect();
    let n = h.dim();
    let v = &h.eigen().vectors;
    let matrix = ComplexMatrix::from_fn(n, n, |i, j| {
        members.iter().map(|&k| v[(i, k)] * v[(j, k)].conj()).sum::<C64>()
    });
    WindowProjector { matrix, members }
}

/// Non-clustering ratios `(C, C')`:
/// `C = Tr Π_Δ / Tr Π_{Δ_RMT}` and `C' = Tr Π_{Δ - margin} / Tr Π_Δ`.
pub fn non_clustering_report(h: &Hamiltonian, window: &EnergyWindow, poly_margin: f64) -> Result<(f64, f64)> {
    let ev = h.eigenvalues();
    let rmt = count_in_band(ev, window.e0, window.delta_rmt);
    if rmt == 0 {
        return Err(Error::EmptyWindow);
    }
    let d = count_in_band(ev, window.e0, window.delta);
    let inner = count_in_band(ev, window.e0, window.delta - poly_margin);
    let c = d as f64 / rmt as f64;
    let c_prime = if d == 0 { 0.0 } else { inner as f64 / d as f64 };
    Ok((c, c_prime))
}

/// One eigenvalue per line; blank lines and `#` comments are skipped.
pub fn read_spectrum(path: &Path) -> Result<Vec<f64>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let x: f64 = t
            .parse()
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(x);
    }
    Ok(out)
}

pub fn write_spectrum(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for x in values {
        writeln!(w, "{x:e}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn diag_from_spectrum() {
        let h = Hamiltonian::from_spectrum(&[1.0, 0.0], Basis::Identity).unwrap();
        assert_eq!(h.matrix(), &ComplexMatrix::from_diag(&[0.0, 1.0]));
        let h1 = Hamiltonian::from_spectrum(&[0.5], Basis::Identity).unwrap();
        assert_eq!(h1.eigenvalues(), &[0.5]);
    }

    #[test]
    fn random_basis_spectrum_recovered() {
        let values = grid(32);
        let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: 9 }).unwrap();
        let e = eigh(h.matrix()).unwrap();
        for (a, b) in e.values.iter().zip(&values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(h.eigenvalues(), values.as_slice());
    }

    #[test]
    fn empty_spectrum_rejected() {
        assert!(matches!(
            Hamiltonian::from_spectrum(&[], Basis::Identity),
            Err(Error::EmptySpectrum)
        ));
    }

    #[test]
    fn random_local_examples() {
        let z = Hamiltonian::random_local(1, 0, 0).unwrap();
        assert_eq!(z.matrix().max_abs(), 0.0);
        let a = Hamiltonian::random_local(4, 8, 7).unwrap();
        let b = Hamiltonian::random_local(4, 8, 7).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(a.matrix().is_hermitian(1e-14));
        assert!(operator_norm(a.matrix()) <= 8.0 + 1e-9);
        assert!(matches!(
            Hamiltonian::random_local(13, 1, 0),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn local_term_embedding_matches_kron() {
        // Term on qubit 1 of 3 equals I ⊗ h ⊗ I.
        let mut rng = stream(1, 1);
        let local = random_hermitian(2, &mut rng);
        let mut h = ComplexMatrix::zeros(8, 8);
        add_local_term(&mut h, 3, &[1], &local);
        let i2 = ComplexMatrix::identity(2);
        assert!((&h - &i2.kron(&local).kron(&i2)).max_abs() < 1e-15);
        // Two-qubit term on adjacent qubits (0, 1) of 3 equals h ⊗ I.
        let local4 = random_hermitian(4, &mut rng);
        let mut h = ComplexMatrix::zeros(8, 8);
        add_local_term(&mut h, 3, &[0, 1], &local4);
        assert!((&h - &local4.kron(&i2)).max_abs() < 1e-15);
    }

    #[test]
    fn projector_examples() {
        let h = Hamiltonian::from_spectrum(&[0.0, 0.5, 1.0], Basis::Identity).unwrap();
        let w = EnergyWindow::simple(0.5, 0.2).unwrap();
        let p = window_projector(&h, &w);
        assert_eq!(p.members, vec![1]);
        assert_eq!(p.matrix, ComplexMatrix::from_diag(&[0.0, 1.0, 0.0]));

        let h = Hamiltonian::from_spectrum(&grid(32), Basis::Random { seed: 2 }).unwrap();
        let w = EnergyWindow::simple(0.5, 0.25).unwrap();
        let expect = grid(32).iter().filter(|&&x| (0.375..=0.625).contains(&x)).count();
        assert_eq!(window_projector(&h, &w).dim(), expect);

        let w = EnergyWindow::simple(5.0, 0.1).unwrap();
        let p = window_projector(&h, &w);
        assert_eq!(p.dim(), 0);
        assert_eq!(p.matrix.max_abs(), 0.0);
    }

    #[test]
    fn closed_interval_boundary() {
        let h = Hamiltonian::from_spectrum(&[0.25, 0.75], Basis::Identity).unwrap();
        let w = EnergyWindow::simple(0.5, 0.5).unwrap();
        assert_eq!(window_projector(&h, &w).dim(), 2);
    }

    #[test]
    fn window_validation() {
        assert!(EnergyWindow::new(0.5, 0.0, 1.0).is_err());
        assert!(EnergyWindow::new(0.5, 0.3, 0.2).is_err());
    }

    #[test]
    fn non_clustering_examples() {
        let h = Hamiltonian::from_spectrum(&grid(101), Basis::Identity).unwrap();
        let w = EnergyWindow::simple(0.5, 0.2).unwrap();
        let (c, cp) = non_clustering_report(&h, &w, 0.005).unwrap();
        assert_eq!(c, 1.0);
        // 21 grid points in [0.4, 0.6]; a margin below the spacing drops the two endpoints.
        assert!((cp - 19.0 / 21.0).abs() < 1e-15);

        let w = EnergyWindow::new(0.5, 0.2, 0.4).unwrap();
        let (c, _) = non_clustering_report(&h, &w, 0.0).unwrap();
        assert!((c - 0.5).abs() <= 1.0 / 41.0);

        let w = EnergyWindow::simple(5.0, 0.2).unwrap();
        assert!(matches!(non_clustering_report(&h, &w, 0.0), Err(Error::EmptyWindow)));
    }

    #[test]
    fn spectrum_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spec.txt");
        let values = vec![0.1, -2.5, 1e-17, 0.3333333333333333];
        write_spectrum(&p, &values).unwrap();
        assert_eq!(read_spectrum(&p).unwrap(), values);
        std::fs::write(&p, "0.5\nnope\n").unwrap();
        assert!(matches!(read_spectrum(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn rescale_into_unit_interval() {
        let h = Hamiltonian::random_local(3, 4, 1).unwrap();
        let map = UnitRescale::fit(h.eigenvalues(), 0.05).unwrap();
        let r = h.rescaled(map);
        let ev = r.eigenvalues();
        assert!((ev[0] - 0.05).abs() < 1e-12 && (ev[ev.len() - 1] - 0.95).abs() < 1e-12);
        let e = eigh(r.matrix()).unwrap();
        for (a, b) in e.values.iter().zip(ev) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((map.invert(map.apply(0.3)) - 0.3).abs() < 1e-15);
    }
}
