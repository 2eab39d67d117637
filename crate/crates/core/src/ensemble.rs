//! Random-matrix ansatz for observables inside an energy window.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{window_projector, EnergyWindow, Hamiltonian};
use crate::linalg::haar::haar_unitary;
use crate::linalg::{operator_norm, ComplexMatrix, C64, ZERO};
use crate::rng::{standard_normal, stream};

pub use crate::rng::complex_gaussian as sample_complex_gaussian;

/// Largest full-space dimension for exact involution observables.
pub const CIRCUIT_DIM_CAP: usize = 256;
/// Largest window dimension handled by the direct (window-block) route.
pub const DIRECT_DIM_CAP: usize = 64;

const F_TOL: f64 = 1e-12;

// Stream indices reserved for parameter sampling; observables use 0..m.
const F_STREAM: u64 = u64::MAX;
const MU_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum FMode {
    Uniform,
    RandomInRange,
    Explicit { path: std::path::PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MuMode {
    Zero,
    Constant {
        value: f64,
    },
    /// `center + U[0, f^7]` independently per entry.
    Jitter {
        center: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(rename = "D")]
    pub d: usize,
    pub m: usize,
    pub f: f64,
    pub f_mode: FMode,
    pub mu_mode: MuMode,
    pub seed: u64,
}

/// Window dimension, amplitude matrix `f_{αβ}` and diagonal amplitudes `μ^i_α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EthParams {
    pub d: usize,
    pub m: usize,
    pub f: f64,
    /// Row-major `d x d`.
    pub f_matrix: Vec<f64>,
    /// `m` rows of length `d`.
    pub mu: Vec<Vec<f64>>,
}

impl EthParams {
    pub fn new(f: f64, f_matrix: Vec<f64>, mu: Vec<Vec<f64>>) -> Result<Self> {
        let m = mu.len();
        let d = (f_matrix.len() as f64).sqrt().round() as usize;
        let p = Self { d, m, f, f_matrix, mu };
        p.validate()?;
        Ok(p)
    }

    /// Uniform `f_{αβ} = f` with `μ ≡ 0`.
    pub fn uniform(d: usize, m: usize, f: f64) -> Result<Self> {
        Self::new(f, vec![f; d * d], vec![vec![0.0; d]; m])
    }

    pub fn from_config(cfg: &EnsembleConfig) -> Result<Self> {
        let (d, f) = (cfg.d, cfg.f);
        if d == 0 {
            return Err(Error::InvalidParameter("D must be at least 1".into()));
        }
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidParameter(format!("f = {f} must lie in (0, 1]")));
        }
        let f_matrix = match &cfg.f_mode {
            FMode::Uniform => vec![f; d * d],
            FMode::RandomInRange => random_f_matrix(d, f, &mut stream(cfg.seed, F_STREAM)),
            FMode::Explicit { path } => read_f_matrix(path, d)?,
        };
        let mut rng = stream(cfg.seed, MU_STREAM);
        let spread = f.powi(7);
        let mu = (0..cfg.m)
            .map(|_| {
                (0..d)
                    .map(|_| match cfg.mu_mode {
                        MuMode::Zero => 0.0,
                        MuMode::Constant { value } => value,
                        MuMode::Jitter { center } => center + spread * rng.gen::<f64>(),
                    })
                    .collect()
            })
            .collect();
        Self::new(f, f_matrix, mu)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 || self.f_matrix.len() != d * d {
            return Err(Error::InvalidParameter(format!(
                "f_matrix has {} entries, not a nonempty square",
                self.f_matrix.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.f) {
            return Err(Error::InvalidParameter(format!("f = {} outside [0, 1]", self.f)));
        }
        let all_zero = self.f_matrix.iter().all(|&x| x == 0.0);
        for a in 0..d {
            for b in 0..d {
                let x = self.f_at(a, b);
                if x != self.f_at(b, a) {
                    return Err(Error::InvalidParameter(format!("f_matrix not symmetric at ({a}, {b})")));
                }
                if !all_zero && !(x >= self.f - F_TOL && x <= 1.0 + F_TOL) {
                    return Err(Error::InvalidParameter(format!(
                        "f_matrix[{a}][{b}] = {x} outside [{}, 1]",
                        self.f
                    )));
                }
            }
        }
        let spread_cap = self.f.powi(7) + F_TOL;
        for (i, row) in self.mu.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "mu row",
                    expected: d,
                    found: row.len(),
                });
            }
            let (lo, hi) = min_max(row);
            if hi - lo > spread_cap {
                return Err(Error::InvalidParameter(format!(
                    "mu row {i} spread {} exceeds f^7",
                    hi - lo
                )));
            }
        }
        Ok(())
    }

    pub fn f_at(&self, a: usize, b: usize) -> f64 {
        self.f_matrix[a * self.d + b]
    }

    /// `max_α μ^i_α` for each observable.
    pub fn mu_max(&self) -> Vec<f64> {
        self.mu.iter().map(|row| min_max(row).1).collect()
    }

    /// `E_i (max_α μ^i_α)^2`, zero when there are no observables.
    pub fn mean_mu_max_sq(&self) -> f64 {
        if self.m == 0 {
            return 0.0;
        }
        self.mu_max().iter().map(|x| x * x).sum::<f64>() / self.m as f64
    }

    /// The `d x d` matrix `M_f[α][β] = f_{αβ}^2 / D`.
    pub fn m_f(&self) -> ComplexMatrix {
        let d = self.d;
        ComplexMatrix::from_fn(d, d, |a, b| C64::new(self.f_at(a, b).powi(2) / d as f64, 0.0))
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Symmetric matrix with i.i.d. uniform entries in `[f, 1]` on and above the diagonal.
pub fn random_f_matrix<R: Rng + ?Sized>(d: usize, f: f64, rng: &mut R) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for a in 0..d {
        for b in a..d {
            let x = f + (1.0 - f) * rng.gen::<f64>();
            m[a * d + b] = x;
            m[b * d + a] = x;
        }
    }
    m
}

/// Whitespace-separated `d x d` matrix, one row per line.
pub fn read_f_matrix(path: &std::path::Path, d: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_>>()?;
    if vals.len() != d * d {
        return Err(Error::DimensionMismatch {
            context: "f_matrix file",
            expected: d * d,
            found: vals.len(),
        });
    }
    Ok(vals)
}

/// `B[α][β] = f_{αβ} g_{αβ} / √D`, Hermitian with real unit-variance diagonal `g`.
pub fn sample_b<R: Rng + ?Sized>(params: &EthParams, rng: &mut R) -> ComplexMatrix {
    let d = params.d;
    let s = 1.0 / (d as f64).sqrt();
    let mut b = ComplexMatrix::zeros(d, d);
    for a in 0..d {
        b[(a, a)] = C64::new(params.f_at(a, a) * standard_normal(rng) * s, 0.0);
        for c in a + 1..d {
            let z = sample_complex_gaussian(rng) * (params.f_at(a, c) * s);
            b[(a, c)] = z;
            b[(c, a)] = z.conj();
        }
    }
    b
}

/// Entry `[(a, b), (a2, b2)]` of `E_G B ⊗ B̄`: `f_{a a2}^2 / D` when `a = b`
/// and `a2 = b2`, zero otherwise.
pub fn second_moment(params: &EthParams, a: usize, b: usize, a2: usize, b2: usize) -> f64 {
    if a == b && a2 == b2 {
        params.f_at(a, a2).powi(2) / params.d as f64
    } else {
        0.0
    }
}

/// Dense `E_G B ⊗ B̄` on the `D^2`-dimensional doubled window.
pub fn expected_bb(params: &EthParams) -> Result<ComplexMatrix> {
    let d = params.d;
    if d > DIRECT_DIM_CAP {
        return Err(Error::CapExceeded {
            what: "window",
            size: d,
            cap: DIRECT_DIM_CAP,
        });
    }
    let mut out = ComplexMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for a2 in 0..d {
            out[(a * d + a, a2 * d + a2)] = C64::new(second_moment(params, a, a, a2, a2), 0.0);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservableMode {
    /// Window blocks `diag(μ^i) + B_i` in the Hamiltonian eigenbasis.
    Direct,
    /// Exact full-space involutions `W (I - 2P) W^dagger`.
    Circuit,
}

/// Statistics of the window blocks of circuit-mode observables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasuredStats {
    /// `m x D` diagonal entries of each window block.
    pub mu_hat: Vec<Vec<f64>>,
    /// Row-major `D x D` estimate `sqrt(D · mean_i |A^i_{αβ}|^2)` off the diagonal
    /// and `sqrt(D · var_i A^i_{αα})` on it.
    pub f_hat: Vec<f64>,
    pub offdiag_mean: C64,
    pub offdiag_variance: f64,
    pub offdiag_samples: usize,
}

#[derive(Clone, Debug)]
pub struct ObservableSet {
    pub mode: ObservableMode,
    /// Direct: `D x D` window blocks. Circuit: `N x N` matrices in the computational basis.
    pub ops: Vec<ComplexMatrix>,
    /// Eigen-indices of the window the blocks refer to.
    pub window_members: Vec<usize>,
    pub measured: Option<MeasuredStats>,
}

impl ObservableSet {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Window blocks `V_S^dagger A_i V_S` in the eigenbasis (direct mode returns `ops` as is).
    pub fn window_blocks(&self, h: &Hamiltonian) -> Vec<ComplexMatrix> {
        match self.mode {
            ObservableMode::Direct => self.ops.clone(),
            ObservableMode::Circuit => {
                let vs = window_isometry(h, &self.window_members);
                self.ops
                    .iter()
                    .map(|a| a.conjugate_by(&vs).expect("shapes agree"))
                    .collect()
            }
        }
    }

    /// Full-space operators in the computational basis (`V_S B V_S^dagger` in direct mode).
    pub fn full_space(&self, h: &Hamiltonian) -> Vec<ComplexMatrix> {
        match self.mode {
            ObservableMode::Circuit => self.ops.clone(),
            ObservableMode::Direct => {
                let vs = window_isometry(h, &self.window_members);
                let vsd = vs.adjoint();
                self.ops.iter().map(|b| &(&vs * b) * &vsd).collect()
            }
        }
    }

    /// Largest `||A_i^2 - I||` (circuit mode only; direct blocks are not involutions).
    pub fn involution_residual(&self) -> f64 {
        self.ops
            .iter()
            .map(|a| {
                let n = a.rows();
                operator_norm(&(&(a * a) - &ComplexMatrix::identity(n)))
            })
            .fold(0.0, f64::max)
    }
}

/// Columns of the eigenvector matrix for the given eigen-indices.
pub fn window_isometry(h: &Hamiltonian, members: &[usize]) -> ComplexMatrix {
    let v = &h.eigen().vectors;
    ComplexMatrix::from_fn(h.dim(), members.len(), |i, j| v[(i, members[j])])
}

/// Observable `i` is drawn from stream `(seed, i)`, so the set is independent
/// of how the work is scheduled.
pub fn build_observables(
    params: &EthParams,
    h: &Hamiltonian,
    window: &EnergyWindow,
    mode: ObservableMode,
    seed: u64,
) -> Result<ObservableSet> {
    let members = window_projector(h, window).members;
    let d = members.len();
    match mode {
        ObservableMode::Direct => {
            if d == 0 {
                return Err(Error::EmptyWindow);
            }
            if d != params.d {
                return Err(Error::DimensionMismatch {
                    context: "window dimension vs ensemble D",
                    expected: params.d,
                    found: d,
                });
            }
            if d > DIRECT_DIM_CAP {
                return Err(Error::CapExceeded {
                    what: "window",
                    size: d,
                    cap: DIRECT_DIM_CAP,
                });
            }
            let ops = (0..params.m)
                .into_par_iter()
                .map(|i| {
                    let mut b = sample_b(params, &mut stream(seed, i as u64));
                    for a in 0..d {
                        b[(a, a)] += C64::new(params.mu[i][a], 0.0);
                    }
                    b
                })
                .collect();
            Ok(ObservableSet {
                mode,
                ops,
                window_members: members,
                measured: None,
            })
        }
        ObservableMode::Circuit => {
            let n = h.dim();
            if n > CIRCUIT_DIM_CAP {
                return Err(Error::CapExceeded {
                    what: "full space",
                    size: n,
                    cap: CIRCUIT_DIM_CAP,
                });
            }
            let ops: Vec<ComplexMatrix> = (0..params.m)
                .into_par_iter()
                .map(|i| haar_involution(n, &mut stream(seed, i as u64)))
                .collect();
            let mut set = ObservableSet {
                mode,
                ops,
                window_members: members,
                measured: None,
            };
            set.measured = Some(measure_blocks(&set.window_blocks(h)));
            Ok(set)
        }
    }
}

/// `W (I - 2P) W^dagger` with `W` Haar and `P` projecting onto the first `⌊n/2⌋` basis states.
pub fn haar_involution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let w = haar_unitary(n, rng);
    let half = n / 2;
    let signs: Vec<f64> = (0..n).map(|k| if k < half { -1.0 } else { 1.0 }).collect();
    let ws = ComplexMatrix::from_fn(n, n, |i, j| w[(i, j)] * signs[j]);
    (&ws * &w.adjoint()).hermitian_part()
}

/// Exact variance of an off-diagonal entry of `W (I - 2P) W^dagger` for Haar `W`
/// and `rank P = r`: `4 r (n - r) / (n (n^2 - 1))`.
pub fn haar_involution_offdiag_variance(n: usize, r: usize) -> f64 {
    let (n, r) = (n as f64, r as f64);
    4.0 * r * (n - r) / (n * (n * n - 1.0))
}

fn measure_blocks(blocks: &[ComplexMatrix]) -> MeasuredStats {
    let m = blocks.len().max(1) as f64;
    let d = blocks.first().map_or(0, |b| b.rows());
    let mu_hat = blocks.iter().map(|b| (0..d).map(|a| b[(a, a)].re).collect()).collect();
    let mut f_hat = vec![0.0; d * d];
    for a in 0..d {
        for c in 0..d {
            let v = if a == c {
                let mean = blocks.iter().map(|b| b[(a, a)].re).sum::<f64>() / m;
                blocks.iter().map(|b| (b[(a, a)].re - mean).powi(2)).sum::<f64>() / m
            } else {
                blocks.iter().map(|b| b[(a, c)].norm_sqr()).sum::<f64>() / m
            };
            f_hat[a * d + c] = (d as f64 * v).sqrt();
        }
    }
    let off: Vec<C64> = blocks
        .iter()
        .flat_map(|b| (0..d).flat_map(move |a| (a + 1..d).map(move |c| b[(a, c)])))
        .collect();
    let k = off.len();
    let (offdiag_mean, offdiag_variance) = if k == 0 {
        (ZERO, 0.0)
    } else {
        let mean: C64 = off.iter().sum::<C64>() / k as f64;
        let var = off.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / k as f64;
        (mean, var)
    };
    MeasuredStats {
        mu_hat,
        f_hat,
        offdiag_mean,
        offdiag_variance,
        offdiag_samples: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Basis;

    #[test]
    fn complex_gaussian_moments() {
        let mut rng = stream(1, 0);
        let n = 100_000;
        let samples: Vec<C64> = (0..n).map(|_| sample_complex_gaussian(&mut rng)).collect();
        let abs2 = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let sq: C64 = samples.iter().map(|z| z * z).sum::<C64>() / n as f64;
        assert!((abs2 - 1.0).abs() < 0.02);
        assert!(sq.re.abs() < 0.02 && sq.im.abs() < 0.02);
        let again: Vec<C64> = {
            let mut r = stream(1, 0);
            (0..5).map(|_| sample_complex_gaussian(&mut r)).collect()
        };
        assert_eq!(&again[..], &samples[..5]);
    }

    #[test]
    fn one_dimensional_b_is_real_unit_variance() {
        let p = EthParams::uniform(1, 1, 1.0).unwrap();
        let mut rng = stream(2, 0);
        let n = 50_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let b = sample_b(&p, &mut rng);
            assert_eq!(b[(0, 0)].im, 0.0);
            acc += b[(0, 0)].re.powi(2);
        }
        assert!((acc / n as f64 - 1.0).abs() < 0.03);
    }

    #[test]
    fn b_is_hermitian_and_bounded() {
        let p = EthParams::uniform(64, 1, 1.0).unwrap();
        let mut rng = stream(3, 0);
        for _ in 0..20 {
            let b = sample_b(&p, &mut rng);
            assert_eq!(b.hermitian_residual(), 0.0);
            assert!(operator_norm(&b) <= 10.0);
        }
    }

    #[test]
    fn zero_f_gives_zero_b() {
        let p = EthParams::new(0.0, vec![0.0; 9], vec![vec![0.0; 3]]).unwrap();
        assert_eq!(sample_b(&p, &mut stream(4, 0)).max_abs(), 0.0);
    }

    #[test]
    fn expected_bb_two_by_two() {
        let f = 0.5;
        let p = EthParams::new(f, vec![1.0, f, f, 1.0], vec![]).unwrap();
        let e = expected_bb(&p).unwrap();
        // Pair basis |00>, |11> sits at indices 0 and 3.
        let r = e.submatrix(&[0, 3], &[0, 3]);
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((r[(0, 1)].re - f * f / 2.0).abs() < 1e-15);
        let ev = crate::linalg::eigh(&r).unwrap().values;
        assert!((ev[0] - (1.0 - f * f) / 2.0).abs() < 1e-14);
        assert!((ev[1] - (1.0 + f * f) / 2.0).abs() < 1e-14);
        // Off the pair subspace everything vanishes.
        assert_eq!(e[(1, 1)], ZERO);
        assert_eq!(e[(1, 2)], ZERO);
    }

    #[test]
    fn expected_bb_uniform_rank_one() {
        let f = 0.7;
        let p = EthParams::uniform(5, 1, f).unwrap();
        let ev = crate::linalg::eigh(&expected_bb(&p).unwrap()).unwrap().values;
        assert!((ev[ev.len() - 1] - f * f).abs() < 1e-12);
        assert!(ev[ev.len() - 2].abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(EthParams::new(0.5, vec![1.0, 0.4, 0.4, 1.0], vec![]).is_err());
        assert!(EthParams::new(0.5, vec![1.0, 0.6, 0.7, 1.0], vec![]).is_err());
        assert!(EthParams::new(0.5, vec![1.0; 4], vec![vec![0.0, 0.1]]).is_err());
        assert!(EthParams::new(0.5, vec![1.0; 4], vec![vec![0.0, 0.005]]).is_ok());
    }

    #[test]
    fn config_sampling_respects_ranges() {
        let cfg = EnsembleConfig {
            d: 8,
            m: 4,
            f: 0.6,
            f_mode: FMode::RandomInRange,
            mu_mode: MuMode::Jitter { center: 0.3 },
            seed: 11,
        };
        let p = EthParams::from_config(&cfg).unwrap();
        assert_eq!(p, EthParams::from_config(&cfg).unwrap());
        assert!(p.f_matrix.iter().all(|&x| (0.6..=1.0).contains(&x)));
        assert!(p.mu.iter().flatten().all(|&x| x >= 0.3 && x <= 0.3 + 0.6f64.powi(7)));
        let bad = EnsembleConfig { f: 0.0, ..cfg };
        assert!(EthParams::from_config(&bad).is_err());
    }

    fn grid_h(n: usize, seed: u64) -> Hamiltonian {
        let v: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
        Hamiltonian::from_spectrum(&v, Basis::Random { seed }).unwrap()
    }

    #[test]
    fn direct_mode_without_mu_is_b() {
        let h = grid_h(16, 1);
        let w = EnergyWindow::simple(0.5, 0.5).unwrap();
        let p = EthParams::uniform(8, 3, 0.8).unwrap();
        let set = build_observables(&p, &h, &w, ObservableMode::Direct, 42).unwrap();
        for (i, op) in set.ops.iter().enumerate() {
            assert_eq!(op, &sample_b(&p, &mut stream(42, i as u64)));
        }
        let wrong = EthParams::uniform(7, 1, 0.8).unwrap();
        assert!(build_observables(&wrong, &h, &w, ObservableMode::Direct, 0).is_err());
    }

    #[test]
    fn circuit_mode_involutions() {
        let h = grid_h(16, 2);
        let w = EnergyWindow::simple(0.5, 0.5).unwrap();
        let p = EthParams::uniform(8, 4, 0.8).unwrap();
        let set = build_observables(&p, &h, &w, ObservableMode::Circuit, 7).unwrap();
        assert!(set.involution_residual() <= 1e-10);
        assert!(set.measured.is_some());
        let big = grid_h(257, 0);
        assert!(matches!(
            build_observables(&p, &big, &w, ObservableMode::Circuit, 0),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn circuit_mode_window_statistics() {
        // N = 64, D = 16: off-diagonal window entries have mean 0 and the exact
        // Haar-involution variance 4r(N-r)/(N(N^2-1)), which is about 1/N.
        let n = 64;
        let h = grid_h(n, 3);
        let w = EnergyWindow::simple(0.5, 0.25).unwrap();
        let d = window_projector(&h, &w).dim();
        assert_eq!(d, 16);
        let p = EthParams::uniform(d, 64, 1.0).unwrap();
        let set = build_observables(&p, &h, &w, ObservableMode::Circuit, 5).unwrap();
        let st = set.measured.unwrap();
        let k = st.offdiag_samples as f64;
        let expect = haar_involution_offdiag_variance(n, n / 2);
        // |z|^2 of a complex Gaussian is exponential: sd equals its mean.
        let se_var = expect / k.sqrt();
        assert!((st.offdiag_variance - expect).abs() < 3.0 * se_var);
        let se_mean = (expect / 2.0 / k).sqrt();
        assert!(st.offdiag_mean.re.abs() < 3.0 * se_mean);
        assert!(st.offdiag_mean.im.abs() < 3.0 * se_mean);
    }
}
