//! Phase estimation on a grid of resolution `1/L`: the `sinc_L` kernel, the
//! weight operator `Q(H)`, and the dense `U_QPE` / `Π_SP` constructions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{EnergyWindow, Hamiltonian};
use crate::linalg::{operator_norm, ComplexMatrix, C64};

/// Cap on `dim(S) · L` for the dense phase-estimation operators.
pub const QPE_DIM_CAP: usize = 1024;

/// Distance to an integer below which `sinc_L` returns its limit value.
pub const SINGULAR_TOL: f64 = 1e-9;

/// Roundoff allowance for `q_α ≤ 1`.
pub const WEIGHT_TOL: f64 = 1e-10;

/// `sin(π L x) / (L sin(π x))`, with the limit `(-1)^{k(L-1)}` at integer `x = k`.
pub fn sinc_l(x: f64, l: usize) -> f64 {
    let k = x.round();
    if (x - k).abs() < SINGULAR_TOL {
        let odd = (k as i64).rem_euclid(2) == 1 && l.is_multiple_of(2);
        return if odd { -1.0 } else { 1.0 };
    }
    let lf = l as f64;
    (PI * lf * x).sin() / (lf * (PI * x).sin())
}

/// Grid resolution and the integer summation range `m_lo..=m_hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpeConfig {
    pub l: usize,
    pub window: EnergyWindow,
    /// Inner width `2j/L`, the largest such value not above `Δ - 1/√L`.
    pub omega: f64,
    pub m_lo: i64,
    pub m_hi: i64,
}

impl QpeConfig {
    /// Requires `e0 · L` to be an integer (to 1e-9) and `Δ - 1/√L ≥ 2/L`.
    pub fn new(l: usize, window: EnergyWindow) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidParameter(format!("L = {l} must be at least 2")));
        }
        let lf = l as f64;
        let k0f = window.e0 * lf;
        let k0 = k0f.round();
        if (k0f - k0).abs() > 1e-9 {
            return Err(Error::InvalidWindow(format!(
                "e0 = {} is not a multiple of 1/L = 1/{l}",
                window.e0
            )));
        }
        let raw = (window.delta - 1.0 / lf.sqrt()) * lf / 2.0;
        let j = (raw + 1e-9).floor();
        if j < 1.0 {
            return Err(Error::InvalidWindow(format!(
                "Δ = {} leaves no grid points after removing 1/√L (L = {l})",
                window.delta
            )));
        }
        let j = j as i64;
        if (2 * j + 1) as usize > l {
            return Err(Error::InvalidWindow(format!(
                "grid range of {} points exceeds L = {l}",
                2 * j + 1
            )));
        }
        let k0 = k0 as i64;
        Ok(Self {
            l,
            window,
            omega: 2.0 * j as f64 / lf,
            m_lo: k0 - j,
            m_hi: k0 + j,
        })
    }

    pub fn grid_len(&self) -> usize {
        (self.m_hi - self.m_lo + 1) as usize
    }

    pub fn omega_lo(&self) -> f64 {
        self.m_lo as f64 / self.l as f64
    }

    pub fn omega_hi(&self) -> f64 {
        self.m_hi as f64 / self.l as f64
    }

    /// Distance from `x` to the inner interval `[m_lo/L, m_hi/L]` on the unit circle.
    pub fn circular_distance_to_grid(&self, x: f64) -> f64 {
        let (lo, hi) = (self.omega_lo(), self.omega_hi());
        let t = (x - lo).rem_euclid(1.0);
        let span = hi - lo;
        if t <= span {
            0.0
        } else {
            (t - span).min(1.0 - t)
        }
    }

    /// Largest integer `c` with `x ∈ [m_lo/L + c/L, m_hi/L - c/L]` (0 if none).
    pub fn interior_depth(&self, x: f64) -> i64 {
        let lf = self.l as f64;
        let a = ((x - self.omega_lo()) * lf + 1e-9).floor();
        let b = ((self.omega_hi() - x) * lf + 1e-9).floor();
        a.min(b).max(0.0) as i64
    }

    /// Weight `q(x) = Σ_{m=m_lo}^{m_hi} sinc_L(x - m/L)^2`.
    pub fn weight(&self, x: f64) -> f64 {
        let lf = self.l as f64;
        (self.m_lo..=self.m_hi)
            .map(|m| sinc_l(x - m as f64 / lf, self.l).powi(2))
            .sum()
    }
}

/// Per-eigenvalue weights `q_α` of `Q(H)`, indexed like the eigenvalues.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QWeights {
    pub q: Vec<f64>,
}

impl QWeights {
    /// `Q(H) = V diag(q) V^dagger` in the computational basis.
    pub fn operator(&self, h: &Hamiltonian) -> ComplexMatrix {
        let v = &h.eigen().vectors;
        let n = h.dim();
        let scaled = ComplexMatrix::from_fn(n, n, |i, j| v[(i, j)] * self.q[j]);
        &scaled * &v.adjoint()
    }
}

pub fn q_weights(h: &Hamiltonian, cfg: &QpeConfig) -> Result<QWeights> {
    if cfg.m_lo > cfg.m_hi {
        return Err(Error::EmptyGrid {
            m_lo: cfg.m_lo,
            m_hi: cfg.m_hi,
        });
    }
    let q: Vec<f64> = h.eigenvalues().iter().map(|&x| cfg.weight(x)).collect();
    if let Some((index, &value)) = q.iter().enumerate().find(|(_, &v)| v > 1.0 + WEIGHT_TOL) {
        return Err(Error::WeightAboveOne { index, value });
    }
    Ok(QWeights { q })
}

fn check_cap(n: usize, l: usize) -> Result<()> {
    if n * l > QPE_DIM_CAP {
        return Err(Error::CapExceeded {
            what: "dim(S)·L",
            size: n * l,
            cap: QPE_DIM_CAP,
        });
    }
    Ok(())
}

/// `U_QPE = (1/√L) Σ_{m,k} e^{2πi(H - m/L)k} ⊗ |m><k|` on `S ⊗ P` (S is the slow factor).
pub fn build_u_qpe(h: &Hamiltonian, l: usize) -> Result<ComplexMatrix> {
    let n = h.dim();
    check_cap(n, l)?;
    let lf = l as f64;
    let evol: Vec<ComplexMatrix> = (0..l)
        .map(|k| h.eigen().apply_fn(|x| C64::from_polar(1.0, 2.0 * PI * x * k as f64)))
        .collect();
    let norm = 1.0 / lf.sqrt();
    Ok(ComplexMatrix::from_fn(n * l, n * l, |r, c| {
        let (s, m) = (r / l, r % l);
        let (s2, k) = (c / l, c % l);
        let phase = C64::from_polar(norm, -2.0 * PI * ((m * k) % l) as f64 / lf);
        evol[k][(s, s2)] * phase
    }))
}

/// `Π_SP = U_QPE^dagger (I ⊗ Σ_{m=m_lo}^{m_hi} |m mod L><m mod L|) U_QPE`.
pub fn build_pi_sp(h: &Hamiltonian, cfg: &QpeConfig) -> Result<ComplexMatrix> {
    let n = h.dim();
    let l = cfg.l;
    check_cap(n, l)?;
    let u = build_u_qpe(h, l)?;
    let mut keep = vec![false; l];
    for m in cfg.m_lo..=cfg.m_hi {
        keep[m.rem_euclid(l as i64) as usize] = true;
    }
    // Rows of U outside the kept range are dropped: Π = U_k^dagger U_k.
    let rows: Vec<usize> = (0..n * l).filter(|r| keep[r % l]).collect();
    let cols: Vec<usize> = (0..n * l).collect();
    let uk = u.submatrix(&rows, &cols);
    Ok((&uk.adjoint() * &uk).hermitian_part())
}

/// `max |Π_P Π_SP Π_P - Q ⊗ Π_P|` with `Π_P = I ⊗ |μ><μ|`, all matrices dense.
pub fn qpe_identity_residual(h: &Hamiltonian, cfg: &QpeConfig) -> Result<f64> {
    let n = h.dim();
    let l = cfg.l;
    let pi_sp = build_pi_sp(h, cfg)?;
    let mu = uniform_state(l);
    let pmu = ComplexMatrix::outer(&mu, &mu);
    let pi_p = ComplexMatrix::identity(n).kron(&pmu);
    let lhs = &(&pi_p * &pi_sp) * &pi_p;
    let rhs = q_weights(h, cfg)?.operator(h).kron(&pmu);
    Ok((&lhs - &rhs).max_abs())
}

/// Uniform superposition `|μ> = L^{-1/2} Σ_k |k>`.
pub fn uniform_state(l: usize) -> Vec<C64> {
    vec![C64::new(1.0 / (l as f64).sqrt(), 0.0); l]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QmassReport {
    /// `||Q - Π_Δ Q||` evaluated as a dense operator norm.
    pub measured: f64,
    /// `max q_α` over eigenvalues outside the window.
    pub max_outside_weight: f64,
    pub bound: f64,
}

/// Leakage of `Q(H)` outside `Π_Δ`. Above [`QMASS_DENSE_NORM_CAP`] the dense
/// norm is replaced by the diagonal formula.
pub fn qmass_check(h: &Hamiltonian, window: &EnergyWindow, cfg: &QpeConfig) -> Result<QmassReport> {
    let w = q_weights(h, cfg)?;
    let outside: Vec<f64> = h
        .eigenvalues()
        .iter()
        .zip(&w.q)
        .map(|(&x, &q)| if window.contains(x) { 0.0 } else { q })
        .collect();
    let max_outside_weight = outside.iter().copied().fold(0.0, f64::max);
    let measured = if h.dim() <= QMASS_DENSE_NORM_CAP {
        operator_norm(&QWeights { q: outside }.operator(h))
    } else {
        max_outside_weight
    };
    Ok(QmassReport {
        measured,
        max_outside_weight,
        bound: 2.0 / (cfg.l as f64).sqrt(),
    })
}

pub const QMASS_DENSE_NORM_CAP: usize = 1024;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Basis;

    #[test]
    fn sinc_examples() {
        assert_eq!(sinc_l(0.0, 8), 1.0);
        for k in 1..8 {
            assert!(sinc_l(k as f64 / 8.0, 8).abs() < 1e-14);
        }
        assert_eq!(sinc_l(1.0, 4), -1.0);
        for dx in [1e-8, -1e-8] {
            assert!((sinc_l(1.0 + dx, 4) + 1.0).abs() < 1e-6);
        }
        assert_eq!(sinc_l(1.0, 5), 1.0);
        assert!((sinc_l(1.0 + 1e-8, 5) - 1.0).abs() < 1e-6);
    }

    fn cfg(l: usize, e0: f64, delta: f64) -> QpeConfig {
        QpeConfig::new(l, EnergyWindow::simple(e0, delta).unwrap()).unwrap()
    }

    #[test]
    fn config_grid_limits() {
        let c = cfg(64, 0.5, 0.25);
        // (0.25 - 1/8) * 64 / 2 = 4.
        assert_eq!((c.m_lo, c.m_hi), (28, 36));
        assert!((c.omega - 8.0 / 64.0).abs() < 1e-15);
        assert!(QpeConfig::new(64, EnergyWindow::simple(0.501, 0.25).unwrap()).is_err());
        assert!(QpeConfig::new(64, EnergyWindow::simple(0.5, 0.13).unwrap()).is_err());
    }

    #[test]
    fn on_grid_weight_is_one() {
        let c = cfg(64, 0.5, 0.25);
        assert!((c.weight(30.0 / 64.0) - 1.0).abs() < 1e-14);
        assert!(c.weight(20.0 / 64.0) < 1e-28);
    }

    #[test]
    fn circular_distance() {
        let c = cfg(64, 0.5, 0.25);
        assert_eq!(c.circular_distance_to_grid(0.5), 0.0);
        assert!((c.circular_distance_to_grid(40.0 / 64.0) - 4.0 / 64.0).abs() < 1e-15);
        assert!((c.circular_distance_to_grid(0.99) - (0.99 - 36.0 / 64.0)).abs() < 1e-14);
        // Window near zero: a value just below 1 wraps around.
        let w = cfg(64, 8.0 / 64.0, 0.25);
        assert_eq!((w.m_lo, w.m_hi), (4, 12));
        assert!((w.circular_distance_to_grid(0.99) - (0.01 + 4.0 / 64.0)).abs() < 1e-14);
        assert_eq!(c.interior_depth(32.0 / 64.0), 4);
        assert_eq!(c.interior_depth(0.1), 0);
    }

    #[test]
    fn zero_hamiltonian_decouples() {
        let l = 8;
        let h = Hamiltonian::from_spectrum(&[0.0, 0.0], Basis::Identity).unwrap();
        let c = QpeConfig {
            l,
            window: EnergyWindow::simple(0.0, 0.9).unwrap(),
            omega: 0.25,
            m_lo: -1,
            m_hi: 1,
        };
        let pi = build_pi_sp(&h, &c).unwrap();
        // For H = 0, U_QPE = I ⊗ F^dagger, so Π_SP = I ⊗ F^dagger-conjugated mode projector.
        let f = ComplexMatrix::from_fn(l, l, |m, k| {
            C64::from_polar(1.0 / (l as f64).sqrt(), -2.0 * PI * (m * k) as f64 / l as f64)
        });
        let mut d = ComplexMatrix::zeros(l, l);
        for m in [l - 1, 0, 1] {
            d[(m, m)] = C64::new(1.0, 0.0);
        }
        let expect = ComplexMatrix::identity(2).kron(&(&(&f.adjoint() * &d) * &f));
        assert!((&pi - &expect).max_abs() < 1e-12);
    }

    #[test]
    fn u_qpe_unitary_and_pi_sp_projector() {
        let values: Vec<f64> = (0..4).map(|k| 0.1 + 0.23 * k as f64).collect();
        let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: 3 }).unwrap();
        let u = build_u_qpe(&h, 16).unwrap();
        assert!(crate::linalg::unitarity_residual(&u) < 1e-10);
        let p = build_pi_sp(&h, &cfg(16, 0.5, 0.5)).unwrap();
        assert!((&(&p * &p) - &p).max_abs() < 1e-9);
        assert!(p.hermitian_residual() < 1e-12);
    }

    #[test]
    fn cap_enforced() {
        let h = Hamiltonian::from_spectrum(&vec![0.5; 128], Basis::Identity).unwrap();
        assert!(matches!(build_u_qpe(&h, 16), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn qmass_inside_is_zero() {
        let c = cfg(64, 0.5, 0.25);
        let h = Hamiltonian::from_spectrum(&[0.45, 0.5, 0.55], Basis::Random { seed: 1 }).unwrap();
        let r = qmass_check(&h, &c.window, &c).unwrap();
        assert!(r.measured < 1e-12);
    }
}
