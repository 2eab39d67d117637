//! Perron analysis of `M_f`, the `Q⊗Q` overlap of the pair witness,
//! concentration of `E_i B_i ⊗ B̄_i`, and norms of Gaussian Hermitian matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::{quartiles, require, Violation};
use crate::ensemble::{expected_bb, sample_b, second_moment, EthParams};
use crate::error::{Error, Result};
use crate::hamiltonian::{window_projector, EnergyWindow, Hamiltonian};
use crate::linalg::{eigh, operator_norm, ComplexMatrix, C64};
use crate::protocol::mean_kron_conj;
use crate::qpe::{q_weights, QWeights, QpeConfig};
use crate::rng::{complex_gaussian, standard_normal, substream};

const FULL_RESTRICTION_MAX_D: usize = 16;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerronReport {
    pub lambda: f64,
    /// Leading eigenvector of `M_f`, normalized, entries positive.
    pub x: Vec<f64>,
    pub lambda_second: f64,
    pub ratio: f64,
    /// Largest `|M_f[α][β] - E(B⊗B̄)[(α,α),(β,β)]|` plus any mass off the pair block.
    pub restriction_residual: f64,
    pub violations: Vec<Violation>,
}

/// Leading eigenpair of `M_f = (f_{αβ}^2 / D)` and the inequalities
/// `f² ≤ λ ≤ 1`, `λ_2 ≤ (1 - f⁴) λ`, `1 ≤ x_max / x_min ≤ 1/f²`.
pub fn perron_check(params: &EthParams, seed: u64) -> Result<PerronReport> {
    let f = params.f;
    if f <= 0.0 {
        return Err(Error::Precondition(format!("f = {f} must be positive")));
    }
    let d = params.d;
    let e = eigh(&params.m_f())?;
    let lambda = e.values[d - 1];
    let lambda_second = if d >= 2 { e.values[d - 2] } else { f64::NEG_INFINITY };
    let v = e.vector(d - 1);
    let phase = v[0].conj() / v[0].norm();
    let x: Vec<f64> = v.iter().map(|z| (z * phase).re).collect();
    let imag = v.iter().map(|z| (z * phase).im.abs()).fold(0.0, f64::max);
    let xmax = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xmin = x.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = xmax / xmin;

    // The D x D restriction must reproduce the pair block of E B⊗B̄. Up to
    // FULL_RESTRICTION_MAX_D the D^4 entries off that block are checked too.
    let mf = params.m_f();
    let mut restriction_residual = 0.0f64;
    for a in 0..d {
        for a2 in 0..d {
            let s = second_moment(params, a, a, a2, a2);
            restriction_residual = restriction_residual.max((s - mf[(a, a2)].re).abs());
        }
    }
    if d <= FULL_RESTRICTION_MAX_D {
        for a in 0..d {
            for b in 0..d {
                for a2 in 0..d {
                    for b2 in 0..d {
                        if !(a == b && a2 == b2) {
                            let s = second_moment(params, a, b, a2, b2);
                            restriction_residual = restriction_residual.max(s.abs());
                        }
                    }
                }
            }
        }
    }

    let f2 = f * f;
    let mut violations = Vec::new();
    require(
        &mut violations,
        lambda >= f2 - 1e-12,
        "eq_gap.lambda_lower",
        seed,
        || format!("λ = {lambda} < f² = {f2}"),
    );
    require(
        &mut violations,
        lambda <= 1.0 + 1e-9,
        "eq_gap.lambda_upper",
        seed,
        || format!("λ = {lambda} > 1"),
    );
    require(
        &mut violations,
        lambda_second <= (1.0 - f2 * f2) * lambda + 1e-12,
        "eq_gap.second_eigenvalue",
        seed,
        || format!("λ_2 = {lambda_second} > (1 - f⁴) λ = {}", (1.0 - f2 * f2) * lambda),
    );
    require(
        &mut violations,
        ratio >= 1.0 - 1e-12 && ratio <= 1.0 / f2 + 1e-9,
        "eq_gap.ratio_bound",
        seed,
        || format!("x_max/x_min = {ratio} outside [1, {}]", 1.0 / f2),
    );
    require(
        &mut violations,
        xmin > 0.0 && imag < 1e-10,
        "eq_gap.perron_positive",
        seed,
        || format!("min entry {xmin}, imaginary residue {imag}"),
    );
    require(
        &mut violations,
        restriction_residual < 1e-15,
        "eq_gap.pair_restriction",
        seed,
        || format!("restriction residual {restriction_residual}"),
    );
    Ok(PerronReport {
        lambda,
        x,
        lambda_second,
        ratio,
        restriction_residual,
        violations,
    })
}

/// Cross-check of [`perron_check`]'s restriction against the dense doubled
/// operator (affordable for small `D` only).
pub fn dense_restriction_residual(params: &EthParams) -> Result<f64> {
    let d = params.d;
    let e = expected_bb(params)?;
    let pairs: Vec<usize> = (0..d).map(|a| a * d + a).collect();
    let block = e.submatrix(&pairs, &pairs);
    let full_mass = e.frobenius_norm().powi(2);
    let block_mass = block.frobenius_norm().powi(2);
    Ok((&block - &params.m_f()).max_abs() + (full_mass - block_mass).abs())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QOverlapReport {
    /// `⟨Ψ|Q⊗Q|Ψ⟩` with dense `Q` and `Ψ` in the computational basis.
    pub dense: f64,
    /// `Σ_α x_α² q_α²`.
    pub closed_form: f64,
    pub bound: f64,
    /// Fraction of window eigenvalues outside the `√L`-interior of the grid interval.
    pub boundary_fraction: f64,
}

/// Overlap of the Perron pair state `Σ x_α |v_α v_α>` with `Q⊗Q`.
/// The instance must have no more than a `f^25` fraction of window
/// eigenvalues outside `[m_lo/L + c/L, m_hi/L - c/L]`, `c = ⌊√L⌋`.
pub fn q_conjugation_overlap(
    h: &Hamiltonian,
    window: &EnergyWindow,
    params: &EthParams,
    cfg: &QpeConfig,
) -> Result<QOverlapReport> {
    let members = window_projector(h, window).members;
    if members.len() != params.d {
        return Err(Error::DimensionMismatch {
            context: "window dimension vs ensemble D",
            expected: params.d,
            found: members.len(),
        });
    }
    let c = (cfg.l as f64).sqrt().floor() as i64;
    let ev = h.eigenvalues();
    let boundary = members.iter().filter(|&&k| cfg.interior_depth(ev[k]) < c).count();
    let boundary_fraction = boundary as f64 / members.len() as f64;
    let allowed = params.f.powi(25);
    if boundary_fraction > allowed {
        return Err(Error::Precondition(format!(
            "{boundary} of {} window eigenvalues lie within √L/L of the grid edge \
             (fraction {boundary_fraction:.3e} > 1 - C' = {allowed:.3e})",
            members.len()
        )));
    }
    let x = perron_check(params, 0)?.x;
    let q = q_weights(h, cfg)?;

    let closed_form: f64 = members.iter().zip(&x).map(|(&k, &xa)| xa * xa * q.q[k] * q.q[k]).sum();

    // Dense route: Ψ_c = V diag(x on window) V^T, (Q⊗Q)vec Ψ = Q Ψ Q^T.
    let n = h.dim();
    let v = &h.eigen().vectors;
    let mut xe = ComplexMatrix::zeros(n, n);
    for (&k, &xa) in members.iter().zip(&x) {
        xe[(k, k)] = C64::new(xa, 0.0);
    }
    let psi = &(v * &xe) * &v.transpose();
    let qd = QWeights { q: q.q.clone() }.operator(h);
    let qpsi = &(&qd * &psi) * &qd.transpose();
    let dense = psi
        .as_slice()
        .iter()
        .zip(qpsi.as_slice())
        .map(|(a, b)| (a.conj() * b).re)
        .sum();

    Ok(QOverlapReport {
        dense,
        closed_form,
        bound: 1.0 - 1.0 / (cfg.l as f64).sqrt() - 6.0 * params.f.powi(21),
        boundary_fraction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationPoint {
    pub m: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationCurve {
    pub points: Vec<ConcentrationPoint>,
}

impl ConcentrationCurve {
    /// `median(m_k) / median(m_{k+1})` for consecutive grid points.
    pub fn ratios(&self) -> Vec<(usize, usize, f64)> {
        self.points
            .windows(2)
            .map(|w| (w[0].m, w[1].m, w[0].median / w[1].median))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,median,q25,q75\n");
        for p in &self.points {
            s.push_str(&format!("{},{:.12e},{:.12e},{:.12e}\n", p.m, p.median, p.q25, p.q75));
        }
        s
    }
}

/// `||E_i B_i ⊗ B̄_i - E_G B ⊗ B̄||` for one draw of `m` fluctuation matrices.
pub fn concentration_deviation(params: &EthParams, m: usize, master: u64, trial: u64) -> Result<f64> {
    let blocks: Vec<ComplexMatrix> = (0..m)
        .map(|i| sample_b(params, &mut substream(master, trial, i as u64)))
        .collect();
    let emp = mean_kron_conj(&blocks);
    let exact = expected_bb(params)?;
    Ok(operator_norm(&(&emp - &exact)))
}

/// Median deviation over `trials` independent draws at each `m`.
pub fn concentration_experiment(
    params: &EthParams,
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ConcentrationCurve> {
    if trials < 20 {
        return Err(Error::InvalidParameter(format!("trials = {trials} < 20")));
    }
    if m_grid.is_empty() || m_grid.windows(2).any(|w| w[0] >= w[1]) || m_grid[0] == 0 {
        return Err(Error::InvalidParameter(
            "m grid must be positive and strictly increasing".into(),
        ));
    }
    let mut points = Vec::with_capacity(m_grid.len());
    for (k, &m) in m_grid.iter().enumerate() {
        let devs: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| concentration_deviation(params, m, seed, ((k as u64) << 32) | t as u64))
            .collect::<Result<_>>()?;
        let (q25, median, q75) = quartiles(&devs);
        points.push(ConcentrationPoint { m, median, q25, q75 });
    }
    Ok(ConcentrationCurve { points })
}

/// Hermitian `D x D` matrix with complex Gaussian entries of variance `variance`
/// above the diagonal and real Gaussian diagonal of the same variance.
pub fn gaussian_hermitian<R: rand::Rng + ?Sized>(d: usize, variance: f64, rng: &mut R) -> ComplexMatrix {
    let s = variance.sqrt();
    let mut p = ComplexMatrix::zeros(d, d);
    for a in 0..d {
        p[(a, a)] = C64::new(s * standard_normal(rng), 0.0);
        for b in a + 1..d {
            let z = complex_gaussian(rng) * s;
            p[(a, b)] = z;
            p[(b, a)] = z.conj();
        }
    }
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussNormRow {
    pub d: usize,
    pub samples: usize,
    pub passes: usize,
    pub mean_norm_over_sqrt_d: f64,
    pub max_norm_over_sqrt_d: f64,
}

/// Counts samples with `||P|| ≤ 10 √D`.
pub fn gaussian_norm_experiment(
    d_list: &[usize],
    samples: usize,
    variance: f64,
    seed: u64,
) -> Result<Vec<GaussNormRow>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&variance) {
        return Err(Error::InvalidParameter(format!("variance {variance} outside [0, 1]")));
    }
    d_list
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let sq = (d as f64).sqrt();
            let norms: Vec<f64> = (0..samples)
                .into_par_iter()
                .map(|t| {
                    let p = gaussian_hermitian(d, variance, &mut substream(seed, k as u64, t as u64));
                    operator_norm(&p) / sq
                })
                .collect();
            Ok(GaussNormRow {
                d,
                samples,
                passes: norms.iter().filter(|&&r| r <= 10.0).count(),
                mean_norm_over_sqrt_d: norms.iter().sum::<f64>() / samples as f64,
                max_norm_over_sqrt_d: norms.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Basis;

    #[test]
    fn uniform_rank_one() {
        let f = 0.6;
        let r = perron_check(&EthParams::uniform(16, 1, f).unwrap(), 0).unwrap();
        assert!((r.lambda - f * f).abs() < 1e-12);
        assert!(r.lambda_second.abs() < 1e-12);
        assert!((r.ratio - 1.0).abs() < 1e-10);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn two_by_two_hand_case() {
        let f = 0.5;
        let p = EthParams::new(f, vec![1.0, f, f, 1.0], vec![]).unwrap();
        let r = perron_check(&p, 0).unwrap();
        assert!((r.lambda - 0.625).abs() < 1e-14);
        assert!((r.lambda_second - 0.375).abs() < 1e-14);
        assert!(r.violations.is_empty());
        assert!(dense_restriction_residual(&p).unwrap() < 1e-15);
    }

    #[test]
    fn all_ones_attains_upper_boundary() {
        let r = perron_check(&EthParams::uniform(8, 1, 1.0).unwrap(), 0).unwrap();
        assert!((r.lambda - 1.0).abs() < 1e-12);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn zero_f_rejected() {
        let p = EthParams::new(0.0, vec![0.0; 4], vec![]).unwrap();
        assert!(matches!(perron_check(&p, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_f_matrix_has_no_deviation() {
        let p = EthParams::new(0.0, vec![0.0; 16], vec![]).unwrap();
        assert_eq!(concentration_deviation(&p, 8, 1, 0).unwrap(), 0.0);
    }

    #[test]
    fn zero_variance_gaussian_norm() {
        let rows = gaussian_norm_experiment(&[8], 3, 0.0, 1).unwrap();
        assert_eq!(rows[0].max_norm_over_sqrt_d, 0.0);
        assert_eq!(rows[0].passes, 3);
    }

    #[test]
    fn on_grid_overlap_is_one() {
        // 16 window eigenvalues on interior grid points of L = 1024.
        let l = 1024;
        let mut values: Vec<f64> = (0..16).map(|k| (480 + 4 * k) as f64 / l as f64).collect();
        values.extend([0.1, 0.9]);
        let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: 4 }).unwrap();
        let w = EnergyWindow::simple(0.5, 0.25).unwrap();
        let cfg = QpeConfig::new(l, w).unwrap();
        let p = EthParams::uniform(16, 1, 0.6).unwrap();
        let r = q_conjugation_overlap(&h, &w, &p, &cfg).unwrap();
        assert!((r.closed_form - 1.0).abs() < 1e-10);
        assert!((r.dense - r.closed_form).abs() < 1e-10);
    }

    #[test]
    fn boundary_heavy_instance_rejected() {
        let l = 1024;
        let cfg = QpeConfig::new(l, EnergyWindow::simple(0.5, 0.25).unwrap()).unwrap();
        // Place eigenvalues right at the grid edge.
        let edge = cfg.omega_hi();
        let values: Vec<f64> = (0..4).map(|k| edge - k as f64 / l as f64).collect();
        let h = Hamiltonian::from_spectrum(&values, Basis::Identity).unwrap();
        let p = EthParams::uniform(4, 1, 0.6).unwrap();
        assert!(matches!(
            q_conjugation_overlap(&h, &cfg.window, &p, &cfg),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn concentration_argument_checks() {
        let p = EthParams::uniform(4, 1, 1.0).unwrap();
        assert!(concentration_experiment(&p, &[1, 4], 10, 0).is_err());
        assert!(concentration_experiment(&p, &[4, 4], 20, 0).is_err());
    }
}
