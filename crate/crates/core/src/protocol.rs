//! The energy subspace test: exact statevector simulation of the circuit,
//! the closed-form acceptance expression, and the success operators built
//! on the doubled window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{window_isometry, EthParams, ObservableMode, ObservableSet};
use crate::error::{Error, Result};
use crate::hamiltonian::{window_projector, Hamiltonian};
use crate::linalg::{eigh, expm_i, inner, operator_norm, ComplexMatrix, Statevector, C64, ZERO};
use crate::qpe::{build_pi_sp, q_weights, uniform_state, QpeConfig};

pub const S1: &str = "S1";
pub const S2: &str = "S2";
pub const P1: &str = "P1";
pub const P2: &str = "P2";
pub const T: &str = "T";

/// Circuit-simulation caps.
pub const CIRCUIT_MAX_SYSTEM: usize = 16;
pub const CIRCUIT_MAX_L: usize = 32;
pub const CIRCUIT_MAX_M: usize = 8;

/// Gap below which the top eigenspace is reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Largest doubled space `N^2` handled by [`no_case_norm`].
pub const NO_CASE_DOUBLED_CAP: usize = 4096;

const INVOLUTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub eps: f64,
    pub mode: ObservableMode,
    pub qpe: QpeConfig,
}

impl ProtocolConfig {
    pub fn new(eps: f64, mode: ObservableMode, qpe: QpeConfig) -> Result<Self> {
        if !(0.0..=0.5).contains(&eps) {
            return Err(Error::InvalidParameter(format!("ε = {eps} outside [0, 0.5]")));
        }
        Ok(Self { eps, mode, qpe })
    }
}

/// `V conj(V^dagger A V) V^dagger`: entrywise conjugation in the eigenbasis of `h`.
pub fn conj_in_eigenbasis(h: &Hamiltonian, a: &ComplexMatrix) -> ComplexMatrix {
    let v = &h.eigen().vectors;
    let ae = a.conjugate_by(v).expect("square operator on the system space");
    &(v * &ae.conj()) * &v.adjoint()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CircuitOutcome {
    /// Final acceptance probability.
    pub p_accept: f64,
    /// Squared norm surviving the first projection round.
    pub p_first_round: f64,
}

fn check_input(input: &Statevector, n: usize) -> Result<()> {
    if input.dim_of(S1)? != n || input.dim_of(S2)? != n || input.registers().len() != 2 {
        return Err(Error::DimensionMismatch {
            context: "input state on S1 ⊗ S2",
            expected: n * n,
            found: input.len(),
        });
    }
    let norm = input.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!("input squared norm {norm} is not 1")));
    }
    Ok(())
}

/// Simulates the six steps of the test on registers `S1 P1 S2 P2 T` and
/// returns the acceptance probability. Both projection rounds apply
/// `Π_SP` to `S1P1` and `S2P2` and then project `P1`, `P2` onto `|μ>`.
pub fn run_algorithm1(
    input: &Statevector,
    h: &Hamiltonian,
    observables: &ObservableSet,
    cfg: &ProtocolConfig,
) -> Result<CircuitOutcome> {
    let n = h.dim();
    let l = cfg.qpe.l;
    let m = observables.len();
    for (what, size, cap) in [
        ("system", n, CIRCUIT_MAX_SYSTEM),
        ("L", l, CIRCUIT_MAX_L),
        ("observable count", m, CIRCUIT_MAX_M),
    ] {
        if size > cap {
            return Err(Error::CapExceeded { what, size, cap });
        }
    }
    if m == 0 {
        return Err(Error::InvalidParameter("no observables".into()));
    }
    check_input(input, n)?;
    let ops = observables.full_space(h);
    if observables.mode == ObservableMode::Circuit {
        for (index, a) in ops.iter().enumerate() {
            let residual = operator_norm(&(&(a * a) - &ComplexMatrix::identity(n)));
            if residual > INVOLUTION_TOL {
                return Err(Error::NotInvolution { index, residual });
            }
        }
    }

    let pi_sp = build_pi_sp(h, &cfg.qpe)?;
    let mu = uniform_state(l);
    let round = |st: &mut Statevector| -> Result<()> {
        st.apply(&pi_sp, &[S1, P1])?;
        st.apply(&pi_sp, &[S2, P2])?;
        st.project_onto(P1, &mu)?;
        st.project_onto(P2, &mu)
    };

    let mut st = input
        .permute(&[S1, S2])?
        .append(P1, &mu)?
        .append(P2, &mu)?
        .permute(&[S1, P1, S2, P2])?;
    round(&mut st)?;
    let p_first_round = st.norm_sqr();

    let tvec = uniform_state(2 * m);
    let mut st = st.append(T, &tvec)?;
    for (i, a) in ops.iter().enumerate() {
        let u = expm_i(a, cfg.eps)?;
        let ubar_minus = expm_i(&conj_in_eigenbasis(h, a), -cfg.eps)?;
        st.apply_controlled(&u, &[S1], T, 2 * i)?;
        st.apply_controlled(&ubar_minus, &[S2], T, 2 * i)?;
        st.apply_controlled(&u.adjoint(), &[S1], T, 2 * i + 1)?;
        st.apply_controlled(&ubar_minus.adjoint(), &[S2], T, 2 * i + 1)?;
    }
    round(&mut st)?;
    st.project_onto(T, &tvec)?;
    Ok(CircuitOutcome {
        p_accept: st.norm_sqr(),
        p_first_round,
    })
}

/// Coefficients `Ψ_e[α][β]` of a state on `S1 ⊗ S2` in the product eigenbasis:
/// `Ψ_e = V^dagger Ψ conj(V)`.
pub fn to_eigen_coefficients(input: &Statevector, h: &Hamiltonian) -> Result<ComplexMatrix> {
    let n = h.dim();
    check_input(input, n)?;
    let psi = ComplexMatrix::from_vec(n, n, input.permute(&[S1, S2])?.into_amplitudes())?;
    let v = &h.eigen().vectors;
    Ok(&(&v.adjoint() * &psi) * &v.conj())
}

/// Inverse of [`to_eigen_coefficients`]: `Ψ = V Ψ_e V^T`.
pub fn from_eigen_coefficients(psi_e: &ComplexMatrix, h: &Hamiltonian) -> Result<Statevector> {
    let n = h.dim();
    let v = &h.eigen().vectors;
    let psi = &(v * psi_e) * &v.transpose();
    Statevector::new(&[(S1, n), (S2, n)], psi.into_vec())
}

/// Embed a doubled-window vector (index `a·D + b`) as eigen coefficients on the full space.
pub fn embed_window_coefficients(h: &Hamiltonian, members: &[usize], w: &[C64]) -> ComplexMatrix {
    let d = members.len();
    let mut out = ComplexMatrix::zeros(h.dim(), h.dim());
    for a in 0..d {
        for b in 0..d {
            out[(members[a], members[b])] = w[a * d + b];
        }
    }
    out
}

/// `diag(q) X diag(q)`.
fn sandwich_q(q: &[f64], x: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(x.rows(), x.cols(), |a, b| x[(a, b)] * (q[a] * q[b]))
}

/// Exact value of `|| E_i (Q⊗Q)(½ e^{iεA_i}⊗e^{-iεĀ_i} + ½ e^{-iεA_i}⊗e^{iεĀ_i})(Q⊗Q) ψ ||^2`
/// with `ψ`, `Q` and the `A_i` all given in one eigenbasis (`Ψ_e` as a matrix).
pub fn operator_route_eigen(psi_e: &ComplexMatrix, q: &[f64], a_e: &[ComplexMatrix], eps: f64) -> Result<f64> {
    if a_e.is_empty() {
        return Err(Error::InvalidParameter("no observables".into()));
    }
    let phi = sandwich_q(q, psi_e);
    let terms: Vec<ComplexMatrix> = a_e
        .par_iter()
        .map(|a| -> Result<ComplexMatrix> {
            let u = expm_i(a, eps)?;
            let ud = u.adjoint();
            let plus = &(&u * &phi) * &ud;
            let minus = &(&ud * &phi) * &u;
            Ok((&plus + &minus).scale_real(0.5))
        })
        .collect::<Result<_>>()?;
    let mut acc = ComplexMatrix::zeros(phi.rows(), phi.cols());
    for t in &terms {
        acc = &acc + t;
    }
    let r = sandwich_q(q, &acc.scale_real(1.0 / a_e.len() as f64));
    Ok(r.frobenius_norm().powi(2))
}

/// Observables as full `N x N` matrices in the eigenbasis of `h`.
pub fn observables_in_eigenbasis(h: &Hamiltonian, obs: &ObservableSet) -> Vec<ComplexMatrix> {
    let n = h.dim();
    match obs.mode {
        ObservableMode::Circuit => {
            let v = &h.eigen().vectors;
            obs.ops
                .iter()
                .map(|a| a.conjugate_by(v).expect("square operators"))
                .collect()
        }
        ObservableMode::Direct => obs
            .ops
            .iter()
            .map(|b| {
                let mut out = ComplexMatrix::zeros(n, n);
                for (i, &mi) in obs.window_members.iter().enumerate() {
                    for (j, &mj) in obs.window_members.iter().enumerate() {
                        out[(mi, mj)] = b[(i, j)];
                    }
                }
                out
            })
            .collect(),
    }
}

/// Closed-form acceptance probability for an input on `S1 ⊗ S2`.
pub fn acceptance_operator_route(
    input: &Statevector,
    h: &Hamiltonian,
    observables: &ObservableSet,
    cfg: &ProtocolConfig,
) -> Result<f64> {
    let psi_e = to_eigen_coefficients(input, h)?;
    let q = q_weights(h, &cfg.qpe)?.q;
    operator_route_eigen(&psi_e, &q, &observables_in_eigenbasis(h, observables), cfg.eps)
}

/// `O_succ = (Q⊗Q)((1-ε²) Π⊗Π + ε² E_i ΠA_iΠ ⊗ ΠĀ_iΠ)(Q⊗Q)` on the doubled
/// window, indexed `a·D + b`, given `q` and the `D x D` window blocks of `A_i`.
pub fn o_succ_from_blocks(q: &[f64], blocks: &[ComplexMatrix], eps: f64) -> Result<ComplexMatrix> {
    let d = q.len();
    let m = blocks.len();
    if m == 0 {
        return Err(Error::InvalidParameter("no observables".into()));
    }
    if let Some(b) = blocks.iter().find(|b| b.rows() != d || b.cols() != d) {
        return Err(Error::DimensionMismatch {
            context: "window block",
            expected: d,
            found: b.rows(),
        });
    }
    Ok(o_succ_from_mean(q, mean_kron_conj(blocks), eps))
}

/// `O_succ` from a precomputed `E_i W_i ⊗ W̄_i`.
pub fn o_succ_from_mean(q: &[f64], mean: ComplexMatrix, eps: f64) -> ComplexMatrix {
    let mut o = mean.scale_real(eps * eps);
    for r in 0..o.rows() {
        o[(r, r)] += C64::new(1.0 - eps * eps, 0.0);
    }
    sandwich_pairs(q, &o)
}

/// `E_i W_i ⊗ W̄_i` for `D x D` blocks, via one Gram product: with
/// `Y[(a,a'), i] = W_i[a][a']`, `(Y Y^dagger)[(a,a'),(b,b')]` is the sum of
/// `W_i[a][a'] conj(W_i[b][b'])`, which is entry `[(a,b),(a',b')]` of the target.
pub fn mean_kron_conj(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    mean_kron_conj_prefixes(blocks, &[blocks.len()])
        .pop()
        .expect("one prefix")
}

/// `mean_kron_conj(&blocks[..m])` for each `m` in the increasing list
/// `prefixes`, accumulating the Gram product chunk by chunk.
pub fn mean_kron_conj_prefixes(blocks: &[ComplexMatrix], prefixes: &[usize]) -> Vec<ComplexMatrix> {
    let d = blocks.first().map_or(0, |b| b.rows());
    let dd = d * d;
    let mut g = ComplexMatrix::zeros(dd, dd);
    let mut start = 0;
    let mut out = Vec::with_capacity(prefixes.len());
    for &end in prefixes {
        assert!(
            start <= end && end <= blocks.len(),
            "prefixes must increase within range"
        );
        if end > start {
            let y = ComplexMatrix::from_fn(dd, end - start, |r, i| blocks[start + i][(r / d, r % d)]);
            g.add_gram(&y);
        }
        start = end;
        let s = 1.0 / end.max(1) as f64;
        out.push(ComplexMatrix::from_fn(dd, dd, |r, c| {
            let (a, b) = (r / d, r % d);
            let (a2, b2) = (c / d, c % d);
            g[(a * d + a2, b * d + b2)] * s
        }));
    }
    out
}

/// `(Q⊗Q) X (Q⊗Q)` on the doubled window.
pub fn sandwich_pairs(q: &[f64], x: &ComplexMatrix) -> ComplexMatrix {
    let d = q.len();
    let w: Vec<f64> = (0..d * d).map(|r| q[r / d] * q[r % d]).collect();
    ComplexMatrix::from_fn(x.rows(), x.cols(), |r, c| x[(r, c)] * (w[r] * w[c])).hermitian_part()
}

/// `⟨ψ|O_succ|ψ⟩` evaluated without forming `O_succ`:
/// `(1-ε²)||Φ||² + ε² E_i Tr(Φ^dagger W_i Φ W_i^dagger)` with `Φ = diag(q) Ψ diag(q)`.
pub fn o_succ_quadratic_form(q: &[f64], blocks: &[ComplexMatrix], eps: f64, psi_w: &ComplexMatrix) -> f64 {
    let phi = sandwich_q(q, psi_w);
    let base = phi.frobenius_norm().powi(2);
    let m = blocks.len() as f64;
    let mid: f64 = blocks
        .iter()
        .map(|w| {
            let t = &(w * &phi) * &w.adjoint();
            phi.as_slice()
                .iter()
                .zip(t.as_slice())
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
        })
        .sum::<f64>()
        / m;
    (1.0 - eps * eps) * base + eps * eps * mid
}

/// Success operator with the data needed to interpret it.
#[derive(Clone, Debug)]
pub struct SuccessOperator {
    pub o_succ: ComplexMatrix,
    /// Window eigen-indices; the doubled index is `a·D + b`.
    pub members: Vec<usize>,
    /// `q` restricted to the window.
    pub q: Vec<f64>,
    pub blocks: Vec<ComplexMatrix>,
    pub eps: f64,
}

pub fn build_o_succ(h: &Hamiltonian, observables: &ObservableSet, cfg: &ProtocolConfig) -> Result<SuccessOperator> {
    let members = window_projector(h, &cfg.qpe.window).members;
    if members.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let q_all = q_weights(h, &cfg.qpe)?.q;
    let q: Vec<f64> = members.iter().map(|&k| q_all[k]).collect();
    let blocks = match observables.mode {
        ObservableMode::Direct => observables.ops.clone(),
        ObservableMode::Circuit => {
            let vs = window_isometry(h, &members);
            observables
                .ops
                .iter()
                .map(|a| a.conjugate_by(&vs).expect("square operators"))
                .collect()
        }
    };
    let o_succ = o_succ_from_blocks(&q, &blocks, cfg.eps)?;
    Ok(SuccessOperator {
        o_succ,
        members,
        q,
        blocks,
        eps: cfg.eps,
    })
}

/// `M = (1 - ε² + ε² E_i (max_α μ^i_α)²) Π⊗Π + ε² E_G B⊗B̄` on the doubled window.
pub fn build_m(params: &EthParams, eps: f64) -> ComplexMatrix {
    let d = params.d;
    let dd = d * d;
    let e2 = eps * eps;
    let mut out = ComplexMatrix::zeros(dd, dd);
    let c = 1.0 - e2 + e2 * params.mean_mu_max_sq();
    for r in 0..dd {
        out[(r, r)] = C64::new(c, 0.0);
    }
    for a in 0..d {
        for b in 0..d {
            out[(a * d + a, b * d + b)] += C64::new(e2 * params.f_at(a, b).powi(2) / d as f64, 0.0);
        }
    }
    out
}

/// Top of the spectrum of a Hermitian operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    Unique {
        state: Vec<C64>,
        lambda_top: f64,
        lambda_second: f64,
        gap: f64,
    },
    Degenerate {
        lambda_top: f64,
        gap: f64,
    },
}

impl Witness {
    pub fn lambda_top(&self) -> f64 {
        match self {
            Self::Unique { lambda_top, .. } | Self::Degenerate { lambda_top, .. } => *lambda_top,
        }
    }

    pub fn gap(&self) -> f64 {
        match self {
            Self::Unique { gap, .. } | Self::Degenerate { gap, .. } => *gap,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::Degenerate { .. })
    }
}

pub fn unique_witness(op: &ComplexMatrix) -> Result<Witness> {
    let e = eigh(op)?;
    let n = e.dim();
    let lambda_top = e.values[n - 1];
    let lambda_second = if n >= 2 { e.values[n - 2] } else { f64::NEG_INFINITY };
    let gap = lambda_top - lambda_second;
    if gap < DEGENERACY_TOL {
        return Ok(Witness::Degenerate { lambda_top, gap });
    }
    // Fix the global phase so the largest-magnitude entry is real positive.
    let mut state = e.vector(n - 1);
    let pivot = state
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(ZERO);
    if pivot.norm() > 0.0 {
        let ph = pivot.conj() / pivot.norm();
        state.iter_mut().for_each(|z| *z *= ph);
    }
    Ok(Witness::Unique {
        state,
        lambda_top,
        lambda_second,
        gap,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoCaseReport {
    pub norm: f64,
    pub bound: f64,
    /// Smallest `L · dist(λ, grid interval)` over all eigenvalues.
    pub min_distance_in_grid_units: f64,
}

/// `||O_succ||` when every eigenvalue sits at circular distance at least `c/L`
/// from the grid interval `[m_lo/L, m_hi/L]`. With no window to restrict to,
/// the operator is built on the full doubled space.
pub fn no_case_norm(
    h: &Hamiltonian,
    observables: &ObservableSet,
    cfg: &ProtocolConfig,
    c: f64,
) -> Result<NoCaseReport> {
    let n = h.dim();
    if n * n > NO_CASE_DOUBLED_CAP {
        return Err(Error::CapExceeded {
            what: "doubled full space",
            size: n * n,
            cap: NO_CASE_DOUBLED_CAP,
        });
    }
    let lf = cfg.qpe.l as f64;
    let min_dist = h
        .eigenvalues()
        .iter()
        .map(|&x| cfg.qpe.circular_distance_to_grid(x) * lf)
        .fold(f64::INFINITY, f64::min);
    if min_dist < c - 1e-9 {
        return Err(Error::Precondition(format!(
            "an eigenvalue is {min_dist:.3}/L from the grid interval, need at least {c}/L"
        )));
    }
    let q = q_weights(h, &cfg.qpe)?.q;
    let o = o_succ_from_blocks(&q, &observables_in_eigenbasis(h, observables), cfg.eps)?;
    Ok(NoCaseReport {
        norm: operator_norm(&o),
        bound: 1.0 / c,
        min_distance_in_grid_units: min_dist,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportParams {
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub m: usize,
    pub eps: f64,
    pub mode: ObservableMode,
    pub seed: u64,
    /// Order of operations used by the circuit route.
    pub step_order: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub p_circuit: Option<f64>,
    pub p_operator: f64,
    pub p_osucc: f64,
    pub lambda_top: f64,
    pub gap: f64,
    pub overlap_top: f64,
    pub params: ReportParams,
}

pub const STEP_ORDER: &str =
    "PiSP(S1P1), PiSP(S2P2), PiP(P1), PiP(P2), controlled exp on T, PiSP x2, PiP x2, project T";

/// Runs both routes (the circuit only when it fits the caps) and diagnoses
/// `O_succ` against the same input.
pub fn evaluate(
    input: &Statevector,
    h: &Hamiltonian,
    observables: &ObservableSet,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<AcceptanceReport> {
    let fits = h.dim() <= CIRCUIT_MAX_SYSTEM
        && cfg.qpe.l <= CIRCUIT_MAX_L
        && observables.len() <= CIRCUIT_MAX_M
        && h.dim() * cfg.qpe.l <= crate::qpe::QPE_DIM_CAP;
    let p_circuit = if fits {
        Some(run_algorithm1(input, h, observables, cfg)?.p_accept)
    } else {
        None
    };
    let p_operator = acceptance_operator_route(input, h, observables, cfg)?;
    let op = build_o_succ(h, observables, cfg)?;
    let psi_e = to_eigen_coefficients(input, h)?;
    let d = op.members.len();
    let psi_w = psi_e.submatrix(&op.members, &op.members);
    let p_osucc = o_succ_quadratic_form(&op.q, &op.blocks, cfg.eps, &psi_w);
    let w = unique_witness(&op.o_succ)?;
    let overlap_top = match &w {
        Witness::Unique { state, .. } => inner(state, psi_w.as_slice()).norm_sqr(),
        Witness::Degenerate { .. } => f64::NAN,
    };
    Ok(AcceptanceReport {
        p_circuit,
        p_operator,
        p_osucc,
        lambda_top: w.lambda_top(),
        gap: w.gap(),
        overlap_top,
        params: ReportParams {
            n: h.dim(),
            d,
            l: cfg.qpe.l,
            m: observables.len(),
            eps: cfg.eps,
            mode: observables.mode,
            seed,
            step_order: STEP_ORDER.to_string(),
        },
    })
}

/// `Σ_α x_α |v_α v_α>` on the doubled window (normalized).
pub fn pair_state(x: &[f64]) -> Vec<C64> {
    let d = x.len();
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = vec![ZERO; d * d];
    for (a, &v) in x.iter().enumerate() {
        out[a * d + a] = C64::new(v / nrm, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{build_observables, sample_b};
    use crate::hamiltonian::{Basis, EnergyWindow};
    use crate::linalg::haar::haar_state;
    use crate::rng::stream;

    fn on_grid_setup(seed: u64) -> (Hamiltonian, ProtocolConfig) {
        let l = 16;
        let ks = [2usize, 5, 7, 8, 9, 10, 12, 14];
        let values: Vec<f64> = ks.iter().map(|&k| k as f64 / l as f64).collect();
        let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed }).unwrap();
        let qpe = QpeConfig::new(l, EnergyWindow::simple(0.5, 0.5).unwrap()).unwrap();
        let cfg = ProtocolConfig::new(0.1, ObservableMode::Circuit, qpe).unwrap();
        (h, cfg)
    }

    fn circuit_obs(h: &Hamiltonian, cfg: &ProtocolConfig, m: usize, seed: u64) -> ObservableSet {
        let d = window_projector(h, &cfg.qpe.window).dim();
        let p = EthParams::uniform(d, m, 1.0).unwrap();
        build_observables(&p, h, &cfg.qpe.window, ObservableMode::Circuit, seed).unwrap()
    }

    #[test]
    fn eps_zero_pair_on_grid_accepts() {
        let (h, mut cfg) = on_grid_setup(1);
        cfg.eps = 0.0;
        let obs = circuit_obs(&h, &cfg, 2, 3);
        // Eigen-index 3 has λ = 8/16, an interior grid point.
        let mut psi_e = ComplexMatrix::zeros(8, 8);
        psi_e[(3, 3)] = C64::new(1.0, 0.0);
        let input = from_eigen_coefficients(&psi_e, &h).unwrap();
        let out = run_algorithm1(&input, &h, &obs, &cfg).unwrap();
        assert!((out.p_accept - 1.0).abs() < 1e-10);
    }

    #[test]
    fn routes_agree_and_post_selection_is_monotone() {
        let (h, cfg) = on_grid_setup(2);
        let obs = circuit_obs(&h, &cfg, 3, 4);
        let amps = haar_state(64, &mut stream(5, 0));
        let input = Statevector::new(&[(S1, 8), (S2, 8)], amps).unwrap();
        let c = run_algorithm1(&input, &h, &obs, &cfg).unwrap();
        let o = acceptance_operator_route(&input, &h, &obs, &cfg).unwrap();
        assert!((c.p_accept - o).abs() < 1e-10, "{} vs {}", c.p_accept, o);
        assert!(c.p_accept <= c.p_first_round + 1e-12);
    }

    #[test]
    fn eps_zero_operator_route_is_q_squared_norm() {
        let values: Vec<f64> = (0..6).map(|k| 0.3 + 0.07 * k as f64).collect();
        let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: 6 }).unwrap();
        let qpe = QpeConfig::new(16, EnergyWindow::simple(0.5, 0.5).unwrap()).unwrap();
        let cfg = ProtocolConfig::new(0.0, ObservableMode::Circuit, qpe).unwrap();
        let obs = circuit_obs(&h, &cfg, 2, 1);
        let input = Statevector::new(&[(S1, 6), (S2, 6)], haar_state(36, &mut stream(7, 0))).unwrap();
        let p = acceptance_operator_route(&input, &h, &obs, &cfg).unwrap();
        let q = q_weights(&h, &qpe).unwrap().q;
        let psi_e = to_eigen_coefficients(&input, &h).unwrap();
        let expect: f64 = (0..6)
            .flat_map(|a| (0..6).map(move |b| (a, b)))
            .map(|(a, b)| (q[a] * q[b]).powi(4) * psi_e[(a, b)].norm_sqr())
            .sum();
        assert!((p - expect).abs() < 1e-12);
    }

    #[test]
    fn o_succ_identity_observables_and_eps_zero() {
        let d = 3;
        let q = vec![0.9, 1.0, 0.4];
        let ident = vec![ComplexMatrix::identity(d); 2];
        let base = sandwich_pairs(&q, &ComplexMatrix::identity(d * d));
        for eps in [0.0, 0.3] {
            let o = o_succ_from_blocks(&q, &ident, eps).unwrap();
            assert!((&o - &base).max_abs() < 1e-14);
        }
    }

    #[test]
    fn o_succ_gram_matches_kron_sum() {
        let d = 4;
        let p = EthParams::uniform(d, 3, 0.8).unwrap();
        let blocks: Vec<ComplexMatrix> = (0..3).map(|i| sample_b(&p, &mut stream(9, i))).collect();
        let q = vec![1.0, 0.5, 0.25, 0.8];
        let eps = 0.2;
        let o = o_succ_from_blocks(&q, &blocks, eps).unwrap();
        let mut mid = ComplexMatrix::identity(d * d).scale_real(1.0 - eps * eps);
        for w in &blocks {
            mid = &mid + &w.kron(&w.conj()).scale_real(eps * eps / 3.0);
        }
        let expect = sandwich_pairs(&q, &mid);
        assert!((&o - &expect).max_abs() < 1e-13);
        // Matrix-free quadratic form agrees with the dense operator.
        let psi = haar_state(d * d, &mut stream(9, 9));
        let dense = inner(&psi, &o.matvec(&psi).unwrap()).re;
        let psi_m = ComplexMatrix::from_vec(d, d, psi).unwrap();
        let free = o_succ_quadratic_form(&q, &blocks, eps, &psi_m);
        assert!((dense - free).abs() < 1e-13);
    }

    #[test]
    fn m_examples() {
        let p = EthParams::uniform(4, 2, 0.6).unwrap();
        let m0 = build_m(&p, 0.0);
        assert_eq!(m0, ComplexMatrix::identity(16));
        let eps = 0.3;
        let w = unique_witness(&build_m(&p, eps)).unwrap();
        let (e2, f2) = (eps * eps, 0.36);
        assert!((w.lambda_top() - (1.0 - e2 + e2 * f2)).abs() < 1e-12);
        assert!((w.gap() - e2 * f2).abs() < 1e-12);
        if let Witness::Unique { state, .. } = &w {
            let target = pair_state(&[1.0; 4]);
            assert!((inner(&target, state).norm() - 1.0).abs() < 1e-12);
        }
        let zero = EthParams::new(0.0, vec![0.0; 16], vec![vec![0.0; 4]; 2]).unwrap();
        assert!(unique_witness(&build_m(&zero, eps)).unwrap().is_degenerate());
    }

    #[test]
    fn no_case_norm_below_inverse_distance() {
        let l = 64;
        let w = EnergyWindow::simple(0.5, 0.25).unwrap();
        let qpe = QpeConfig::new(l, w).unwrap();
        let values: Vec<f64> = (0..8).map(|k| 0.0125 * k as f64).collect();
        let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: 3 }).unwrap();
        let params = EthParams::uniform(1, 4, 1.0).unwrap();
        let obs = build_observables(&params, &h, &w, ObservableMode::Circuit, 5).unwrap();
        let cfg = ProtocolConfig::new(0.1, ObservableMode::Circuit, qpe).unwrap();
        let r = no_case_norm(&h, &obs, &cfg, 16.0).unwrap();
        assert!(r.norm <= r.bound, "{r:?}");
        assert!(r.min_distance_in_grid_units >= 16.0);
        assert!(matches!(
            no_case_norm(&h, &obs, &cfg, 40.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn caps_and_involution_checks() {
        let (h, cfg) = on_grid_setup(3);
        let obs = circuit_obs(&h, &cfg, 9, 1);
        let input = Statevector::new(&[(S1, 8), (S2, 8)], haar_state(64, &mut stream(1, 1))).unwrap();
        assert!(matches!(
            run_algorithm1(&input, &h, &obs, &cfg),
            Err(Error::CapExceeded { .. })
        ));
        let mut bad = circuit_obs(&h, &cfg, 2, 1);
        bad.ops[1] = bad.ops[1].scale_real(0.5);
        assert!(matches!(
            run_algorithm1(&input, &h, &bad, &cfg),
            Err(Error::NotInvolution { index: 1, .. })
        ));
    }
}
