//! Perron structure of `M_f`, the `Q⊗Q` overlap of the pair witness, and the
//! unique top eigenvector of the success operator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt_f, instance_seed, invalid, timed, CriterionResult, Output};
use crate::checks::{require, Violation};
use crate::ensemble::{build_observables, random_f_matrix, EnsembleConfig, EthParams, FMode, MuMode, ObservableMode};
use crate::error::{Error, Result};
use crate::hamiltonian::{Basis, EnergyWindow, Hamiltonian};
use crate::linalg::{inner, ComplexMatrix, C64};
use crate::protocol::{
    acceptance_operator_route, build_m, build_o_succ, embed_window_coefficients, from_eigen_coefficients,
    o_succ_quadratic_form, sandwich_pairs, unique_witness, ProtocolConfig, Witness,
};
use crate::qpe::QpeConfig;
use crate::rng::stream;
use crate::spectral::{perron_check, q_conjugation_overlap, PerronReport};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerronParams {
    pub instances: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub f: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapParams {
    pub instances: usize,
    pub l: usize,
    pub f: f64,
    #[serde(rename = "D")]
    pub d: usize,
    /// Fraction of window eigenvalues moved off their grid points.
    pub off_grid_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessParams {
    pub ensembles: usize,
    pub ensemble: EnsembleConfig,
    pub eps: f64,
    pub l: usize,
    pub acceptance_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct Params {
    pub perron: PerronParams,
    pub overlap: OverlapParams,
    pub witness: WitnessParams,
}

impl Default for PerronParams {
    fn default() -> Self {
        Self {
            instances: 100,
            d: 64,
            f: 0.5,
        }
    }
}

impl Default for OverlapParams {
    fn default() -> Self {
        Self {
            instances: 10,
            l: 1024,
            f: 0.6,
            d: 32,
            off_grid_fraction: 0.5,
        }
    }
}

impl Default for WitnessParams {
    fn default() -> Self {
        Self {
            ensembles: 20,
            ensemble: EnsembleConfig {
                d: 32,
                m: 64,
                f: 0.6,
                f_mode: FMode::RandomInRange,
                mu_mode: MuMode::Jitter { center: 0.0 },
                seed: 0,
            },
            eps: 0.1,
            l: 256,
            acceptance_tol: 1e-6,
        }
    }
}

impl Params {
    pub fn small() -> Self {
        let mut p = Self::default();
        p.perron.instances = 20;
        p.perron.d = 16;
        p.overlap.instances = 4;
        p.overlap.d = 16;
        p.witness.ensembles = 4;
        p.witness.ensemble.d = 12;
        p.witness.ensemble.m = 24;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let fs = [self.perron.f, self.overlap.f, self.witness.ensemble.f];
        if fs.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(invalid("every f must lie in (0, 1]"));
        }
        if self.perron.instances == 0 || self.overlap.instances == 0 || self.witness.ensembles == 0 {
            return Err(invalid("instance counts must be positive"));
        }
        if self.perron.d < 2 || self.overlap.d < 2 || self.witness.ensemble.d < 2 {
            return Err(invalid("D must be at least 2"));
        }
        if self.witness.ensemble.d > crate::ensemble::DIRECT_DIM_CAP {
            return Err(invalid("witness D exceeds the direct-mode cap"));
        }
        if self.witness.ensemble.m == 0 {
            return Err(invalid("witness m must be positive"));
        }
        if !(0.0..=1.0).contains(&self.overlap.off_grid_fraction) {
            return Err(invalid("off_grid_fraction must lie in [0, 1]"));
        }
        if !(0.0..=0.5).contains(&self.witness.eps) {
            return Err(invalid("eps must lie in [0, 0.5]"));
        }
        overlap_layout(&self.overlap)?;
        witness_layout(self.witness.ensemble.d, self.witness.l)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerronRow {
    pub instance: usize,
    pub lambda: f64,
    pub lambda_second: f64,
    pub ratio: f64,
    pub gap_over_f4_lambda: f64,
}

fn perron_suite(p: &PerronParams, seed: u64) -> Result<(Vec<PerronRow>, PerronReport, Vec<Violation>)> {
    let results: Vec<(PerronRow, Vec<Violation>)> = (0..p.instances)
        .into_par_iter()
        .map(|k| {
            let s = instance_seed(seed, 4, k as u64);
            let fm = random_f_matrix(p.d, p.f, &mut stream(s, 0));
            let params = EthParams::new(p.f, fm, vec![])?;
            let r = perron_check(&params, seed)?;
            let v = r
                .violations
                .into_iter()
                .map(|mut x| {
                    x.detail = format!("f-matrix {k}: {}", x.detail);
                    x
                })
                .collect();
            Ok((
                PerronRow {
                    instance: k,
                    lambda: r.lambda,
                    lambda_second: r.lambda_second,
                    ratio: r.ratio,
                    gap_over_f4_lambda: (r.lambda - r.lambda_second) / (p.f.powi(4) * r.lambda),
                },
                v,
            ))
        })
        .collect::<Result<_>>()?;
    let (rows, v): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut v: Vec<Violation> = v.into_iter().flatten().collect();

    let uniform = perron_check(&EthParams::uniform(p.d, 0, p.f)?, seed)?;
    let f2 = p.f * p.f;
    let gap = uniform.lambda - uniform.lambda_second;
    require(
        &mut v,
        (uniform.lambda - f2).abs() <= 1e-12,
        "eq_gap.rank_one_lambda",
        seed,
        || format!("uniform f: λ = {} != f² = {f2}", uniform.lambda),
    );
    require(
        &mut v,
        (gap - uniform.lambda).abs() <= 1e-12,
        "eq_gap.rank_one_gap",
        seed,
        || format!("uniform f: gap = {gap} != λ = {}", uniform.lambda),
    );
    v.extend(uniform.violations.iter().cloned());
    Ok((rows, uniform, v))
}

/// Window grid points for the overlap instances: `D` points spaced 4/L
/// apart, centered on `e0 = 1/2` and at least `√L` grid steps from either
/// end of the summation range.
fn overlap_layout(p: &OverlapParams) -> Result<(QpeConfig, Vec<i64>)> {
    let delta = 0.25;
    let cfg = QpeConfig::new(p.l, EnergyWindow::simple(0.5, delta)?)?;
    let c = (p.l as f64).sqrt().floor() as i64;
    let span = 4 * (p.d as i64 - 1);
    let start = (cfg.m_lo + cfg.m_hi - span) / 2;
    if start < cfg.m_lo + c + 1 || start + span > cfg.m_hi - c - 1 {
        return Err(invalid(format!(
            "D = {} window points do not fit {}-deep inside the grid at L = {}",
            p.d, c, p.l
        )));
    }
    Ok((cfg, (0..p.d as i64).map(|k| start + 4 * k).collect()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverlapRow {
    pub instance: usize,
    pub off_grid: usize,
    pub dense: f64,
    pub closed_form: f64,
    pub bound: f64,
}

fn overlap_suite(p: &OverlapParams, seed: u64) -> Result<(Vec<OverlapRow>, Vec<Violation>)> {
    let (cfg, points) = overlap_layout(p)?;
    let lf = p.l as f64;
    let mut rows = Vec::new();
    let mut v = Vec::new();
    for k in 0..=p.instances {
        // Instance 0 is fully on-grid; the rest move a fraction off-grid.
        let mut rng = stream(instance_seed(seed, 6, k as u64), 0);
        let moved = if k == 0 {
            0
        } else {
            (p.off_grid_fraction * p.d as f64).round() as usize
        };
        let mut values: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let off = if i < moved { rng.gen_range(0.05..0.95) } else { 0.0 };
                (m as f64 + off) / lf
            })
            .collect();
        values.extend([0.05, 0.1, 0.9, 0.95]);
        let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: rng.gen() })?;
        let params = EthParams::new(p.f, random_f_matrix(p.d, p.f, &mut rng), vec![])?;
        let r = q_conjugation_overlap(&h, &cfg.window, &params, &cfg)?;
        require(
            &mut v,
            (r.dense - r.closed_form).abs() <= 1e-10,
            "qdoesntmatter.closed_form",
            seed,
            || format!("instance {k}: dense {} vs Σ x²q² {}", r.dense, r.closed_form),
        );
        if k == 0 {
            require(
                &mut v,
                (r.dense - 1.0).abs() <= 1e-10,
                "qdoesntmatter.on_grid",
                seed,
                || format!("on-grid overlap {} != 1", r.dense),
            );
        }
        require(&mut v, r.dense >= r.bound, "qdoesntmatter.bound", seed, || {
            format!("instance {k}: overlap {} < {}", r.dense, r.bound)
        });
        rows.push(OverlapRow {
            instance: k,
            off_grid: moved,
            dense: r.dense,
            closed_form: r.closed_form,
            bound: r.bound,
        });
    }
    Ok((rows, v))
}

/// On-grid spectrum: `D` window points spaced 2/L around `e0 = 1/2`, all
/// inside the summation range, plus four eigenvalues far from the window.
fn witness_layout(d: usize, l: usize) -> Result<(QpeConfig, Vec<f64>)> {
    let cfg = QpeConfig::new(l, EnergyWindow::simple(0.5, 0.5)?)?;
    let span = 2 * (d as i64 - 1);
    let start = (cfg.m_lo + cfg.m_hi - span) / 2;
    if start < cfg.m_lo || start + span > cfg.m_hi {
        return Err(invalid(format!("D = {d} grid points do not fit at L = {l}")));
    }
    let lf = l as f64;
    let mut values: Vec<f64> = (0..d as i64).map(|k| (start + 2 * k) as f64 / lf).collect();
    values.extend([0.02, 0.04, 0.96, 0.98]);
    Ok((cfg, values))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessRow {
    pub ensemble: usize,
    pub lambda_top: f64,
    pub gap: f64,
    pub acceptance: f64,
    pub p_operator: f64,
    pub qmq_lambda_top: f64,
    pub qmq_gap: f64,
    pub m_gap: f64,
    pub m_gap_bound: f64,
    pub overlap_with_qmq: f64,
}

fn witness_instance(p: &WitnessParams, seed: u64, k: usize) -> Result<(WitnessRow, Vec<Violation>)> {
    let ens = EnsembleConfig {
        seed: instance_seed(seed, 7, k as u64) ^ p.ensemble.seed,
        ..p.ensemble.clone()
    };
    let params = EthParams::from_config(&ens)?;
    let (qpe, values) = witness_layout(ens.d, p.l)?;
    let mut rng = stream(ens.seed, 1);
    let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: rng.gen() })?;
    let obs = build_observables(&params, &h, &qpe.window, ObservableMode::Direct, rng.gen())?;
    let cfg = ProtocolConfig::new(p.eps, ObservableMode::Direct, qpe)?;
    let op = build_o_succ(&h, &obs, &cfg)?;
    let d = op.members.len();

    let mut v = Vec::new();
    let w = unique_witness(&op.o_succ)?;
    let (lambda_top, gap) = (w.lambda_top(), w.gap());
    let state = match &w {
        Witness::Unique { state, .. } => state.clone(),
        Witness::Degenerate { .. } => {
            v.push(Violation::new(
                "maintechnical.gap_positive",
                seed,
                format!("ensemble {k}: top eigenspace degenerate (gap {gap:.3e})"),
            ));
            vec![C64::new(0.0, 0.0); d * d]
        }
    };
    let psi_w = ComplexMatrix::from_vec(d, d, state.clone())?;
    let acceptance = o_succ_quadratic_form(&op.q, &op.blocks, p.eps, &psi_w);
    require(
        &mut v,
        lambda_top >= 1.0 - p.eps * p.eps - 1e-12,
        "maintechnical.lambda_top",
        seed,
        || format!("ensemble {k}: λ_top = {lambda_top} < 1 - ε²"),
    );
    if !w.is_degenerate() {
        require(
            &mut v,
            (acceptance - lambda_top).abs() <= p.acceptance_tol,
            "maintechnical.witness_acceptance",
            seed,
            || format!("ensemble {k}: acceptance {acceptance} vs λ_top {lambda_top}"),
        );
    }

    // Exact acceptance of the same state through the full expression.
    let input = from_eigen_coefficients(&embed_window_coefficients(&h, &op.members, &state), &h)?;
    let p_operator = acceptance_operator_route(&input, &h, &obs, &cfg)?;

    let m = build_m(&params, p.eps);
    let qmq = sandwich_pairs(&op.q, &m);
    let wq = unique_witness(&qmq)?;
    require(
        &mut v,
        !wq.is_degenerate(),
        "maintechnical.qmq_gap_positive",
        seed,
        || format!("ensemble {k}: (Q⊗Q)M(Q⊗Q) gap {:.3e}", wq.gap()),
    );
    let overlap_with_qmq = match &wq {
        Witness::Unique { state: s2, .. } => inner(s2, &state).norm_sqr(),
        Witness::Degenerate { .. } => f64::NAN,
    };
    let wm = unique_witness(&m)?;
    let lambda_f = perron_check(&params, seed)?.lambda;
    let m_gap_bound = p.eps * p.eps * params.f.powi(4) * lambda_f;
    require(&mut v, wm.gap() >= m_gap_bound - 1e-12, "eq_gap.m_gap", seed, || {
        format!("ensemble {k}: gap of M {} < ε²f⁴λ = {m_gap_bound}", wm.gap())
    });
    Ok((
        WitnessRow {
            ensemble: k,
            lambda_top,
            gap,
            acceptance,
            p_operator,
            qmq_lambda_top: wq.lambda_top(),
            qmq_gap: wq.gap(),
            m_gap: wm.gap(),
            m_gap_bound,
            overlap_with_qmq,
        },
        v,
    ))
}

/// With `f_matrix = 0` and constant `μ` both `M` and the success operator
/// must come back degenerate.
fn degenerate_case(p: &WitnessParams, seed: u64) -> Result<Vec<Violation>> {
    let d = p.ensemble.d;
    let params = EthParams::new(0.0, vec![0.0; d * d], vec![vec![0.0; d]; p.ensemble.m])?;
    let (qpe, values) = witness_layout(d, p.l)?;
    let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed })?;
    let obs = build_observables(&params, &h, &qpe.window, ObservableMode::Direct, seed)?;
    let cfg = ProtocolConfig::new(p.eps, ObservableMode::Direct, qpe)?;
    let op = build_o_succ(&h, &obs, &cfg)?;
    let mut v = Vec::new();
    let flagged_m = unique_witness(&build_m(&params, p.eps))?.is_degenerate();
    let flagged_o = unique_witness(&op.o_succ)?.is_degenerate();
    require(
        &mut v,
        flagged_m && flagged_o,
        "maintechnical.degeneracy_flag",
        seed,
        || format!("f_matrix = 0: M degenerate {flagged_m}, O_succ degenerate {flagged_o}"),
    );
    Ok(v)
}

#[derive(Serialize)]
struct Report<'a> {
    params: &'a Params,
    seed: u64,
    perron: &'a [PerronRow],
    overlap: &'a [OverlapRow],
    witness: &'a [WitnessRow],
}

pub fn run(p: &Params, seed: u64, out: &Output) -> Result<Vec<CriterionResult>> {
    let (r4, t4) = timed(|| perron_suite(&p.perron, seed));
    let (perron_rows, uniform, v4) = r4?;
    out.json("perron_report.json", &uniform)?;
    out.csv(
        "perron.csv",
        "instance,lambda,lambda_second,ratio,gap_over_f4_lambda",
        perron_rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.instance,
                fmt_f(r.lambda),
                fmt_f(r.lambda_second),
                fmt_f(r.ratio),
                fmt_f(r.gap_over_f4_lambda)
            )
        }),
    )?;

    let (r6, t6) = timed(|| overlap_suite(&p.overlap, seed));
    let (overlap_rows, v6) = match r6 {
        Ok(x) => x,
        Err(Error::Precondition(msg)) => (vec![], vec![Violation::new("qdoesntmatter.precondition", seed, msg)]),
        Err(e) => return Err(e),
    };
    out.csv(
        "qdoesntmatter.csv",
        "instance,off_grid,dense,closed_form,bound",
        overlap_rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.instance,
                r.off_grid,
                fmt_f(r.dense),
                fmt_f(r.closed_form),
                fmt_f(r.bound)
            )
        }),
    )?;

    let (r7, t7) = timed(|| -> Result<_> {
        let results: Vec<(WitnessRow, Vec<Violation>)> = (0..p.witness.ensembles)
            .into_par_iter()
            .map(|k| witness_instance(&p.witness, seed, k))
            .collect::<Result<_>>()?;
        let (rows, v): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let mut v: Vec<Violation> = v.into_iter().flatten().collect();
        v.extend(degenerate_case(&p.witness, seed)?);
        Ok((rows, v))
    });
    let (witness_rows, v7) = r7?;
    out.csv(
        "witness.csv",
        "ensemble,lambda_top,gap,acceptance,p_operator,qmq_lambda_top,qmq_gap,m_gap,m_gap_bound,overlap_with_qmq",
        witness_rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.ensemble,
                fmt_f(r.lambda_top),
                fmt_f(r.gap),
                fmt_f(r.acceptance),
                fmt_f(r.p_operator),
                fmt_f(r.qmq_lambda_top),
                fmt_f(r.qmq_gap),
                fmt_f(r.m_gap),
                fmt_f(r.m_gap_bound),
                fmt_f(r.overlap_with_qmq)
            )
        }),
    )?;
    out.json(
        "gap_report.json",
        &Report {
            params: p,
            seed,
            perron: &perron_rows,
            overlap: &overlap_rows,
            witness: &witness_rows,
        },
    )?;

    let max_ratio = perron_rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min_overlap = overlap_rows.iter().map(|r| r.dense).fold(f64::INFINITY, f64::min);
    let min_gap = witness_rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let max_acc_err = witness_rows
        .iter()
        .map(|r| (r.acceptance - r.lambda_top).abs())
        .fold(0.0, f64::max);
    Ok(vec![
        CriterionResult::new(
            4,
            "Perron structure of M_f",
            format!(
                "{} f-matrices at D = {}, max x_max/x_min {max_ratio:.4} (limit {:.1}), rank-one λ = {:.6}",
                perron_rows.len(),
                p.perron.d,
                1.0 / (p.perron.f * p.perron.f),
                uniform.lambda
            ),
            v4,
        )
        .timed(t4),
        CriterionResult::new(
            6,
            "Q⊗Q overlap of the pair witness",
            format!(
                "{} instances at L = {}, min overlap {min_overlap:.6} vs bound {:.6}",
                overlap_rows.len(),
                p.overlap.l,
                overlap_rows.first().map_or(f64::NAN, |r| r.bound)
            ),
            v6,
        )
        .timed(t6),
        CriterionResult::new(
            7,
            "unique top eigenvector of the success operator",
            format!(
                "{} ensembles at D = {}, min gap {min_gap:.3e}, max |acceptance - λ_top| {max_acc_err:.2e}",
                witness_rows.len(),
                p.witness.ensemble.d
            ),
            v7,
        )
        .timed(t7),
    ])
}
