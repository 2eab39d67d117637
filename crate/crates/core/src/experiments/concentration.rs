//! Concentration of the empirical `E_i B_i ⊗ B̄_i` and the distance between
//! the success operator and its Gaussian-averaged counterpart.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt_f, instance_seed, invalid, timed, CriterionResult, Output};
use crate::checks::{quartiles, require, Violation};
use crate::ensemble::{build_observables, EnsembleConfig, EthParams, FMode, MuMode, ObservableMode};
use crate::error::Result;
use crate::hamiltonian::{Basis, EnergyWindow, Hamiltonian};
use crate::linalg::operator_norm;
use crate::protocol::{build_m, mean_kron_conj_prefixes, o_succ_from_mean, sandwich_pairs};
use crate::qpe::{q_weights, QpeConfig};
use crate::rng::stream;
use crate::spectral::{concentration_experiment, ConcentrationCurve};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensorParams {
    pub ensemble: EnsembleConfig,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    /// Accepted range for `median(m) / median(4m)`.
    pub ratio_range: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveParams {
    pub ensemble: EnsembleConfig,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub seed_groups: usize,
    pub eps: f64,
    pub l: usize,
    /// Allowed relative spread of the per-group constant around the pooled fit.
    pub stability: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct Params {
    pub tensor: TensorParams,
    pub effective: EffectiveParams,
}

impl Default for TensorParams {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig {
                d: 16,
                m: 0,
                f: 0.5,
                f_mode: FMode::RandomInRange,
                mu_mode: MuMode::Zero,
                seed: 0,
            },
            m_grid: vec![16, 64, 256, 1024],
            trials: 50,
            ratio_range: [1.4, 2.8],
        }
    }
}

impl Default for EffectiveParams {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig {
                d: 32,
                m: 4096,
                f: 0.6,
                f_mode: FMode::RandomInRange,
                mu_mode: MuMode::Jitter { center: 0.0 },
                seed: 0,
            },
            m_grid: vec![64, 512, 4096],
            trials: 20,
            seed_groups: 3,
            eps: 0.1,
            l: 256,
            stability: 0.5,
        }
    }
}

impl Params {
    pub fn small() -> Self {
        let mut p = Self::default();
        p.tensor.ensemble.d = 8;
        p.tensor.m_grid = vec![16, 64, 256];
        p.tensor.trials = 20;
        p.effective.ensemble.d = 12;
        p.effective.ensemble.m = 1024;
        p.effective.m_grid = vec![16, 128, 1024];
        p.effective.seed_groups = 2;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tensor;
        let e = &self.effective;
        for f in [t.ensemble.f, e.ensemble.f] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(invalid("every f must lie in (0, 1]"));
            }
        }
        if t.trials < 20 || e.trials < 20 {
            return Err(invalid("at least 20 trials per grid point"));
        }
        for grid in [&t.m_grid, &e.m_grid] {
            if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("m grids must be positive and strictly increasing"));
            }
        }
        if t.m_grid.windows(2).any(|w| w[1] != 4 * w[0]) {
            return Err(invalid("tensor.m_grid must step by a factor of 4"));
        }
        let [lo, hi] = t.ratio_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(invalid("ratio_range must satisfy 0 < lo <= hi"));
        }
        if t.ensemble.d == 0 || t.ensemble.d > crate::ensemble::DIRECT_DIM_CAP {
            return Err(invalid("tensor D outside [1, 64]"));
        }
        if e.ensemble.d < 2 || e.ensemble.d > crate::ensemble::DIRECT_DIM_CAP {
            return Err(invalid("effective D outside [2, 64]"));
        }
        if e.ensemble.m < *e.m_grid.last().expect("checked nonempty") {
            return Err(invalid("effective.ensemble.m must cover the largest grid point"));
        }
        if e.seed_groups == 0 {
            return Err(invalid("seed_groups must be positive"));
        }
        if !(0.0..=0.5).contains(&e.eps) {
            return Err(invalid("eps must lie in [0, 0.5]"));
        }
        if !(e.stability > 0.0) {
            return Err(invalid("stability must be positive"));
        }
        effective_layout(e.ensemble.d, e.l)?;
        Ok(())
    }
}

fn tensor_suite(p: &TensorParams, seed: u64) -> Result<(ConcentrationCurve, Vec<Violation>)> {
    let ens = EnsembleConfig {
        seed: instance_seed(seed, 10, 0) ^ p.ensemble.seed,
        m: 0,
        ..p.ensemble.clone()
    };
    let params = EthParams::from_config(&ens)?;
    let curve = concentration_experiment(&params, &p.m_grid, p.trials, seed)?;
    let mut v = Vec::new();
    for w in curve.points.windows(2) {
        require(
            &mut v,
            w[1].median <= w[0].median,
            "tensorprodconcen.monotone",
            seed,
            || {
                format!(
                    "median at m = {} ({}) exceeds m = {} ({})",
                    w[1].m, w[1].median, w[0].m, w[0].median
                )
            },
        );
    }
    let [lo, hi] = p.ratio_range;
    for (m1, m2, r) in curve.ratios() {
        require(&mut v, (lo..=hi).contains(&r), "tensorprodconcen.ratio", seed, || {
            format!("median({m1}) / median({m2}) = {r:.4} outside [{lo}, {hi}]")
        });
    }
    Ok((curve, v))
}

/// On-grid spectrum with the `D` window eigenvalues inside the summation
/// range, so `Q` is the window projector.
fn effective_layout(d: usize, l: usize) -> Result<(QpeConfig, Vec<f64>)> {
    let cfg = QpeConfig::new(l, EnergyWindow::simple(0.5, 0.5)?)?;
    let start = (cfg.m_lo + cfg.m_hi - 2 * (d as i64 - 1)) / 2;
    if start < cfg.m_lo || start + 2 * (d as i64 - 1) > cfg.m_hi {
        return Err(invalid(format!("D = {d} grid points do not fit at L = {l}")));
    }
    let lf = l as f64;
    let mut values: Vec<f64> = (0..d as i64).map(|k| (start + 2 * k) as f64 / lf).collect();
    values.extend([0.03, 0.97]);
    Ok((cfg, values))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectivePoint {
    pub group: usize,
    pub m: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveSummary {
    pub floor: f64,
    /// Fitted constant from the pooled medians.
    pub c: f64,
    pub c_per_group: Vec<f64>,
    pub pooled: Vec<EffectivePoint>,
}

/// `||O_succ - (Q⊗Q)M(Q⊗Q)||` for every prefix length in `m_grid` of one draw.
fn effective_trial(p: &EffectiveParams, ens_seed: u64, trial_seed: u64) -> Result<Vec<f64>> {
    let ens = EnsembleConfig {
        seed: ens_seed,
        ..p.ensemble.clone()
    };
    let params = EthParams::from_config(&ens)?;
    let (qpe, values) = effective_layout(ens.d, p.l)?;
    let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: ens_seed })?;
    let obs = build_observables(&params, &h, &qpe.window, ObservableMode::Direct, trial_seed)?;
    let q_all = q_weights(&h, &qpe)?.q;
    let q: Vec<f64> = obs.window_members.iter().map(|&k| q_all[k]).collect();
    let means = mean_kron_conj_prefixes(&obs.ops, &p.m_grid);
    p.m_grid
        .iter()
        .zip(means)
        .map(|(&m, mean)| {
            let o = o_succ_from_mean(&q, mean, p.eps);
            let prefix = EthParams {
                m,
                mu: params.mu[..m].to_vec(),
                ..params.clone()
            };
            let qmq = sandwich_pairs(&q, &build_m(&prefix, p.eps));
            Ok(operator_norm(&(&o - &qmq)))
        })
        .collect()
}

fn effective_suite(p: &EffectiveParams, seed: u64) -> Result<(Vec<EffectivePoint>, EffectiveSummary, Vec<Violation>)> {
    let e2 = p.eps * p.eps;
    let floor = 2.0 * e2 * p.ensemble.f.powi(7);
    let scale = |m: usize| e2 * (m as f64).powf(-1.0 / 3.0);
    let mut points = Vec::new();
    let mut all: Vec<Vec<f64>> = vec![Vec::new(); p.m_grid.len()];
    let mut v = Vec::new();
    let mut c_per_group = Vec::new();
    for g in 0..p.seed_groups {
        let ens_seed = instance_seed(seed, 11, g as u64) ^ p.ensemble.seed;
        let mut rng = stream(ens_seed, 2);
        let trial_seeds: Vec<u64> = (0..p.trials).map(|_| rng.gen()).collect();
        let devs: Vec<Vec<f64>> = trial_seeds
            .par_iter()
            .map(|&s| effective_trial(p, ens_seed, s))
            .collect::<Result<_>>()?;
        let mut medians = Vec::new();
        for (k, &m) in p.m_grid.iter().enumerate() {
            let col: Vec<f64> = devs.iter().map(|d| d[k]).collect();
            all[k].extend(&col);
            let (q25, median, q75) = quartiles(&col);
            medians.push(median);
            points.push(EffectivePoint {
                group: g,
                m,
                median,
                q25,
                q75,
            });
        }
        for (k, w) in medians.windows(2).enumerate() {
            require(&mut v, w[1] < w[0], "effectiveop.decreasing", seed, || {
                format!(
                    "group {g}: median at m = {} ({}) not below m = {} ({})",
                    p.m_grid[k + 1],
                    w[1],
                    p.m_grid[k],
                    w[0]
                )
            });
        }
        c_per_group.push(
            p.m_grid
                .iter()
                .zip(&medians)
                .map(|(&m, &d)| (d - floor).max(0.0) / scale(m))
                .fold(0.0, f64::max),
        );
    }

    let pooled: Vec<EffectivePoint> = p
        .m_grid
        .iter()
        .zip(&all)
        .map(|(&m, col)| {
            let (q25, median, q75) = quartiles(col);
            EffectivePoint {
                group: usize::MAX,
                m,
                median,
                q25,
                q75,
            }
        })
        .collect();
    let c = pooled
        .iter()
        .map(|pt| (pt.median - floor).max(0.0) / scale(pt.m))
        .fold(0.0, f64::max);
    for (g, &cg) in c_per_group.iter().enumerate() {
        let ok = (cg - c).abs() <= p.stability * c;
        require(&mut v, ok, "effectiveop.constant_stable", seed, || {
            format!("group {g}: fitted constant {cg:.4} vs pooled {c:.4}")
        });
    }
    for pt in &pooled {
        let bound = floor + c * scale(pt.m);
        require(
            &mut v,
            pt.median <= bound * (1.0 + 1e-12),
            "effectiveop.bound",
            seed,
            || format!("m = {}: pooled median {} > {bound}", pt.m, pt.median),
        );
    }
    Ok((
        points,
        EffectiveSummary {
            floor,
            c,
            c_per_group,
            pooled,
        },
        v,
    ))
}

#[derive(Serialize)]
struct Report<'a> {
    params: &'a Params,
    seed: u64,
    tensor: &'a ConcentrationCurve,
    effective: &'a EffectiveSummary,
}

pub fn run(p: &Params, seed: u64, out: &Output) -> Result<Vec<CriterionResult>> {
    let (r10, t10) = timed(|| tensor_suite(&p.tensor, seed));
    let (curve, v10) = r10?;
    let (r5, t5) = timed(|| effective_suite(&p.effective, seed));
    let (points, summary, v5) = r5?;

    out.csv(
        "concentration.csv",
        "m,median,q25,q75",
        curve
            .points
            .iter()
            .map(|pt| format!("{},{},{},{}", pt.m, fmt_f(pt.median), fmt_f(pt.q25), fmt_f(pt.q75))),
    )?;
    out.csv(
        "effective_operator.csv",
        "group,m,median,q25,q75",
        points.iter().chain(&summary.pooled).map(|pt| {
            let g = if pt.group == usize::MAX {
                "pooled".to_string()
            } else {
                pt.group.to_string()
            };
            format!("{g},{},{},{},{}", pt.m, fmt_f(pt.median), fmt_f(pt.q25), fmt_f(pt.q75))
        }),
    )?;
    out.json(
        "concentration_report.json",
        &Report {
            params: p,
            seed,
            tensor: &curve,
            effective: &summary,
        },
    )?;

    let ratios: Vec<String> = curve.ratios().iter().map(|(_, _, r)| format!("{r:.3}")).collect();
    let cg: Vec<String> = summary.c_per_group.iter().map(|c| format!("{c:.3}")).collect();
    Ok(vec![
        CriterionResult::new(
            5,
            "success operator against its Gaussian average",
            format!(
                "c = {:.4} (groups {}), floor 2ε²f⁷ = {:.3e}, pooled medians {}",
                summary.c,
                cg.join(", "),
                summary.floor,
                summary
                    .pooled
                    .iter()
                    .map(|pt| format!("m={}: {:.3e}", pt.m, pt.median))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            v5,
        )
        .timed(t5),
        CriterionResult::new(
            10,
            "concentration of the empirical tensor average",
            format!("D = {}, median ratios m/4m: {}", p.tensor.ensemble.d, ratios.join(", ")),
            v10,
        )
        .timed(t10),
    ])
}
