//! Reflection oracles: the one-query verifier, the witness overlap bound,
//! dimension counting and the direct-sum composition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt_f, instance_seed, invalid, CriterionResult, Output};
use crate::checks::{require, Violation};
use crate::error::Result;
use crate::linalg::haar::haar_state;
use crate::oracle::{
    closed_form_acceptance, composition_residual, overlap_experiment, qxc_dimension_count, simple_verifier,
    OverlapExperiment, SubspaceOracle, ORACLE_DIM_CAP,
};
use crate::rng::stream;
use std::time::Instant;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "dimS")]
    pub dim_s: usize,
    pub verifier_seeds: usize,
    pub instances: usize,
    pub eps_values: Vec<f64>,
    pub qxc_yes_dim: usize,
    pub qxc_no_dim: usize,
    pub qxc_a: f64,
    pub qxc_b: f64,
    pub composition_seeds: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 32,
            dim_s: 4,
            verifier_seeds: 20,
            instances: 500,
            eps_values: vec![0.01, 0.25],
            qxc_yes_dim: 2,
            qxc_no_dim: 4,
            qxc_a: 2.0 / 3.0,
            qxc_b: 1.0 / 3.0,
            composition_seeds: 10,
        }
    }
}

impl Params {
    pub fn small() -> Self {
        Self {
            n: 16,
            dim_s: 3,
            verifier_seeds: 6,
            instances: 60,
            composition_seeds: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n > ORACLE_DIM_CAP {
            return Err(invalid(format!("N must lie in [2, {ORACLE_DIM_CAP}]")));
        }
        if self.dim_s == 0 || self.dim_s >= self.n {
            return Err(invalid("dimS must lie in [1, N)"));
        }
        if self.qxc_yes_dim > self.n || self.qxc_no_dim > self.n {
            return Err(invalid("QXC subspace dimensions exceed N"));
        }
        if self.qxc_a <= self.qxc_b || self.qxc_b <= 0.0 || self.qxc_a > 1.0 {
            return Err(invalid("QXC thresholds need 0 < b < a <= 1"));
        }
        if self.eps_values.is_empty() || self.eps_values.iter().any(|e| !(0.0..0.5).contains(e)) {
            return Err(invalid("eps_values must be nonempty and lie in [0, 1/2)"));
        }
        if self.verifier_seeds == 0 || self.instances == 0 || self.composition_seeds == 0 {
            return Err(invalid("seed and instance counts must be positive"));
        }
        if 2 * self.dim_s > self.n {
            return Err(invalid("composition needs 2 dimS <= N"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub yes_min: f64,
    pub identity_max: f64,
    pub closed_form_max_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub eps: f64,
    pub delta: f64,
    pub checked: usize,
    pub rejected: usize,
    pub min_overlap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Report {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "dimS")]
    dim_s: usize,
    acceptance: AcceptanceSummary,
    delta: Vec<DeltaSummary>,
    qxc: [(usize, usize); 2],
    composition_max_residual: f64,
    violations: Vec<Violation>,
}

fn verifier_suite(p: &Params, seed: u64) -> Result<(AcceptanceSummary, Vec<Violation>)> {
    let rows: Vec<(f64, f64, f64)> = (0..p.verifier_seeds)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(instance_seed(seed, 12, k as u64), 0);
            let o = SubspaceOracle::random(p.n, p.dim_s, &mut rng)?;
            let in_s = o.basis().matvec(&haar_state(p.dim_s, &mut rng))?;
            let yes = simple_verifier(&o, &in_s)?;
            let psi = haar_state(p.n, &mut rng);
            let none = simple_verifier(&SubspaceOracle::identity(p.n)?, &psi)?;
            let err = (simple_verifier(&o, &psi)? - closed_form_acceptance(&o, &psi)).abs();
            Ok((yes, none, err))
        })
        .collect::<Result<_>>()?;
    let summary = AcceptanceSummary {
        yes_min: rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        identity_max: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        closed_form_max_error: rows.iter().map(|r| r.2).fold(0.0, f64::max),
    };
    let mut v = Vec::new();
    require(
        &mut v,
        (summary.yes_min - 1.0).abs() <= 1e-10,
        "simple_verifier.yes_case",
        seed,
        || format!("witness in S accepted with {}", summary.yes_min),
    );
    require(
        &mut v,
        summary.identity_max <= 1e-12,
        "simple_verifier.identity_oracle",
        seed,
        || format!("identity oracle accepted with {}", summary.identity_max),
    );
    require(
        &mut v,
        summary.closed_form_max_error <= 1e-10,
        "simple_verifier.closed_form",
        seed,
        || format!("|p - ||Π_S ψ||²| = {:.3e}", summary.closed_form_max_error),
    );
    Ok((summary, v))
}

pub fn run(p: &Params, seed: u64, out: &Output) -> Result<Vec<CriterionResult>> {
    let start = Instant::now();
    let (acceptance, mut v) = verifier_suite(p, seed)?;

    let mut delta = Vec::new();
    for (i, &eps) in p.eps_values.iter().enumerate() {
        let r: OverlapExperiment =
            overlap_experiment(p.n, p.dim_s, eps, p.instances, instance_seed(seed, 13, i as u64))?;
        require(
            &mut v,
            r.checked == p.instances,
            "delta_lower_bound.instances",
            seed,
            || {
                format!(
                    "ε = {eps}: only {} of {} instances met the preconditions",
                    r.checked, p.instances
                )
            },
        );
        v.extend(r.violations.iter().map(|x| Violation { seed, ..x.clone() }));
        delta.push(DeltaSummary {
            eps,
            delta: r.delta,
            checked: r.checked,
            rejected: r.rejected,
            min_overlap: r.min_lhs,
        });
    }

    let mut rng = stream(instance_seed(seed, 14, 0), 0);
    let yes = SubspaceOracle::random(p.n, p.qxc_yes_dim, &mut rng)?;
    let no = SubspaceOracle::random(p.n, p.qxc_no_dim, &mut rng)?;
    let qxc = [
        qxc_dimension_count(&yes, p.qxc_a, p.qxc_b)?,
        qxc_dimension_count(&no, p.qxc_a, p.qxc_b)?,
    ];
    require(
        &mut v,
        qxc[0] == (p.qxc_yes_dim, p.qxc_yes_dim),
        "qxc.yes_count",
        seed,
        || format!("yes case counts {:?}, expected D_a = D_b = {}", qxc[0], p.qxc_yes_dim),
    );
    require(
        &mut v,
        qxc[1] == (p.qxc_no_dim, p.qxc_no_dim),
        "qxc.no_count",
        seed,
        || format!("no case counts {:?}, expected D_a = D_b = {}", qxc[1], p.qxc_no_dim),
    );

    let residuals: Vec<f64> = (0..p.composition_seeds)
        .into_par_iter()
        .map(|k| composition_residual(p.n, p.dim_s, p.dim_s, instance_seed(seed, 15, k as u64)))
        .collect::<Result<_>>()?;
    let composition_max_residual = residuals.iter().copied().fold(0.0, f64::max);
    require(
        &mut v,
        composition_max_residual <= 1e-10,
        "oracle.composition",
        seed,
        || format!("||O_S O_Δ - O_(S⊕Δ)|| = {composition_max_residual:.3e}"),
    );

    let elapsed = start.elapsed();
    let report = Report {
        n: p.n,
        dim_s: p.dim_s,
        acceptance: acceptance.clone(),
        delta: delta.clone(),
        qxc,
        composition_max_residual,
        violations: v.clone(),
    };
    out.json("oracle_report.json", &report)?;
    out.csv(
        "overlap_bound.csv",
        "eps,delta,checked,rejected,min_overlap",
        delta.iter().map(|d| {
            format!(
                "{},{},{},{},{}",
                d.eps,
                fmt_f(d.delta),
                d.checked,
                d.rejected,
                fmt_f(d.min_overlap)
            )
        }),
    )?;

    let dsum = delta
        .iter()
        .map(|d| {
            format!(
                "ε = {}: {} checked, min overlap {:.4} vs δ {:.4}",
                d.eps, d.checked, d.min_overlap, d.delta
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(vec![CriterionResult::new(
        11,
        "reflection-oracle verifiers",
        format!(
            "yes {:.12}, identity {:.1e}; {dsum}; QXC {:?}; composition {:.1e}",
            acceptance.yes_min, acceptance.identity_max, qxc, composition_max_residual
        ),
        v,
    )
    .timed(elapsed)])
}
