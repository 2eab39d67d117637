//! Pointwise bounds on the QPE weights, leakage outside the window, and the
//! projector identity relating the circuit to the weights.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt_f, instance_seed, invalid, timed, CriterionResult, Output};
use crate::checks::{require, Violation};
use crate::error::Result;
use crate::hamiltonian::{Basis, EnergyWindow, Hamiltonian};
use crate::qpe::{q_weights, qmass_check, qpe_identity_residual, QpeConfig};
use crate::rng::stream;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub instances: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub l_values: Vec<usize>,
    pub e0: f64,
    /// Window widths are drawn uniformly from this range.
    pub delta_range: [f64; 2],
    pub identity_seeds: usize,
    pub identity_max_dim: usize,
    pub identity_l: usize,
    pub identity_delta: f64,
    pub identity_tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            instances: 50,
            min_dim: 8,
            max_dim: 128,
            l_values: vec![64, 256, 1024],
            e0: 0.5,
            delta_range: [0.2, 0.5],
            identity_seeds: 10,
            identity_max_dim: 8,
            identity_l: 16,
            identity_delta: 0.5,
            identity_tol: 1e-9,
        }
    }
}

impl Params {
    pub fn small() -> Self {
        Self {
            instances: 12,
            max_dim: 48,
            l_values: vec![64, 256],
            identity_seeds: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.identity_seeds == 0 {
            return Err(invalid("instance counts must be positive"));
        }
        if self.min_dim == 0 || self.min_dim > self.max_dim {
            return Err(invalid("need 1 <= min_dim <= max_dim"));
        }
        if self.l_values.is_empty() {
            return Err(invalid("l_values is empty"));
        }
        let [lo, hi] = self.delta_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(invalid("delta_range must satisfy 0 < lo <= hi <= 1"));
        }
        for &l in &self.l_values {
            QpeConfig::new(l, EnergyWindow::simple(self.e0, lo)?)?;
        }
        if self.identity_max_dim < 2 {
            return Err(invalid("identity_max_dim must be at least 2"));
        }
        QpeConfig::new(self.identity_l, EnergyWindow::simple(self.e0, self.identity_delta)?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance: usize,
    pub n: usize,
    pub l: usize,
    pub delta: f64,
    /// Smallest `q - (1 - 1/c)` over eigenvalues at interior depth `c >= 1`.
    pub identity_margin: f64,
    /// Smallest `1/c - q` over eigenvalues at circular distance `c/L`, `c >= 1`.
    pub zero_margin: f64,
    /// Eigenvalues for which `q^2 >= 1 - 1/c` fails (reported, not asserted).
    pub squared_form_misses: usize,
    pub qmass: f64,
    pub qmass_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityRow {
    pub seed_index: usize,
    pub n: usize,
    pub l: usize,
    pub residual: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    params: &'a Params,
    seed: u64,
    instances: &'a [InstanceRow],
    identity: &'a [IdentityRow],
}

fn instance(p: &Params, master: u64, k: usize) -> Result<(InstanceRow, Vec<Violation>)> {
    let mut rng = stream(instance_seed(master, 1, k as u64), 0);
    let n = rng.gen_range(p.min_dim..=p.max_dim);
    let l = p.l_values[k % p.l_values.len()];
    let delta = rng.gen_range(p.delta_range[0]..=p.delta_range[1]);
    let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: rng.gen() })?;
    let window = EnergyWindow::simple(p.e0, delta)?;
    let cfg = QpeConfig::new(l, window)?;
    let q = q_weights(&h, &cfg)?.q;

    let mut v = Vec::new();
    let mut identity_margin = f64::INFINITY;
    let mut zero_margin = f64::INFINITY;
    let mut squared_form_misses = 0;
    for (idx, (&x, &qa)) in h.eigenvalues().iter().zip(&q).enumerate() {
        let depth = cfg.interior_depth(x);
        if depth >= 1 {
            let target = 1.0 - 1.0 / depth as f64;
            identity_margin = identity_margin.min(qa - target);
            if qa * qa < target {
                squared_form_misses += 1;
            }
            require(
                &mut v,
                qa >= target - 1e-12,
                "q_properties.almost_identity",
                master,
                || format!("instance {k}, eigenvalue {idx}: q = {qa} < 1 - 1/{depth}"),
            );
        }
        let c = cfg.circular_distance_to_grid(x) * l as f64;
        if c >= 1.0 {
            zero_margin = zero_margin.min(1.0 / c - qa);
            require(
                &mut v,
                qa <= 1.0 / c + 1e-12,
                "q_properties.almost_zero",
                master,
                || format!("instance {k}, eigenvalue {idx}: q = {qa} > 1/{c}"),
            );
        }
    }
    let mass = qmass_check(&h, &window, &cfg)?;
    require(&mut v, mass.measured <= mass.bound, "qmass", master, || {
        format!("instance {k}: ||Q - Π_Δ Q|| = {} > {}", mass.measured, mass.bound)
    });
    Ok((
        InstanceRow {
            instance: k,
            n,
            l,
            delta,
            identity_margin,
            zero_margin,
            squared_form_misses,
            qmass: mass.measured,
            qmass_bound: mass.bound,
        },
        v,
    ))
}

fn identity_case(p: &Params, master: u64, k: usize) -> Result<(IdentityRow, Vec<Violation>)> {
    let mut rng = stream(instance_seed(master, 2, k as u64), 0);
    let n = rng.gen_range(2..=p.identity_max_dim);
    let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: rng.gen() })?;
    let cfg = QpeConfig::new(p.identity_l, EnergyWindow::simple(p.e0, p.identity_delta)?)?;
    let residual = qpe_identity_residual(&h, &cfg)?;
    let mut v = Vec::new();
    require(
        &mut v,
        residual <= p.identity_tol,
        "q_def.projector_identity",
        master,
        || format!("seed index {k}: residual {residual:.3e}"),
    );
    Ok((
        IdentityRow {
            seed_index: k,
            n,
            l: p.identity_l,
            residual,
        },
        v,
    ))
}

pub fn run(p: &Params, seed: u64, out: &Output) -> Result<Vec<CriterionResult>> {
    let (results, t1) = timed(|| {
        (0..p.instances)
            .into_par_iter()
            .map(|k| instance(p, seed, k))
            .collect::<Result<Vec<(InstanceRow, Vec<Violation>)>>>()
    });
    let results = results?;
    let (rows, v1): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let v1: Vec<Violation> = v1.into_iter().flatten().collect();

    let (results, t2) = timed(|| {
        (0..p.identity_seeds)
            .into_par_iter()
            .map(|k| identity_case(p, seed, k))
            .collect::<Result<Vec<(IdentityRow, Vec<Violation>)>>>()
    });
    let results = results?;
    let (id_rows, v2): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let v2: Vec<Violation> = v2.into_iter().flatten().collect();

    out.json(
        "qprops_report.json",
        &Report {
            params: p,
            seed,
            instances: &rows,
            identity: &id_rows,
        },
    )?;
    out.csv(
        "qprops.csv",
        "instance,n,l,delta,identity_margin,zero_margin,squared_form_misses,qmass,qmass_bound",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.instance,
                r.n,
                r.l,
                fmt_f(r.delta),
                fmt_f(r.identity_margin),
                fmt_f(r.zero_margin),
                r.squared_form_misses,
                fmt_f(r.qmass),
                fmt_f(r.qmass_bound)
            )
        }),
    )?;
    out.csv(
        "qpe_identity.csv",
        "seed_index,n,l,residual",
        id_rows
            .iter()
            .map(|r| format!("{},{},{},{}", r.seed_index, r.n, r.l, fmt_f(r.residual))),
    )?;

    let eig_count: usize = rows.iter().map(|r| r.n).sum();
    let misses: usize = rows.iter().map(|r| r.squared_form_misses).sum();
    let worst_mass = rows.iter().map(|r| r.qmass / r.qmass_bound).fold(0.0, f64::max);
    let worst_res = id_rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(vec![
        CriterionResult::new(
            1,
            "QPE weight bounds and leakage",
            format!(
                "{} instances, {eig_count} eigenvalues, {} violations, max qmass/bound {worst_mass:.3}, \
                 squared-form misses {misses}",
                rows.len(),
                v1.len()
            ),
            v1,
        )
        .timed(t1),
        CriterionResult::new(
            2,
            "QPE projector identity",
            format!("{} seeds, max residual {worst_res:.2e}", id_rows.len()),
            v2,
        )
        .timed(t2),
    ])
}
