//! Circuit against closed form, the second-order expansion, and the no-case
//! norm bound.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fmt_f, instance_seed, invalid, timed, CriterionResult, Output};
use crate::checks::{require, Violation};
use crate::ensemble::{build_observables, EthParams, ObservableMode};
use crate::error::Result;
use crate::hamiltonian::{Basis, EnergyWindow, Hamiltonian};
use crate::linalg::haar::haar_state;
use crate::linalg::Statevector;
use crate::protocol::{evaluate, no_case_norm, run_algorithm1, AcceptanceReport, ProtocolConfig, S1, S2};
use crate::qpe::QpeConfig;
use crate::rng::stream;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteParams {
    pub runs: usize,
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub eps_values: Vec<f64>,
    pub route_tol: f64,
    /// Envelope constant `C` in `|p_operator - <ψ|O_succ|ψ>| <= C ε³`.
    pub taylor_constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoCaseParams {
    pub seeds: usize,
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub eps: f64,
    /// Distance from the grid interval in units of `1/L`.
    pub c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct Params {
    pub routes: RouteParams,
    pub no_case: NoCaseParams,
}

impl Default for RouteParams {
    fn default() -> Self {
        Self {
            runs: 20,
            n: 8,
            l: 16,
            m: 4,
            eps_values: vec![0.0, 0.05, 0.1],
            route_tol: 1e-8,
            taylor_constant: 20.0,
        }
    }
}

impl Default for NoCaseParams {
    fn default() -> Self {
        Self {
            seeds: 20,
            n: 8,
            l: 64,
            m: 4,
            eps: 0.1,
            c: 16.0,
        }
    }
}

impl Params {
    pub fn small() -> Self {
        let mut p = Self::default();
        p.routes.runs = 6;
        p.routes.n = 6;
        p.no_case.seeds = 6;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.routes;
        if r.runs == 0 || self.no_case.seeds == 0 {
            return Err(invalid("run counts must be positive"));
        }
        if r.eps_values.is_empty() || r.eps_values.iter().any(|e| !(0.0..=0.5).contains(e)) {
            return Err(invalid("eps_values must be nonempty and lie in [0, 0.5]"));
        }
        if !(0.0..=0.5).contains(&self.no_case.eps) {
            return Err(invalid("no_case.eps must lie in [0, 0.5]"));
        }
        if r.n < 2 || r.n > crate::protocol::CIRCUIT_MAX_SYSTEM {
            return Err(invalid("routes.n must lie in [2, 16]"));
        }
        if r.l > crate::protocol::CIRCUIT_MAX_L || r.m == 0 || r.m > crate::protocol::CIRCUIT_MAX_M {
            return Err(invalid("routes.l or routes.m outside the circuit caps"));
        }
        let nc = &self.no_case;
        if nc.n == 0 || nc.n * nc.n > crate::protocol::NO_CASE_DOUBLED_CAP || nc.m == 0 {
            return Err(invalid("no_case.n or no_case.m out of range"));
        }
        if nc.c < 1.0 {
            return Err(invalid("no_case.c must be at least 1"));
        }
        route_grid(r.l)?;
        no_case_band(nc)?;
        Ok(())
    }
}

/// Absolute slack for the expansion check, which is exact at `ε = 0`.
const ROUNDOFF: f64 = 1e-12;

fn route_grid(l: usize) -> Result<QpeConfig> {
    QpeConfig::new(l, EnergyWindow::simple(0.5, 0.5)?)
}

/// Even runs put every eigenvalue on a distinct grid point, odd runs draw
/// eigenvalues uniformly.
fn route_spectrum<R: Rng>(n: usize, l: usize, on_grid: bool, rng: &mut R) -> Vec<f64> {
    if on_grid {
        let mut pts: Vec<usize> = (0..l).collect();
        pts.shuffle(rng);
        pts[..n.min(l)].iter().map(|&k| k as f64 / l as f64).collect()
    } else {
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RouteRow {
    pub run: usize,
    pub on_grid: bool,
    pub eps: f64,
    pub report: AcceptanceReport,
    pub route_diff: f64,
    pub taylor_residual: f64,
    pub p_first_round: f64,
}

fn route_run(p: &RouteParams, seed: u64, k: usize) -> Result<(RouteRow, Vec<Violation>)> {
    let qpe = route_grid(p.l)?;
    let eps = p.eps_values[k % p.eps_values.len()];
    let on_grid = k.is_multiple_of(2);
    let mut rng = stream(instance_seed(seed, 3, k as u64), 0);
    let n = p.n.min(p.l);
    let mut values = route_spectrum(n, p.l, on_grid, &mut rng);
    // Keep the window nonempty.
    if !values.iter().any(|&x| qpe.window.contains(x)) {
        values[0] = 0.5;
    }
    let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: rng.gen() })?;
    let params = EthParams::uniform(1, p.m, 1.0)?;
    let obs = build_observables(&params, &h, &qpe.window, ObservableMode::Circuit, rng.gen())?;
    let cfg = ProtocolConfig::new(eps, ObservableMode::Circuit, qpe)?;
    let input = Statevector::new(&[(S1, n), (S2, n)], haar_state(n * n, &mut rng))?;
    let report = evaluate(&input, &h, &obs, &cfg, seed)?;
    let circuit = run_algorithm1(&input, &h, &obs, &cfg)?;
    let p_circuit = report.p_circuit.unwrap_or(circuit.p_accept);
    let route_diff = (p_circuit - report.p_operator).abs();
    let taylor_residual = (report.p_operator - report.p_osucc).abs();

    let mut v = Vec::new();
    require(&mut v, route_diff <= p.route_tol, "protocol.two_route", seed, || {
        format!("run {k}: |p_circuit - p_operator| = {route_diff:.3e}")
    });
    // Off-grid spectra leak weight just outside the window, which the
    // window-restricted O_succ drops, so the expansion is checked on-grid.
    if on_grid {
        let envelope = p.taylor_constant * eps.powi(3) + ROUNDOFF;
        require(
            &mut v,
            taylor_residual <= envelope,
            "protocol.taylor_residual",
            seed,
            || format!("run {k} (ε = {eps}): residual {taylor_residual:.3e} > {envelope:.3e}"),
        );
    }
    require(
        &mut v,
        p_circuit <= circuit.p_first_round + 1e-12 && (-1e-12..=1.0 + 1e-9).contains(&p_circuit),
        "protocol.post_selection",
        seed,
        || format!("run {k}: p = {p_circuit}, first round {}", circuit.p_first_round),
    );
    Ok((
        RouteRow {
            run: k,
            on_grid,
            eps,
            report,
            route_diff,
            taylor_residual,
            p_first_round: circuit.p_first_round,
        },
        v,
    ))
}

/// Allowed band for no-case eigenvalues: circular distance at least `c/L`
/// from the grid interval, returned as `(start, width)` on the unit circle.
fn no_case_band(p: &NoCaseParams) -> Result<(QpeConfig, f64, f64)> {
    let qpe = QpeConfig::new(p.l, EnergyWindow::simple(0.5, 0.25)?)?;
    let lf = p.l as f64;
    let start = qpe.omega_hi() + p.c / lf;
    let width = 1.0 - (qpe.omega_hi() - qpe.omega_lo()) - 2.0 * p.c / lf;
    if width <= 0.0 {
        return Err(invalid(format!(
            "no eigenvalue can sit {}/L from the grid at L = {}",
            p.c, p.l
        )));
    }
    Ok((qpe, start, width))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoCaseRow {
    pub seed_index: usize,
    pub norm: f64,
    pub bound: f64,
    pub min_distance_in_grid_units: f64,
}

fn no_case_run(p: &NoCaseParams, seed: u64, k: usize) -> Result<(NoCaseRow, Vec<Violation>)> {
    let (qpe, start, width) = no_case_band(p)?;
    let mut rng = stream(instance_seed(seed, 8, k as u64), 0);
    // The first eigenvalue sits exactly at distance c/L.
    let values: Vec<f64> = (0..p.n)
        .map(|i| {
            let t = if i == 0 { 0.0 } else { rng.gen::<f64>() * width };
            (start + t).rem_euclid(1.0)
        })
        .collect();
    let h = Hamiltonian::from_spectrum(&values, Basis::Random { seed: rng.gen() })?;
    let params = EthParams::uniform(1, p.m, 1.0)?;
    let obs = build_observables(&params, &h, &qpe.window, ObservableMode::Circuit, rng.gen())?;
    let cfg = ProtocolConfig::new(p.eps, ObservableMode::Circuit, qpe)?;
    let r = no_case_norm(&h, &obs, &cfg, p.c)?;
    let mut v = Vec::new();
    require(&mut v, r.norm <= r.bound, "no_low_energy.norm_bound", seed, || {
        format!("seed index {k}: ||O_succ|| = {} > {}", r.norm, r.bound)
    });
    Ok((
        NoCaseRow {
            seed_index: k,
            norm: r.norm,
            bound: r.bound,
            min_distance_in_grid_units: r.min_distance_in_grid_units,
        },
        v,
    ))
}

#[derive(Serialize)]
struct Report<'a> {
    params: &'a Params,
    seed: u64,
    runs: &'a [RouteRow],
    no_case: &'a [NoCaseRow],
}

pub fn run(p: &Params, seed: u64, out: &Output) -> Result<Vec<CriterionResult>> {
    let (results, t3) = timed(|| {
        (0..p.routes.runs)
            .into_par_iter()
            .map(|k| route_run(&p.routes, seed, k))
            .collect::<Result<Vec<(RouteRow, Vec<Violation>)>>>()
    });
    let results = results?;
    let (rows, v3): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let v3: Vec<Violation> = v3.into_iter().flatten().collect();

    let (results, t8) = timed(|| {
        (0..p.no_case.seeds)
            .into_par_iter()
            .map(|k| no_case_run(&p.no_case, seed, k))
            .collect::<Result<Vec<(NoCaseRow, Vec<Violation>)>>>()
    });
    let results = results?;
    let (nc_rows, v8): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let v8: Vec<Violation> = v8.into_iter().flatten().collect();

    out.json(
        "protocol_report.json",
        &Report {
            params: p,
            seed,
            runs: &rows,
            no_case: &nc_rows,
        },
    )?;
    out.csv(
        "protocol.csv",
        "run,on_grid,eps,p_circuit,p_operator,p_osucc,route_diff,taylor_residual,lambda_top,gap,overlap_top",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.run,
                r.on_grid,
                r.eps,
                r.report.p_circuit.map_or_else(String::new, fmt_f),
                fmt_f(r.report.p_operator),
                fmt_f(r.report.p_osucc),
                fmt_f(r.route_diff),
                fmt_f(r.taylor_residual),
                fmt_f(r.report.lambda_top),
                fmt_f(r.report.gap),
                fmt_f(r.report.overlap_top)
            )
        }),
    )?;
    out.csv(
        "no_case.csv",
        "seed_index,norm,bound,min_distance_in_grid_units",
        nc_rows.iter().map(|r| {
            format!(
                "{},{},{},{}",
                r.seed_index,
                fmt_f(r.norm),
                fmt_f(r.bound),
                fmt_f(r.min_distance_in_grid_units)
            )
        }),
    )?;

    let max_diff = rows.iter().map(|r| r.route_diff).fold(0.0, f64::max);
    let worst_taylor = rows
        .iter()
        .filter(|r| r.on_grid && r.eps > 0.0)
        .map(|r| r.taylor_residual / r.eps.powi(3))
        .fold(0.0, f64::max);
    let max_norm = nc_rows.iter().map(|r| r.norm).fold(0.0, f64::max);
    Ok(vec![
        CriterionResult::new(
            3,
            "circuit and closed-form acceptance agree",
            format!(
                "{} runs, max route difference {max_diff:.2e}, max residual/ε³ {worst_taylor:.3} (limit {})",
                rows.len(),
                p.routes.taylor_constant
            ),
            v3,
        )
        .timed(t3),
        CriterionResult::new(
            8,
            "no-case norm bound",
            format!(
                "{} spectra at distance >= {}/L, max ||O_succ|| {max_norm:.3e} (limit {:.4})",
                nc_rows.len(),
                p.no_case.c,
                1.0 / p.no_case.c
            ),
            v8,
        )
        .timed(t8),
    ])
}
