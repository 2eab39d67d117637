//! Operator norms of Hermitian matrices with independent complex Gaussian entries.

use serde::{Deserialize, Serialize};

use super::{fmt_f, invalid, timed, CriterionResult, Output};
use crate::checks::{require, Violation};
use crate::error::Result;
use crate::spectral::{gaussian_norm_experiment, GaussNormRow};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub d_values: Vec<usize>,
    pub samples: usize,
    pub variance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            d_values: vec![16, 64],
            samples: 200,
            variance: 1.0,
        }
    }
}

impl Params {
    pub fn small() -> Self {
        Self {
            samples: 40,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_values.is_empty() || self.d_values.iter().any(|&d| d == 0 || d > 512) {
            return Err(invalid("d_values must be nonempty with entries in [1, 512]"));
        }
        if self.samples == 0 {
            return Err(invalid("samples must be positive"));
        }
        if !(0.0..=1.0).contains(&self.variance) {
            return Err(invalid("variance must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Report<'a> {
    params: &'a Params,
    seed: u64,
    rows: &'a [GaussNormRow],
}

pub fn run(p: &Params, seed: u64, out: &Output) -> Result<Vec<CriterionResult>> {
    let (rows, t9) = timed(|| gaussian_norm_experiment(&p.d_values, p.samples, p.variance, seed));
    let rows = rows?;
    let mut v: Vec<Violation> = Vec::new();
    for r in &rows {
        require(&mut v, r.passes == r.samples, "iidgauss.norm_bound", seed, || {
            format!(
                "D = {}: {} of {} samples exceed 10√D (max ||P||/√D = {})",
                r.d,
                r.samples - r.passes,
                r.samples,
                r.max_norm_over_sqrt_d
            )
        });
    }
    out.json(
        "gaussnorm_report.json",
        &Report {
            params: p,
            seed,
            rows: &rows,
        },
    )?;
    out.csv(
        "gaussnorm.csv",
        "d,samples,passes,mean_norm_over_sqrt_d,max_norm_over_sqrt_d",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.d,
                r.samples,
                r.passes,
                fmt_f(r.mean_norm_over_sqrt_d),
                fmt_f(r.max_norm_over_sqrt_d)
            )
        }),
    )?;
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "D = {}: {}/{} within bound, max ||P||/√D {:.3}",
                r.d, r.passes, r.samples, r.max_norm_over_sqrt_d
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(vec![CriterionResult::new(
        9,
        "Gaussian Hermitian norm bound",
        summary,
        v,
    )
    .timed(t9)])
}
