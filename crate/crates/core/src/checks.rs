//! Assertion records and small summary statistics shared by the experiments.

use serde::{Deserialize, Serialize};

/// A failed inequality, named after the claim it checks and the seed that reproduces it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub claim: String,
    pub seed: u64,
    pub detail: String,
}

impl Violation {
    pub fn new(claim: &str, seed: u64, detail: impl Into<String>) -> Self {
        Self {
            claim: claim.to_string(),
            seed,
            detail: detail.into(),
        }
    }
}

/// Push a violation when `ok` is false.
pub fn require(out: &mut Vec<Violation>, ok: bool, claim: &str, seed: u64, detail: impl FnOnce() -> String) {
    if !ok {
        out.push(Violation::new(claim, seed, detail()));
    }
}

/// Linear-interpolation quantile of an ascending slice (`p` in `[0, 1]`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// `(q25, median, q75)` of an unsorted sample.
pub fn quartiles(xs: &[f64]) -> (f64, f64, f64) {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75))
}
