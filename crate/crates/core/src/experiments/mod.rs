//! Seeded experiment runners. Each experiment reads a parameter block,
//! writes JSON and CSV reports, and returns one result per acceptance
//! criterion it covers.

pub mod concentration;
pub mod gap;
pub mod gaussnorm;
pub mod oracle;
pub mod protocol;
pub mod qprops;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checks::Violation;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Environment variable that overrides the output directory of a config.
pub const OUT_DIR_ENV: &str = "ETHQMA_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Qprops,
    Gap,
    Protocol,
    Concentration,
    Gaussnorm,
    Oracle,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        Self::Qprops,
        Self::Gap,
        Self::Protocol,
        Self::Concentration,
        Self::Gaussnorm,
        Self::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Qprops => "qprops",
            Self::Gap => "gap",
            Self::Protocol => "protocol",
            Self::Concentration => "concentration",
            Self::Gaussnorm => "gaussnorm",
            Self::Oracle => "oracle",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Top-level JSON config. `params` holds the experiment's own block and is
/// validated against it; omitted fields take the full-scale defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.params()?.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<Params> {
        Params::parse(self.experiment, self.params.as_ref())
    }
}

/// Full-scale or self-check sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Full,
    Small,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Params {
    Qprops(qprops::Params),
    Gap(gap::Params),
    Protocol(protocol::Params),
    Concentration(concentration::Params),
    Gaussnorm(gaussnorm::Params),
    Oracle(oracle::Params),
}

fn parse_block<T: DeserializeOwned + Default>(value: Option<&serde_json::Value>) -> Result<T> {
    match value {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Parse(e.to_string())),
    }
}

impl Params {
    pub fn parse(name: ExperimentName, value: Option<&serde_json::Value>) -> Result<Self> {
        Ok(match name {
            ExperimentName::Qprops => Self::Qprops(parse_block(value)?),
            ExperimentName::Gap => Self::Gap(parse_block(value)?),
            ExperimentName::Protocol => Self::Protocol(parse_block(value)?),
            ExperimentName::Concentration => Self::Concentration(parse_block(value)?),
            ExperimentName::Gaussnorm => Self::Gaussnorm(parse_block(value)?),
            ExperimentName::Oracle => Self::Oracle(parse_block(value)?),
        })
    }

    pub fn defaults(name: ExperimentName, scale: Scale) -> Self {
        let small = scale == Scale::Small;
        match name {
            ExperimentName::Qprops => Self::Qprops(if small {
                qprops::Params::small()
            } else {
                Default::default()
            }),
            ExperimentName::Gap => Self::Gap(if small {
                gap::Params::small()
            } else {
                Default::default()
            }),
            ExperimentName::Protocol => Self::Protocol(if small {
                protocol::Params::small()
            } else {
                Default::default()
            }),
            ExperimentName::Concentration => Self::Concentration(if small {
                concentration::Params::small()
            } else {
                Default::default()
            }),
            ExperimentName::Gaussnorm => Self::Gaussnorm(if small {
                gaussnorm::Params::small()
            } else {
                Default::default()
            }),
            ExperimentName::Oracle => Self::Oracle(if small {
                oracle::Params::small()
            } else {
                Default::default()
            }),
        }
    }

    pub fn name(&self) -> ExperimentName {
        match self {
            Self::Qprops(_) => ExperimentName::Qprops,
            Self::Gap(_) => ExperimentName::Gap,
            Self::Protocol(_) => ExperimentName::Protocol,
            Self::Concentration(_) => ExperimentName::Concentration,
            Self::Gaussnorm(_) => ExperimentName::Gaussnorm,
            Self::Oracle(_) => ExperimentName::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Qprops(p) => p.validate(),
            Self::Gap(p) => p.validate(),
            Self::Protocol(p) => p.validate(),
            Self::Concentration(p) => p.validate(),
            Self::Gaussnorm(p) => p.validate(),
            Self::Oracle(p) => p.validate(),
        }
    }
}

/// Outcome of one acceptance criterion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub summary: String,
    pub violations: Vec<Violation>,
    /// Wall time of the suite behind this criterion; kept out of the reports.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CriterionResult {
    pub fn new(id: u8, title: &str, summary: String, violations: Vec<Violation>) -> Self {
        Self {
            id,
            title: title.to_string(),
            passed: violations.is_empty(),
            summary,
            violations,
            elapsed: Duration::ZERO,
        }
    }

    pub fn timed(mut self, elapsed: Duration) -> Self {
        self.elapsed = elapsed;
        self
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {}: {} ({})",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.summary
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub experiment: ExperimentName,
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.criteria.iter().flat_map(|c| c.violations.clone()).collect()
    }
}

/// Report sink rooted at one directory.
#[derive(Clone, Debug)]
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn sub(&self, name: &str) -> Result<Self> {
        Self::new(self.dir.join(name))
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    /// `header` is the column line; each row is written as given.
    pub fn csv<I: IntoIterator<Item = String>>(&self, name: &str, header: &str, rows: I) -> Result<()> {
        let mut text = String::from(header);
        text.push('\n');
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}

/// Per-instance seed: independent of scheduling and of every other label.
pub fn instance_seed(master: u64, label: u64, index: u64) -> u64 {
    substream(master, label, index).gen()
}

/// Runs one experiment and writes its reports plus `violations.json`.
pub fn run_experiment(params: &Params, seed: u64, out: &Output) -> Result<ExperimentOutcome> {
    params.validate()?;
    let criteria = match params {
        Params::Qprops(p) => qprops::run(p, seed, out)?,
        Params::Gap(p) => gap::run(p, seed, out)?,
        Params::Protocol(p) => protocol::run(p, seed, out)?,
        Params::Concentration(p) => concentration::run(p, seed, out)?,
        Params::Gaussnorm(p) => gaussnorm::run(p, seed, out)?,
        Params::Oracle(p) => oracle::run(p, seed, out)?,
    };
    let outcome = ExperimentOutcome {
        experiment: params.name(),
        seed,
        criteria,
    };
    out.json("violations.json", &outcome.violations())?;
    out.json("criteria.json", &outcome.criteria)?;
    Ok(outcome)
}

/// Every experiment at small scale, each in its own subdirectory, plus a
/// combined `self_check.json`.
pub fn self_check(seed: u64, out: &Output) -> Result<Vec<ExperimentOutcome>> {
    let mut outcomes = Vec::new();
    for name in ExperimentName::ALL {
        let sub = out.sub(name.as_str())?;
        outcomes.push(run_experiment(&Params::defaults(name, Scale::Small), seed, &sub)?);
    }
    let mut criteria: Vec<&CriterionResult> = outcomes.iter().flat_map(|o| &o.criteria).collect();
    criteria.sort_by_key(|c| c.id);
    out.json("self_check.json", &criteria)?;
    Ok(outcomes)
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.12e}")
}
