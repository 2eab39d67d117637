use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use eth_uniqueqma::experiments::{run_experiment, self_check, ExperimentConfig, Output, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "ethqma",
    version,
    about = "Seeded experiments for the ETH energy subspace test"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config, or the small acceptance suite.
    Run {
        /// Experiment config (optional with --self-check).
        config: Option<PathBuf>,
        /// Run every experiment at small scale.
        #[arg(long)]
        self_check: bool,
        /// Output directory (overrides the config and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn out_dir(flag: Option<PathBuf>, config: Option<&ExperimentConfig>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.and_then(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("ethqma-out"))
}

fn main() -> ExitCode {
    let Cli {
        command:
            Command::Run {
                config,
                self_check: check,
                out,
                seed,
            },
    } = Cli::parse();

    let cfg = match config.as_deref().map(ExperimentConfig::load).transpose() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.is_none() && !check {
        eprintln!("error: a config file is required unless --self-check is given");
        return ExitCode::from(1);
    }
    let seed = seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let output = match Output::new(out_dir(out, cfg.as_ref())) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let start = Instant::now();
    let outcomes = if check {
        self_check(seed, &output)
    } else {
        let cfg = cfg.expect("checked above");
        cfg.params()
            .and_then(|p| run_experiment(&p, seed, &output))
            .map(|o| vec![o])
    };
    let outcomes = match outcomes {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let mut passed = true;
    for o in &outcomes {
        for c in &o.criteria {
            println!("{}", c.line());
            for v in &c.violations {
                println!("    {} (seed {}): {}", v.claim, v.seed, v.detail);
            }
        }
        passed &= o.passed();
    }
    eprintln!(
        "reports in {} ({:.1} s)",
        output.dir().display(),
        start.elapsed().as_secs_f64()
    );
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
