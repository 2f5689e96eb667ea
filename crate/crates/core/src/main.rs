use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phi43::config::{parse_config, RunConfig};
use phi43::suite::{run_suite, SuiteName};

const CSV_HELP: &str = "\
Artifacts are written to --out-dir:
  <suite>.json           report: resolved config, checks, pass flag, payload
  summary.json           pass/fail per suite run
  stationarity.csv       columns t,id,value,replica (one row per observable,
                         recorded time and replica; replicas in index order)
  stationarity_final.phi4  final SQE states, binary snapshot format

Exit status is 0 when every check passes, 1 when some check fails, 2 on errors.";

#[derive(Parser)]
#[command(name = "phi43", version, about = "Stochastic quantization of Phi^4_3 with double cutoffs", after_help = CSV_HELP)]
struct Cli {
    #[command(subcommand)]
    suite: Suite,
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (wall time only; results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
#[command(rename_all = "kebab-case")]
enum Suite {
    /// Free-field variance and smeared covariances against lattice sums.
    FreeField,
    /// Two-time covariances of the cut-off OU process.
    OuCovariance,
    /// C1 / C2 renormalization constants across the N schedule.
    Renorm,
    /// Wick centering, pairing and the resonant tree mean.
    Wick,
    /// SQE started from the pCN oracle: moments at t = 0, T/2, T.
    Stationarity,
    /// SQE time averages against an independent pCN chain.
    OracleCompare,
    /// Octahedral and reflection invariance of SQE moments.
    Symmetry,
    /// Reflection-positivity Gram matrices (interacting and free).
    Rp,
    /// Weighted Besov norm statistics across N.
    Support,
    /// Fourth cumulant, tree moment and block-probe scaling.
    Nongauss,
    /// Every suite in turn.
    All,
}

impl Suite {
    fn name(self) -> SuiteName {
        match self {
            Suite::FreeField => SuiteName::FreeField,
            Suite::OuCovariance => SuiteName::OuCovariance,
            Suite::Renorm => SuiteName::Renorm,
            Suite::Wick => SuiteName::Wick,
            Suite::Stationarity => SuiteName::Stationarity,
            Suite::OracleCompare => SuiteName::OracleCompare,
            Suite::Symmetry => SuiteName::Symmetry,
            Suite::Rp => SuiteName::Rp,
            Suite::Support => SuiteName::Support,
            Suite::Nongauss => SuiteName::Nongauss,
            Suite::All => SuiteName::All,
        }
    }
}

fn run(cli: Cli) -> phi43::Result<bool> {
    let mut config = match &cli.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?.config,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        config.out_dir = dir;
    }
    config.suite = Some(cli.suite.name());
    for w in config.validate()? {
        log::warn!("{w}");
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| phi43::Error::Config(e.to_string()))?;
    }
    let reports = run_suite(&config, cli.suite.name())?;
    for r in &reports {
        println!("{:<16} {}", r.suite, if r.pass { "PASS" } else { "FAIL" });
        for c in r.failures() {
            println!("    {}: value {:.6e}, reference {:.6e}, score {:.3}", c.name, c.value, c.reference, c.score);
        }
    }
    Ok(reports.iter().all(|r| r.pass))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
