//! Runs a verification suite from a JSON config and prints its checks.
//! Equivalent to `phi43 <suite> --config <file>`.
//!
//! ```text
//! cargo run --release --example suite_report -- free-field [config.json]
//! ```

use phi43::config::{parse_config, RunConfig};
use phi43::suite::{run_suite, SuiteName};

fn main() -> phi43::Result<()> {
    let mut args = std::env::args().skip(1);
    let name: SuiteName = args.next().unwrap_or_else(|| "free-field".into()).parse()?;
    let mut config = match args.next() {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?.config,
        None => RunConfig::default(),
    };
    config.out_dir = "out/suite_report".into();
    config.sampling.samples = config.sampling.samples.min(20_000);
    for report in run_suite(&config, name)? {
        println!("{} ({}): {}", report.suite, report.version, if report.pass { "PASS" } else { "FAIL" });
        for c in &report.checks {
            println!("  {:<32} {:+.5e} vs {:+.5e}  score {:.2}", c.name, c.value, c.reference, c.score);
        }
    }
    println!("reports in {}", config.out_dir.display());
    Ok(())
}
