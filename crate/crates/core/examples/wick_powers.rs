//! Wick powers of the stationary cut-off OU process: centering and pairing of
//! the second power, and the resonant tree after subtracting `C_2`.
//!
//! ```text
//! cargo run --release --example wick_powers
//! ```

use phi43::config::RunConfig;
use phi43::suite::{wick_checks, Model};

fn main() -> phi43::Result<()> {
    let mut config = RunConfig::default();
    config.model.lambda = 0.5;
    let model = Model::build(&config, 2)?;
    let (checks, data) = wick_checks(&model, 8_000, 10, 9, 20, 4.0)?;
    println!("{data}");
    for c in &checks {
        println!(
            "{:<20} {:+.4e} +- {:.1e} (expected {:+.4e})  {}",
            c.name,
            c.value,
            c.error,
            c.reference,
            if c.pass { "ok" } else { "off" }
        );
    }
    Ok(())
}
