//! Two-time covariances of the cut-off Ornstein-Uhlenbeck process against the
//! closed-form operator `V_N(t)`.
//!
//! ```text
//! cargo run --release --example ou_covariance
//! ```

use phi43::cutoff::CutoffPair;
use phi43::gff::ModelParams;
use phi43::grid::GridSpec;
use phi43::suite::{default_triples, ou_covariance_checks};

fn main() -> phi43::Result<()> {
    let grid = GridSpec::new(32, 8.0)?;
    let params = ModelParams::new(5.0, 0.0, 3.1, 1.0)?;
    let cut = CutoffPair::unweighted(grid, 2, 2)?;
    let triples = default_triples(grid, params.m0sq);
    let (checks, _) = ou_covariance_checks(&params, &cut, &triples, 20_000, 5, 4.0)?;
    for c in &checks {
        println!(
            "{:<24} mc {:+.5e} +- {:.1e}  exact {:+.5e}  z {:.2}",
            c.name, c.value, c.error, c.reference, c.score
        );
    }
    Ok(())
}
