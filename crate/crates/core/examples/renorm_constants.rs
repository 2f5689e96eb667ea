//! Renormalization constants for a few regularization levels: the
//! mass counterterm `C_1` (grid and continuum) and the `C_2` probe table.
//!
//! ```text
//! cargo run --release --example renorm_constants
//! ```

use phi43::cutoff::CutoffPair;
use phi43::gff::ModelParams;
use phi43::grid::GridSpec;
use phi43::wick::{c1_continuum, RenormConstants, RenormSpec};

fn main() -> phi43::Result<()> {
    let grid = GridSpec::new(32, 8.0)?;
    let params = ModelParams::new(5.0, 0.5, 3.1, 1.0)?;
    for n in [2, 3] {
        let cut = CutoffPair::unweighted(grid, 2, n)?;
        let k = RenormConstants::compute(&params, &cut, &RenormSpec::default())?;
        println!("N = {n}: C1 grid {:.5}, continuum {:.5}", k.c1_grid, k.c1_continuum);
        let (lo, hi) = k
            .c2_probes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.c2), b.max(p.c2)));
        println!("       C2 over {} probes in [{lo:.5}, {hi:.5}]", k.c2_probes.len());
    }
    let psi = CutoffPair::unweighted(grid, 2, 2)?.psi().clone();
    println!("2^-N C1 in the continuum:");
    for n in 1..=8 {
        println!("  N = {n}: {:.6}", c1_continuum(params.m0sq, n, &psi)? / 2f64.powi(n as i32));
    }
    Ok(())
}
