//! Evidence that the cut-off measure is not Gaussian: the fourth cumulant of a
//! smeared field under importance sampling, and the deterministic tree moment
//! with its cutoff-free limit.
//!
//! ```text
//! cargo run --release --example nongauss
//! ```

use phi43::config::RunConfig;
use phi43::cutoff::CutoffPair;
use phi43::diagnostics::{gaussian_bump, tree_moment};
use phi43::quadrature::QuadratureSpec;
use phi43::suite::{kappa4_check, Model};

fn main() -> phi43::Result<()> {
    let mut config = RunConfig::default();
    config.model.lambda = 0.5;
    let model = Model::build(&config, 2)?;
    let (check, data) = kappa4_check(&model, 0.5, 20_000, config.seed)?;
    println!("kappa4 = {:.4e} +- {:.1e} (|z| = {:.1}), ess {}", check.value, check.error, check.score, data["ess"]);

    let grid = model.grid();
    let f = gaussian_bump(grid, [0.0; 3], 1.0);
    for n in [1, 2, 4] {
        let cut = CutoffPair::unweighted(grid, 4, n)?;
        let t = tree_moment(&model.params, &cut, &f, &QuadratureSpec::default())?;
        println!("M = 4, N = {n}: tree moment {:.5e}, limit {:.5e}", t.finite, t.limit);
    }
    Ok(())
}
