//! Samples the massive free field on a periodic box and compares the
//! empirical point variance and smeared covariance with the lattice sums.
//!
//! ```text
//! cargo run --release --example free_field
//! ```

use phi43::diagnostics::gaussian_bump;
use phi43::gff::{rng_stream, FreeField};
use phi43::grid::{GridSpec, SymbolTable};
use phi43::stats::mean_and_error;

fn main() -> phi43::Result<()> {
    let grid = GridSpec::new(32, 8.0)?;
    let m0sq = 5.0;
    let ff = FreeField::new(grid, m0sq);
    let mut rng = rng_stream(7, 0);

    let f = gaussian_bump(grid, [0.0; 3], 1.0);
    let g = gaussian_bump(grid, [1.0, 0.0, 0.0], 1.0);
    let (fs, gs) = (f.to_spectral(), g.to_spectral());

    let samples = 20_000;
    let mut point = Vec::with_capacity(samples);
    let mut cross = Vec::with_capacity(samples);
    for _ in 0..samples {
        let phi = ff.sample_spectral(&mut rng);
        point.push(phi.eval_at(grid.origin()).powi(2));
        cross.push(fs.pairing(&phi) * gs.pairing(&phi));
    }

    // E[phi(x)^2] = (1/V) sum_k 1 / (2 (k^2 + m0^2))
    let point_exact = SymbolTable::resolvent(grid, m0sq).kernel_at_origin();
    let cov_exact = {
        let mut h = gs.clone();
        h.multiply(&SymbolTable::resolvent(grid, m0sq));
        fs.pairing(&h)
    };

    let (m, e) = mean_and_error(&point);
    println!("E[phi(0)^2]      = {m:.5} +- {e:.5}   exact {point_exact:.5}");
    let (m, e) = mean_and_error(&cross);
    println!("E[<f,phi><g,phi>] = {m:.5} +- {e:.5}   exact {cov_exact:.5}");
    Ok(())
}
