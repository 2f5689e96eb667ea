//! Octahedral symmetry and reflection positivity of the free field, the
//! latter also against the closed-form Gram matrix.
//!
//! ```text
//! cargo run --release --example symmetry_rp
//! ```

use phi43::diagnostics::{gaussian_rp_matrix, octahedral_group, rp_observables, symmetry_test, Observable, SampleTable, SymmetryProbe};
use phi43::gff::{rng_stream, FreeField};
use phi43::grid::GridSpec;
use phi43::suite::{gaussian_columns, rp_checks, rp_functions, symmetry_base};

fn main() -> phi43::Result<()> {
    let grid = GridSpec::new(32, 8.0)?;
    let m0sq = 5.0;
    let ff = FreeField::new(grid, m0sq);
    let mut rng = rng_stream(4, 0);

    let probe = SymmetryProbe::new(symmetry_base(grid), octahedral_group())?;
    let obs = probe.observables();
    let mut table = SampleTable::new(&obs);
    for _ in 0..10_000 {
        table.push_spectral(&obs, &ff.sample_spectral(&mut rng));
    }
    let report = symmetry_test(&probe, &table, 20, 4.0)?;
    println!(
        "octahedral: {} comparisons, max |z| = {:.2}, pass {}",
        report.entries.len(),
        report.max_z,
        report.pass
    );

    let fs = rp_functions(grid, 4);
    let (refl, plain) = rp_observables(&fs)?;
    let all: Vec<Observable> = refl.iter().chain(&plain).cloned().collect();
    let cols = gaussian_columns(&ff, &all, 10_000, &mut rng);
    let (a, b) = cols.split_at(refl.len());
    let closed = gaussian_rp_matrix(&fs, m0sq);
    let (checks, _) = rp_checks("free", a, b, Some(&closed), 4.0)?;
    for c in &checks {
        println!("{:<32} {:+.4e} (score {:.2}) {}", c.name, c.value, c.score, if c.pass { "ok" } else { "off" });
    }
    Ok(())
}
