//! Dyadic blocks of a random field: reconstruction, Bony decomposition of a
//! product, and the block profile of a weighted Besov norm.
//!
//! ```text
//! cargo run --release --example littlewood_paley
//! ```

use phi43::gff::{rng_stream, sample_gff, ModelParams};
use phi43::grid::{GridSpec, RealField};
use phi43::lp::{besov_norm, besov_profile, paraproduct, BesovParams, DyadicPartition, Weight};

fn main() -> phi43::Result<()> {
    let grid = GridSpec::new(32, 8.0)?;
    let params = ModelParams::new(5.0, 0.0, 3.1, 1.0)?;
    let partition = DyadicPartition::new(grid)?;
    let mut rng = rng_stream(3, 0);
    let f = sample_gff(grid, &params, &mut rng);
    let g = sample_gff(grid, &params, &mut rng);

    let blocks = partition.blocks(&f)?;
    let mut sum = RealField::zeros(grid);
    for b in &blocks {
        sum.axpy(1.0, b);
    }
    println!("blocks j = -1..={}: reconstruction error {:.2e}", partition.j_max(), sum.sub(&f).max_abs());

    let pp = paraproduct(&f, &g, &partition)?;
    let bony = pp.lt.add(&pp.res).add(&pp.gt).sub(&f.mul(&g)).max_abs();
    println!("f g = f<g + f o g + f>g up to {bony:.2e}");
    println!(
        "L2 sizes: f<g {:.3}, f o g {:.3}, f>g {:.3}",
        pp.lt.norm_l2(),
        pp.res.norm_l2(),
        pp.gt.norm_l2()
    );

    let weight = Weight::new(grid, params.sigma, params.a)?;
    let besov = BesovParams::new(-0.6, 2.0, 2.0, weight)?;
    let profile = besov_profile(&blocks, &besov);
    for (i, v) in profile.iter().enumerate() {
        println!("  j = {:>2}: 2^(js) |D_j f| = {v:.4}", i as i32 - 1);
    }
    println!("|f| in B^-0.6_(2,2)(nu) = {:.4}", besov_norm(&f, &partition, &besov)?);
    Ok(())
}
