//! One interacting SQE trajectory from a free-field start: writes the smeared
//! observables as CSV and the final field as a binary snapshot.
//!
//! ```text
//! cargo run --release --example sqe_trajectory -- [out_dir]
//! ```

use std::path::PathBuf;

use phi43::config::RunConfig;
use phi43::diagnostics::default_family;
use phi43::gff::{rng_stream, sample_gff};
use phi43::report::write_series;
use phi43::snapshot;
use phi43::sqe::{run_trajectory, Mode, Schedule};
use phi43::suite::Model;

fn main() -> phi43::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/sqe_trajectory".into()));
    std::fs::create_dir_all(&out)?;
    let mut config = RunConfig::default();
    config.model.lambda = 0.5;
    let model = Model::build(&config, 2)?;
    let engine = model.engine(Mode::Direct)?;
    let mut rng = rng_stream(config.seed, 0);
    let x0 = sample_gff(model.grid(), &model.params, &mut rng);
    let state = engine.init(&x0, 0, &mut rng)?;
    let observers = default_family(model.grid());
    let schedule = Schedule { t_end: 2.0, thinning: 20 };
    let traj = run_trajectory(&engine, state, schedule, &observers, &mut rng)?;

    write_series(&out.join("trajectory.csv"), &traj.series)?;
    snapshot::write(&out.join("final.phi4"), &[traj.state.field()], config.seed)?;
    let last = traj.series.iter().rev().take(observers.len());
    for row in last {
        println!("t = {:.3}  {:<12} {:+.5}", row.t, row.id, row.value);
    }
    println!("{} rows written to {}", traj.series.len(), out.display());
    Ok(())
}
