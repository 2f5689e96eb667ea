//! Integrator control: the exponential integrator is exact for the free
//! dynamics, and the weak error of `E<f, X_T>` shrinks under step halving
//! (paths coupled through shared Brownian increments).
//!
//! ```text
//! cargo run --release --example integrator
//! ```

use phi43::config::RunConfig;
use phi43::diagnostics::gaussian_bump;
use phi43::sqe::Mode;
use phi43::suite::{coupled_finals, free_dynamics_defect, weak_error_checks, weak_errors, Model, WeakStat};

fn main() -> phi43::Result<()> {
    let mut config = RunConfig::default();
    config.model.lambda = 0.5;
    let model = Model::build(&config, 2)?;

    let free = model.with_lambda(0.0).engine(Mode::Direct)?;
    println!("free dynamics defect after 500 steps: {:.2e}", free_dynamics_defect(&free, 500, 1)?);

    let f = gaussian_bump(model.grid(), [0.0; 3], 1.0);
    let finals = coupled_finals(&model, &f.scaled(3.0), &f, 0.5, &[1, 2, 3], 48, 2)?;
    let errors = weak_errors(&finals, WeakStat::Mean)?;
    for (dt, e, se) in &errors {
        println!("dt = {dt:.4}: weak error {e:+.3e} +- {se:.1e}");
    }
    let (_, order) = weak_error_checks(&errors);
    println!("fitted order {order:.2}");
    Ok(())
}
