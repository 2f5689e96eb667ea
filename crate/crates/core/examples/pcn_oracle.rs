//! Preconditioned Crank-Nicolson chain on the cut-off Gibbs measure, with
//! step-size tuning, acceptance and integrated autocorrelation times.
//!
//! ```text
//! cargo run --release --example pcn_oracle
//! ```

use phi43::config::RunConfig;
use phi43::gff::rng_stream;
use phi43::grid::RealField;
use phi43::mcmc::run_chain;
use phi43::stats::batch_means;
use phi43::suite::{invariance_observables, Model};

fn main() -> phi43::Result<()> {
    let mut config = RunConfig::default();
    config.model.lambda = 0.5;
    config.mcmc.length = 40_000;
    let model = Model::build(&config, 2)?;
    let target = model.target()?;
    let obs = invariance_observables(model.grid());
    let mut rng = rng_stream(config.seed, 1);
    let init = RealField::zeros(model.grid());
    let run = run_chain(&target, &init, &config.mcmc, &obs, 1, &mut rng, |_| {})?;
    println!(
        "beta {:.4}, acceptance {:.3}, kept {}, status {:?}",
        run.beta, run.acceptance, run.kept, run.status
    );
    for ((o, s), tau) in obs.iter().zip(&run.series).zip(&run.tau_int) {
        let sq: Vec<f64> = s.iter().map(|x| x * x).collect();
        let (m, e) = batch_means(&sq, 20)?;
        println!("{:<8} E[x^2] = {m:.5} +- {e:.5}   tau_int {tau:.1}", o.id);
    }
    Ok(())
}
