//! Weighted Besov norm of `|phi|^2` in `B^{-1/2-eps}_{2,2}` for pCN samples of
//! the cut-off measure at increasing regularization levels.
//!
//! ```text
//! cargo run --release --example besov_support
//! ```

use phi43::config::RunConfig;
use phi43::diagnostics::{besov_sq_norm, besov_support_estimate};
use phi43::lp::DyadicPartition;
use phi43::suite::{pcn_samples, Model};

fn main() -> phi43::Result<()> {
    let mut config = RunConfig::default();
    config.model.lambda = 0.5;
    let partition = DyadicPartition::new(config.grid_spec()?)?;
    for n in [2, 3] {
        let model = Model::build(&config, n)?;
        let (samples, run) = pcn_samples(&model.target()?, &config.mcmc, 400, config.seed, n as u64)?;
        let norms: Vec<f64> = samples
            .iter()
            .map(|phi| besov_sq_norm(&phi.to_real_unchecked(), &partition, model.cut.weight(), 0.1, 2.0))
            .collect::<phi43::Result<_>>()?;
        let est = besov_support_estimate(&norms, 20)?;
        println!(
            "N = {n}: E|phi|^2 = {:.4} +- {:.4}  (pCN acceptance {:.2})",
            est.value, est.error, run.acceptance
        );
    }
    Ok(())
}
