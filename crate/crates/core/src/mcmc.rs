//! Metropolis oracle for the cut-off Gibbs measure `exp(-s U) mu_0`.
//!
//! The energy scale `s` is explicit. The Langevin equation with drift `-grad U`
//! and covariance `[2(m0^2 - Laplacian)]^{-1}` leaves `exp(-2U) mu_0` invariant,
//! so [`GibbsTarget::LANGEVIN`] (`s = 2`) is what the dynamics should be compared
//! against; [`GibbsTarget::AS_DEFINED`] (`s = 1`) samples `exp(-U) mu_0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffPair;
use crate::diagnostics::Observable;
use crate::error::{Error, Result};
use crate::gff::{FreeField, ModelParams};
use crate::grid::{RealField, SpectralField, SymbolTable};
use crate::stats::integrated_autocorr;
use crate::wick::RenormConstants;
use crate::Complex64;

/// `U(phi) = int lambda/4 v^4 - (3 lambda / 2) C_* rho_M^2 v^2`, `v = P_{M,N} phi`.
pub fn interaction_energy(phi: &RealField, cut: &CutoffPair, constants: &RenormConstants, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let v = crate::cutoff::p_mn(phi, cut, false).expect("grids match");
    let cs = constants.c_star(lambda);
    let rho = cut.rho_m();
    let h3 = phi.grid().cell_volume();
    (0..v.values().len())
        .map(|i| {
            let x = v.at(i);
            let r = rho.at(i);
            0.25 * lambda * x.powi(4) - 1.5 * lambda * cs.at(i) * r * r * x * x
        })
        .sum::<f64>()
        * h3
}

/// Target measure `Z^{-1} exp(-scale U) mu_0` on one grid.
#[derive(Clone, Debug)]
pub struct GibbsTarget {
    params: ModelParams,
    cut: CutoffPair,
    constants: RenormConstants,
    cstar_rho2: Vec<f64>,
    scale: f64,
    ff: FreeField,
}

impl GibbsTarget {
    /// Invariant law of the Langevin dynamics.
    pub const LANGEVIN: f64 = 2.0;
    pub const AS_DEFINED: f64 = 1.0;

    pub fn new(params: &ModelParams, cut: &CutoffPair, constants: &RenormConstants, scale: f64) -> Result<Self> {
        params.validate()?;
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("energy scale must be >= 0 ({scale})")));
        }
        let rho = cut.rho_m().values();
        let cstar_rho2 = constants
            .c_star(params.lambda)
            .values()
            .iter()
            .zip(rho)
            .map(|(c, r)| c * r * r)
            .collect();
        Ok(Self {
            params: *params,
            cut: cut.clone(),
            constants: constants.clone(),
            cstar_rho2,
            scale,
            ff: FreeField::new(*cut.grid(), params.m0sq),
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cut(&self) -> &CutoffPair {
        &self.cut
    }

    pub fn constants(&self) -> &RenormConstants {
        &self.constants
    }

    pub fn free_field(&self) -> &FreeField {
        &self.ff
    }

    /// `U(phi)` from the spectrum of `phi` (unscaled).
    pub fn energy(&self, phi: &SpectralField) -> f64 {
        let lambda = self.params.lambda;
        if lambda == 0.0 {
            return 0.0;
        }
        let mut y = phi.clone();
        y.multiply(self.cut.psi_n());
        let y = y.to_real_unchecked();
        let rho = self.cut.rho_m().values();
        let h3 = phi.grid().cell_volume();
        y.values()
            .iter()
            .zip(rho)
            .zip(&self.cstar_rho2)
            .map(|((y, r), c)| {
                let v = r * y;
                let v2 = v * v;
                0.25 * lambda * v2 * v2 - 1.5 * lambda * c * v2
            })
            .sum::<f64>()
            * h3
    }

    /// Grid gradient of `scale U`.
    pub fn gradient(&self, phi: &RealField) -> RealField {
        crate::sqe::nonlinear_drift(phi, &self.cut, &self.constants, self.params.lambda)
            .expect("grids match")
            .scaled(-self.scale)
    }
}

/// Chain position with cached energy.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub phi: SpectralField,
    /// Unscaled `U(phi)`.
    pub energy: f64,
    pub proposed: u64,
    pub accepted: u64,
    pub stream: u64,
}

impl ChainState {
    pub fn new(target: &GibbsTarget, phi: SpectralField, stream: u64) -> Self {
        let energy = target.energy(&phi);
        Self {
            phi,
            energy,
            proposed: 0,
            accepted: 0,
            stream,
        }
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Log Metropolis ratio of a pCN move `phi -> phi'`, given the two energies.
pub fn pcn_log_ratio(scale: f64, u_from: f64, u_to: f64) -> f64 {
    scale * (u_from - u_to)
}

/// One pCN move `phi' = sqrt(1 - beta^2) phi + beta xi`, `xi ~ mu_0`. Returns acceptance.
pub fn pcn_step<R: Rng>(target: &GibbsTarget, state: &mut ChainState, beta: f64, rng: &mut R) -> bool {
    let a = (1.0 - beta * beta).max(0.0).sqrt();
    let mut prop = state.phi.clone();
    for c in prop.coeffs_mut() {
        *c *= a;
    }
    let std: Vec<f64> = target.ff.mode_variances().iter().map(|v| beta * v.sqrt()).collect();
    target.ff.noise().add_to(prop.coeffs_mut(), &std, rng);
    let u = target.energy(&prop);
    state.proposed += 1;
    let log_a = pcn_log_ratio(target.scale, state.energy, u);
    let accept = log_a >= 0.0 || rng.gen::<f64>() < log_a.exp();
    if accept {
        state.phi = prop;
        state.energy = u;
        state.accepted += 1;
    }
    accept
}

/// Preconditioned Crank–Nicolson Langevin move with step `delta`.
pub fn mala_step<R: Rng>(target: &GibbsTarget, state: &mut ChainState, delta: f64, rng: &mut R) -> bool {
    let grid = *target.cut.grid();
    let a = (2.0 - delta) / (2.0 + delta);
    let b = 2.0 * delta / (2.0 + delta);
    let s = (8.0 * delta).sqrt() / (2.0 + delta);
    let cov = SymbolTable::resolvent(grid, target.params.m0sq);
    let mean = |phi: &SpectralField| -> SpectralField {
        let mut g = target.gradient(&phi.to_real_unchecked()).to_spectral();
        g.multiply(&cov);
        let mut m = phi.clone();
        for (c, d) in m.coeffs_mut().iter_mut().zip(g.coeffs()) {
            *c = *c * a - d * b;
        }
        m
    };
    let m_from = mean(&state.phi);
    let mut prop = m_from.clone();
    let std: Vec<f64> = target.ff.mode_variances().iter().map(|v| s * v.sqrt()).collect();
    target.ff.noise().add_to(prop.coeffs_mut(), &std, rng);
    let u = target.energy(&prop);
    let m_to = mean(&prop);
    // log q(x -> y) = -|C^{-1/2}(y - m(x))|^2 / (2 s^2); log pi = -scale U - |C^{-1/2} x|^2 / 2
    let inv_norm = |x: &[Complex64]| -> f64 {
        x.iter()
            .zip(cov.values())
            .map(|(c, v)| c.norm_sqr() / v)
            .sum::<f64>()
            * grid.cell_volume()
            / grid.len() as f64
    };
    let diff = |y: &SpectralField, m: &SpectralField| -> Vec<Complex64> {
        y.coeffs().iter().zip(m.coeffs()).map(|(p, q)| p - q).collect()
    };
    let log_pi = |x: &SpectralField, e: f64| -target.scale * e - 0.5 * inv_norm(x.coeffs());
    let log_fwd = -inv_norm(&diff(&prop, &m_from)) / (2.0 * s * s);
    let log_bwd = -inv_norm(&diff(&state.phi, &m_to)) / (2.0 * s * s);
    let log_a = log_pi(&prop, u) + log_bwd - log_pi(&state.phi, state.energy) - log_fwd;
    state.proposed += 1;
    let accept = log_a >= 0.0 || rng.gen::<f64>() < log_a.exp();
    if accept {
        state.phi = prop;
        state.energy = u;
        state.accepted += 1;
    }
    accept
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    #[default]
    Pcn,
    Mala,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// Initial step size; tuned during burn-in when `tune` is set.
    pub beta: f64,
    pub length: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub tune: bool,
    pub target_acceptance: f64,
    pub proposal: Proposal,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            length: 20_000,
            burn_in: 2_000,
            thinning: 10,
            tune: true,
            target_acceptance: 0.3,
            proposal: Proposal::Pcn,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1] ({})", self.beta)));
        }
        if self.length <= self.burn_in {
            return Err(Error::InvalidParameter("chain length must exceed burn-in".into()));
        }
        if self.thinning == 0 || self.thinning > self.length - self.burn_in {
            return Err(Error::InsufficientData(format!(
                "thinning {} leaves no samples from {} post burn-in steps",
                self.thinning,
                self.length - self.burn_in
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    Ok,
    /// Acceptance below 1%: the step size is too large.
    LowAcceptance,
}

/// Result of [`run_chain`].
#[derive(Clone, Debug)]
pub struct ChainRun {
    /// Observable series over the kept samples, one vector per observable.
    pub series: Vec<Vec<f64>>,
    /// Integrated autocorrelation time per observable, in units of kept samples.
    pub tau_int: Vec<f64>,
    pub beta: f64,
    pub acceptance: f64,
    pub kept: usize,
    pub status: ChainStatus,
    pub state: ChainState,
}

/// Runs one chain; `visit` sees each kept sample.
pub fn run_chain<R: Rng>(
    target: &GibbsTarget,
    init: &RealField,
    config: &ChainConfig,
    observables: &[Observable],
    stream: u64,
    rng: &mut R,
    mut visit: impl FnMut(&SpectralField),
) -> Result<ChainRun> {
    config.validate()?;
    let mut state = ChainState::new(target, init.to_spectral(), stream);
    let mut beta = config.beta;
    let step = |state: &mut ChainState, beta: f64, rng: &mut R| match config.proposal {
        Proposal::Pcn => pcn_step(target, state, beta, rng),
        Proposal::Mala => mala_step(target, state, beta, rng),
    };
    // Robbins–Monro on log beta during burn-in, frozen afterwards
    let mut log_beta = beta.ln();
    for k in 0..config.burn_in {
        let acc = step(&mut state, beta, rng);
        if config.tune {
            let gain = 1.0 / (1.0 + k as f64).sqrt();
            log_beta += gain * ((acc as u8 as f64) - config.target_acceptance);
            log_beta = log_beta.min(0.0).max(-12.0);
            beta = log_beta.exp();
        }
    }
    state.proposed = 0;
    state.accepted = 0;
    let mut series = vec![Vec::new(); observables.len()];
    let mut kept = 0;
    for k in 1..=(config.length - config.burn_in) {
        step(&mut state, beta, rng);
        if k % config.thinning == 0 {
            for (s, o) in series.iter_mut().zip(observables) {
                s.push(o.eval_spectral(&state.phi));
            }
            visit(&state.phi);
            kept += 1;
        }
    }
    let acceptance = state.acceptance();
    let status = if acceptance < 0.01 {
        log::warn!("pCN acceptance {acceptance:.4} below 1%; reduce beta");
        ChainStatus::LowAcceptance
    } else {
        ChainStatus::Ok
    };
    let tau_int = series.iter().map(|s| integrated_autocorr(s)).collect();
    Ok(ChainRun {
        series,
        tau_int,
        beta,
        acceptance,
        kept,
        status,
        state,
    })
}

/// Independent `mu_0` draws with self-normalizable weights `exp(-scale (U - U_ref))`.
#[derive(Clone, Debug)]
pub struct WeightedSample {
    pub values: Vec<f64>,
    pub log_weight: f64,
}

/// Importance sampling of the target from the free field.
pub fn importance_samples<R: Rng>(
    target: &GibbsTarget,
    observables: &[Observable],
    count: usize,
    rng: &mut R,
) -> Vec<WeightedSample> {
    (0..count)
        .map(|_| {
            let phi = target.ff.sample_spectral(rng);
            WeightedSample {
                values: observables.iter().map(|o| o.eval_spectral(&phi)).collect(),
                log_weight: -target.scale * target.energy(&phi),
            }
        })
        .collect()
}

/// Normalized weights `w_i / sum w`, computed stably.
pub fn normalized_weights(samples: &[WeightedSample]) -> Vec<f64> {
    let top = samples.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.log_weight));
    let w: Vec<f64> = samples.iter().map(|s| (s.log_weight - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Kish effective sample size.
pub fn effective_sample_size(samples: &[WeightedSample]) -> f64 {
    let w = normalized_weights(samples);
    1.0 / w.iter().map(|x| x * x).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::rng_stream;
    use crate::grid::GridSpec;
    use crate::stats::{batch_means, z_score};
    use crate::wick::C2Map;

    fn setup(lambda: f64) -> (ModelParams, CutoffPair, RenormConstants) {
        let g = GridSpec::new(8, 4.0).unwrap();
        let p = ModelParams::new(5.0, lambda, 3.1, 1.0).unwrap();
        let cut = CutoffPair::unweighted(g, 1, 1).unwrap();
        let c1 = crate::wick::compute_c1(&p, &cut, crate::wick::C1Mode::GridExact).unwrap();
        let k = RenormConstants::from_parts(&cut, c1, C2Map::constant(g, 0.02));
        (p, cut, k)
    }

    fn bump(g: GridSpec) -> RealField {
        RealField::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())
    }

    #[test]
    fn energy_trivial_cases() {
        let (p, cut, k) = setup(0.5);
        let g = *cut.grid();
        assert_eq!(interaction_energy(&RealField::zeros(g), &cut, &k, p.lambda), 0.0);
        assert_eq!(interaction_energy(&bump(g), &cut, &k, 0.0), 0.0);
    }

    #[test]
    fn quartic_part_is_homogeneous() {
        let (p, cut, _) = setup(0.5);
        let g = *cut.grid();
        let k0 = RenormConstants::from_parts(&cut, 0.0, C2Map::zero(g));
        let f = bump(g);
        let u1 = interaction_energy(&f, &cut, &k0, p.lambda);
        let u2 = interaction_energy(&f.scaled(2.0), &cut, &k0, p.lambda);
        assert!((u2 - 16.0 * u1).abs() < 1e-12 * u2);
    }

    #[test]
    fn spectral_energy_matches_real_space() {
        let (p, cut, k) = setup(0.5);
        let t = GibbsTarget::new(&p, &cut, &k, GibbsTarget::LANGEVIN).unwrap();
        let mut rng = rng_stream(1, 0);
        let phi = t.free_field().sample_spectral(&mut rng);
        let a = t.energy(&phi);
        let b = interaction_energy(&phi.to_real_unchecked(), &cut, &k, p.lambda);
        assert!((a - b).abs() < 1e-12 * b.abs());
    }

    #[test]
    fn zero_coupling_always_accepts() {
        let (p, cut, k) = setup(0.0);
        let t = GibbsTarget::new(&p, &cut, &k, GibbsTarget::LANGEVIN).unwrap();
        let mut rng = rng_stream(2, 0);
        let mut s = ChainState::new(&t, SpectralField::zeros(*cut.grid()), 0);
        for _ in 0..100 {
            assert!(pcn_step(&t, &mut s, 0.9, &mut rng));
        }
    }

    #[test]
    fn pcn_ratio_is_antisymmetric() {
        let (p, cut, k) = setup(0.5);
        let t = GibbsTarget::new(&p, &cut, &k, GibbsTarget::LANGEVIN).unwrap();
        let mut rng = rng_stream(3, 0);
        for _ in 0..10 {
            let a = t.energy(&t.free_field().sample_spectral(&mut rng));
            let b = t.energy(&t.free_field().sample_spectral(&mut rng));
            let prod = (pcn_log_ratio(t.scale(), a, b) + pcn_log_ratio(t.scale(), b, a)).exp();
            assert!((prod - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn chain_config_errors() {
        let c = ChainConfig {
            length: 100,
            burn_in: 50,
            thinning: 60,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::InsufficientData(_))));
        let c = ChainConfig {
            length: 10,
            burn_in: 10,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn free_chain_reproduces_covariance() {
        let (p, cut, k) = setup(0.0);
        let g = *cut.grid();
        let t = GibbsTarget::new(&p, &cut, &k, GibbsTarget::LANGEVIN).unwrap();
        let f = bump(g);
        let obs = [Observable::smeared("bump", f.clone())];
        let cfg = ChainConfig {
            beta: 0.6,
            length: 21_000,
            burn_in: 1_000,
            thinning: 2,
            tune: false,
            ..Default::default()
        };
        let mut rng = rng_stream(4, 0);
        let run = run_chain(&t, &RealField::zeros(g), &cfg, &obs, 0, &mut rng, |_| {}).unwrap();
        let xs = &run.series[0];
        let (m, e) = batch_means(xs, 50).unwrap();
        assert!(m.abs() < 4.0 * e);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (v, ev) = batch_means(&sq, 50).unwrap();
        let oracle = crate::gff::covariance_op(&f, 0.0, &CutoffPair::unweighted(g, 1, 8).unwrap(), &p)
            .unwrap()
            .inner(&f);
        assert!(z_score(v, ev, oracle, 0.0) < 4.0, "{v} +- {ev} vs {oracle}");
        assert!(run.tau_int[0] >= 0.5);
    }

    #[test]
    fn tuning_moves_acceptance_towards_target() {
        let (p, cut, k) = setup(300.0);
        let g = *cut.grid();
        let t = GibbsTarget::new(&p, &cut, &k, GibbsTarget::LANGEVIN).unwrap();
        let cfg = ChainConfig {
            beta: 1.0,
            length: 6_000,
            burn_in: 3_000,
            thinning: 10,
            ..Default::default()
        };
        let mut rng = rng_stream(5, 0);
        let run = run_chain(&t, &RealField::zeros(g), &cfg, &[], 0, &mut rng, |_| {}).unwrap();
        assert!((run.acceptance - 0.3).abs() < 0.12, "{} at beta {}", run.acceptance, run.beta);
    }

    #[test]
    fn mala_and_pcn_agree() {
        let (p, cut, k) = setup(3.0);
        let g = *cut.grid();
        let t = GibbsTarget::new(&p, &cut, &k, GibbsTarget::LANGEVIN).unwrap();
        let obs = [Observable::smeared("bump", bump(g))];
        let mut out = Vec::new();
        for (i, prop) in [Proposal::Pcn, Proposal::Mala].into_iter().enumerate() {
            let cfg = ChainConfig {
                beta: 0.3,
                length: 22_000,
                burn_in: 2_000,
                thinning: 2,
                proposal: prop,
                ..Default::default()
            };
            let mut rng = rng_stream(6, i as u64);
            let run = run_chain(&t, &RealField::zeros(g), &cfg, &obs, i as u64, &mut rng, |_| {}).unwrap();
            let sq: Vec<f64> = run.series[0].iter().map(|x| x * x).collect();
            out.push(batch_means(&sq, 40).unwrap());
        }
        assert!(z_score(out[0].0, out[0].1, out[1].0, out[1].1) < 4.0, "{out:?}");
    }

    #[test]
    fn importance_weights_normalize() {
        let (p, cut, k) = setup(0.5);
        let t = GibbsTarget::new(&p, &cut, &k, GibbsTarget::LANGEVIN).unwrap();
        let mut rng = rng_stream(7, 0);
        let s = importance_samples(&t, &[], 200, &mut rng);
        let w = normalized_weights(&s);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ess = effective_sample_size(&s);
        assert!(ess > 1.0 && ess <= 200.0 + 1e-9);
    }
}
