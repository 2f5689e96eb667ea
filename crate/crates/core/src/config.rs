//! Run configuration: JSON with every section optional and unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cutoff::{CutoffPair, ProfileConfig};
use crate::error::{Error, Result};
use crate::gff::ModelParams;
use crate::grid::GridSpec;
use crate::lp::Weight;
use crate::mcmc::ChainConfig;
use crate::quadrature::QuadratureSpec;
use crate::sqe::{IntegratorConfig, Mode};
use crate::suite::SuiteName;
use crate::wick::{C2Formula, ProbeLattice, RenormSpec, SourceRule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 32, l: 8.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub m0sq: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub a: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            m0sq: 5.0,
            lambda: 0.5,
            sigma: 3.1,
            a: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffSection {
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "N")]
    pub n: u32,
    /// Momentum levels swept by the multi-`N` suites.
    pub schedule: Vec<u32>,
    pub profile: ProfileConfig,
}

impl Default for CutoffSection {
    fn default() -> Self {
        Self {
            m: 2,
            n: 2,
            schedule: vec![2, 3, 4],
            profile: ProfileConfig::default(),
        }
    }
}

/// SQE settings: the per-step integrator plus trajectory length and thinning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub mode: Mode,
    /// `None` means `0.01 / m0^2`.
    pub dt: Option<f64>,
    /// Trajectory length; `None` means `20 / m0^2`.
    #[serde(rename = "T")]
    pub t: Option<f64>,
    /// Tree burn-in for shifted mode; `None` means `10 / m0^2`.
    pub burn_in: Option<f64>,
    pub thinning: usize,
    pub guard: f64,
    pub source_rule: SourceRule,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let step = IntegratorConfig::default();
        Self {
            mode: step.mode,
            dt: step.dt,
            t: None,
            burn_in: step.burn_in,
            thinning: 10,
            guard: step.guard,
            source_rule: step.source_rule,
        }
    }
}

impl IntegratorSection {
    pub fn step_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            mode: self.mode,
            dt: self.dt,
            guard: self.guard,
            source_rule: self.source_rule,
            burn_in: self.burn_in,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenormSection {
    pub c2_formula: C2Formula,
    pub probes: Option<ProbeLattice>,
}

impl Default for RenormSection {
    fn default() -> Self {
        Self {
            c2_formula: C2Formula::Expectation,
            probes: None,
        }
    }
}

/// Ensemble sizes used by the suites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// Independent draws for the Gaussian suites.
    pub samples: usize,
    /// SQE replicas for the dynamical suites.
    pub replicas: usize,
    /// Jackknife / batch count.
    pub batches: usize,
    /// Pass threshold in standard errors.
    pub threshold: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            samples: 20_000,
            replicas: 16,
            batches: 20,
            threshold: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub cutoffs: CutoffSection,
    pub integrator: IntegratorSection,
    pub mcmc: ChainConfig,
    pub quadrature: QuadratureSpec,
    pub renorm: RenormSection,
    pub sampling: SamplingSection,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub suite: Option<SuiteName>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSection::default(),
            model: ModelSection::default(),
            cutoffs: CutoffSection::default(),
            integrator: IntegratorSection::default(),
            mcmc: ChainConfig::default(),
            quadrature: QuadratureSpec::default(),
            renorm: RenormSection::default(),
            sampling: SamplingSection::default(),
            seed: 1,
            out_dir: PathBuf::from("out"),
            suite: None,
        }
    }
}

/// A validated configuration plus the soft-constraint warnings raised while parsing.
#[derive(Clone, Debug)]
pub struct Parsed {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

pub fn parse_config(text: &str) -> Result<Parsed> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let warnings = config.validate()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Parsed { config, warnings })
}

impl RunConfig {
    /// Hard checks; returns the soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let grid = self.grid_spec()?;
        let params = self.model_params();
        params.validate().map_err(|e| Error::Config(e.to_string()))?;
        let c = &self.cutoffs;
        if 2.0 * c.m as f64 > grid.half_length() {
            return Err(Error::Config(format!(
                "cutoffs: need 2M <= L so the interaction region fits the box (M={}, L={})",
                c.m,
                grid.half_length()
            )));
        }
        for &n in std::iter::once(&c.n).chain(&c.schedule) {
            if c.m > n {
                return Err(Error::Config(format!("cutoffs: need M <= N (M={}, N={n})", c.m)));
            }
        }
        if c.m == 0 {
            return Err(Error::Config("cutoffs: M must be positive".into()));
        }
        let ig = &self.integrator;
        if let Some(dt) = ig.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("integrator: dt must be positive (dt={dt})")));
            }
        }
        if let Some(t) = ig.t {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("integrator: T must be >= 0 (T={t})")));
            }
        }
        if ig.thinning == 0 || !(ig.guard > 0.0) {
            return Err(Error::Config("integrator: thinning >= 1 and guard > 0 required".into()));
        }
        self.mcmc.validate().map_err(|e| Error::Config(format!("mcmc: {e}")))?;
        self.quadrature
            .validate()
            .map_err(|e| Error::Config(format!("quadrature: {e}")))?;
        let s = &self.sampling;
        if s.samples < 100 || s.replicas == 0 || s.batches < 2 || !(s.threshold > 0.0) {
            return Err(Error::Config(
                "sampling: need samples >= 100, replicas >= 1, batches >= 2, threshold > 0".into(),
            ));
        }
        Ok(params.warnings())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n, self.grid.l).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model_params(&self) -> ModelParams {
        let m = self.model;
        ModelParams {
            m0sq: m.m0sq,
            lambda: m.lambda,
            sigma: m.sigma,
            a: m.a,
        }
    }

    /// Cutoff pair at level `n` (the configured `M` is kept).
    pub fn cutoffs_at(&self, n: u32) -> Result<CutoffPair> {
        let grid = self.grid_spec()?;
        let weight = Weight::new(grid, self.model.sigma, self.model.a)?;
        CutoffPair::new(grid, self.cutoffs.m, n, self.cutoffs.profile, weight)
    }

    pub fn renorm_spec(&self) -> RenormSpec {
        RenormSpec {
            quadrature: self.quadrature,
            c2_formula: self.renorm.c2_formula,
            probes: self.renorm.probes.clone(),
            skip_c2: self.model.lambda == 0.0,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.integrator.t.unwrap_or(20.0 / self.model.m0sq)
    }

    /// Copy with every implicit default replaced by its value, for report metadata.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let m0sq = self.model.m0sq;
        out.integrator.t = Some(self.t_end());
        let step = self.integrator.step_config();
        out.integrator.dt = Some(step.resolved_dt(m0sq));
        out.integrator.burn_in = Some(step.resolved_burn_in(m0sq));
        out.quadrature.t_max = Some(self.quadrature.resolved_t_max(m0sq));
        if out.renorm.probes.is_none() {
            if let Ok(grid) = self.grid_spec() {
                out.renorm.probes = Some(ProbeLattice::default_for(grid, self.cutoffs.m));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let p = parse_config("{}").unwrap();
        assert_eq!(p.config, RunConfig::default());
        assert!(p.warnings.is_empty());
        assert_eq!(p.config.grid.n, 32);
        assert_eq!(p.config.cutoffs.schedule, vec![2, 3, 4]);
    }

    #[test]
    fn negative_lambda_names_the_constraint() {
        let e = parse_config(r#"{"model": {"lambda": -1}}"#).unwrap_err();
        assert!(e.to_string().contains("lambda >= 0"), "{e}");
    }

    #[test]
    fn small_sigma_warns() {
        let p = parse_config(r#"{"model": {"sigma": 2, "a": 1}}"#).unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert!(p.warnings[0].contains("9 < sigma^2 < 2 m0^2"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config(r#"{"gird": {}}"#).is_err());
        assert!(parse_config(r#"{"grid": {"n": 16, "size": 3}}"#).is_err());
        assert!(parse_config(r#"{"integrator": {"dtt": 0.1}}"#).is_err());
    }

    #[test]
    fn box_constraint() {
        let e = parse_config(r#"{"grid": {"n": 16, "L": 3}, "cutoffs": {"M": 2}}"#).unwrap_err();
        assert!(e.to_string().contains("2M <= L"), "{e}");
        let e = parse_config(r#"{"cutoffs": {"M": 3, "N": 2, "schedule": [3]}}"#).unwrap_err();
        assert!(e.to_string().contains("M <= N"), "{e}");
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"{
            "grid": {"n": 16, "L": 4},
            "cutoffs": {"M": 1, "N": 3, "schedule": [2, 3]},
            "integrator": {"mode": "dpd", "dt": 0.001, "T": 1.0, "thinning": 5},
            "mcmc": {"beta": 0.2, "length": 1000, "burn_in": 100},
            "quadrature": {"tol": 1e-5},
            "seed": 9,
            "suite": "free-field"
        }"#;
        let c = parse_config(text).unwrap().config;
        assert_eq!(c.integrator.mode, crate::sqe::Mode::Dpd);
        assert_eq!(c.integrator.dt, Some(0.001));
        assert_eq!(c.mcmc.length, 1000);
        assert_eq!(c.suite, Some(SuiteName::FreeField));
        assert_eq!(c.t_end(), 1.0);
    }

    #[test]
    fn resolved_fills_every_default() {
        let r = RunConfig::default().resolved();
        assert_eq!(r.integrator.t, Some(4.0));
        assert_eq!(r.integrator.dt, Some(0.002));
        assert!(r.quadrature.t_max.is_some());
        assert!(r.renorm.probes.is_some());
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(parse_config(&text).unwrap().config, r);
    }
}
