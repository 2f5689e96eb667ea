//! Experiment drivers and the named suites of the command line.
//!
//! Each driver returns a list of [`Check`]s plus a JSON payload; a suite wraps
//! one or more drivers into a [`Report`] and writes its artifacts. The drivers
//! are public so the acceptance target and the examples can run them at other
//! sample sizes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::cutoff::CutoffPair;
use crate::diagnostics::{
    besov_sq_norm, besov_support_estimate, block_tree_integrals, gaussian_bump, gaussian_rp_matrix, kappa4_importance,
    log2_slope, octahedral_group, restrict_to_positive_half, rp_gram, rp_observables, symmetry_test, tree_moment,
    tree_moment_mc, Observable, SampleTable, SymmetryProbe, TreeMcSpec,
};
use crate::error::{Error, Result};
use crate::gff::{covariance_op, rng_stream, FreeField, ModelParams, OuPropagator};
use crate::grid::{apply_symbol, delta_at, GridSpec, RealField, SpectralField};
use crate::lp::DyadicPartition;
use crate::mcmc::{importance_samples, run_chain, ChainConfig, ChainRun, GibbsTarget};
use crate::quadrature::QuadratureSpec;
use crate::report::{write_series, Check, Report, Summary};
use crate::snapshot;
use crate::sqe::{Mode, SeriesRow, Sqe, SqeState};
use crate::stats::{batch_means, jackknife, mean_and_error, z_score};
use crate::wick::{c1_continuum, RenormConstants, SourceRule, TreeSet, WickEvolver};
use crate::Complex64;

/// RNG stream offsets, so that different drivers never share draws.
const STREAM_CHAIN: u64 = 1 << 20;
const STREAM_ORACLE: u64 = 2 << 20;
const STREAM_REPLICA: u64 = 3 << 20;
const STREAM_GAUSS: u64 = 4 << 20;
const STREAM_TREE: u64 = 5 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    FreeField,
    OuCovariance,
    Renorm,
    Wick,
    Stationarity,
    OracleCompare,
    Symmetry,
    Rp,
    Support,
    Nongauss,
    All,
}

impl SuiteName {
    pub const EACH: [SuiteName; 10] = [
        SuiteName::FreeField,
        SuiteName::OuCovariance,
        SuiteName::Renorm,
        SuiteName::Wick,
        SuiteName::Stationarity,
        SuiteName::OracleCompare,
        SuiteName::Symmetry,
        SuiteName::Rp,
        SuiteName::Support,
        SuiteName::Nongauss,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::FreeField => "free-field",
            SuiteName::OuCovariance => "ou-covariance",
            SuiteName::Renorm => "renorm",
            SuiteName::Wick => "wick",
            SuiteName::Stationarity => "stationarity",
            SuiteName::OracleCompare => "oracle-compare",
            SuiteName::Symmetry => "symmetry",
            SuiteName::Rp => "rp",
            SuiteName::Support => "support",
            SuiteName::Nongauss => "nongauss",
            SuiteName::All => "all",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::EACH
            .iter()
            .chain(&[SuiteName::All])
            .find(|n| n.as_str() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = SuiteName::EACH.iter().map(|n| n.as_str()).collect();
                Error::Config(format!("unknown suite '{s}'; expected one of {} or all", names.join(", ")))
            })
    }
}

/// Parameters, cutoffs and renormalization constants at one level `N`.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: RunConfig,
    pub params: ModelParams,
    pub cut: CutoffPair,
    pub constants: RenormConstants,
}

impl Model {
    /// Computes the constants (the `C_2` quadrature is skipped at `lambda = 0`).
    pub fn build(config: &RunConfig, n: u32) -> Result<Self> {
        let params = config.model_params();
        let cut = config.cutoffs_at(n)?;
        let constants = if params.lambda == 0.0 {
            RenormConstants::without_c2(&params, &cut)?
        } else {
            RenormConstants::compute(&params, &cut, &config.renorm_spec())?
        };
        Ok(Self::from_parts(config, params, cut, constants))
    }

    pub fn from_parts(config: &RunConfig, params: ModelParams, cut: CutoffPair, constants: RenormConstants) -> Self {
        Self {
            config: config.clone(),
            params,
            cut,
            constants,
        }
    }

    pub fn grid(&self) -> GridSpec {
        *self.cut.grid()
    }

    /// Same cutoffs and constants at another coupling.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        out.params = self.params.with_lambda(lambda);
        out.config.model.lambda = lambda;
        out
    }

    /// The law the SQE leaves invariant.
    pub fn target(&self) -> Result<GibbsTarget> {
        GibbsTarget::new(&self.params, &self.cut, &self.constants, GibbsTarget::LANGEVIN)
    }

    pub fn engine(&self, mode: Mode) -> Result<Sqe> {
        let mut step = self.config.integrator.step_config();
        step.mode = mode;
        Sqe::new(&self.params, &self.cut, &self.constants, &step)
    }
}

/// Raw moments `E[x^k]`, `k = 1..=4`, with iid standard errors.
pub fn raw_moments(xs: &[f64]) -> [(f64, f64); 4] {
    let mut out = [(0.0, 0.0); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let p: Vec<f64> = xs.iter().map(|x| x.powi(k as i32 + 1)).collect();
        *slot = mean_and_error(&p);
    }
    out
}

/// The three smeared observables of the invariance checks.
pub fn invariance_observables(grid: GridSpec) -> Vec<Observable> {
    vec![
        Observable::smeared("bump_origin_w0.5", gaussian_bump(grid, [0.0; 3], 0.5)),
        Observable::smeared("bump_origin_w1", gaussian_bump(grid, [0.0; 3], 1.0)),
        Observable::smeared("bump_off_w0.75", gaussian_bump(grid, [0.5, 0.5, 0.0], 0.75)),
    ]
}

/// Off-axis bumps whose 48 octahedral images are all distinct.
pub fn symmetry_base(grid: GridSpec) -> Vec<Observable> {
    vec![
        Observable::smeared("sym_a", gaussian_bump(grid, [1.0, 0.5, 0.0], 0.75)),
        Observable::smeared("sym_b", gaussian_bump(grid, [0.5, -1.0, 1.5], 0.5)),
    ]
}

/// Three random bumps restricted to `x_1 > 0`.
pub fn rp_functions(grid: GridSpec, seed: u64) -> Vec<RealField> {
    let mut rng = rng_stream(seed, 99);
    (0..3)
        .map(|_| {
            let c = [rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let w = rng.gen_range(0.5..1.0);
            restrict_to_positive_half(&gaussian_bump(grid, c, w))
        })
        .collect()
}

// ---------------------------------------------------------------- free field

/// Point variance and smeared covariances of `sample_gff` against lattice sums.
pub fn free_field_checks(grid: GridSpec, m0sq: f64, samples: usize, seed: u64, threshold: f64) -> Result<(Vec<Check>, Value)> {
    let ff = FreeField::new(grid, m0sq);
    let fs = [
        gaussian_bump(grid, [0.0; 3], 1.0),
        gaussian_bump(grid, [1.0, 0.0, 0.0], 0.5),
        gaussian_bump(grid, [0.5, 1.0, -0.5], 1.5),
    ];
    let specs: Vec<SpectralField> = fs.iter().map(|f| f.to_spectral()).collect();
    let pairs = [(0, 0), (0, 1), (1, 2), (2, 2)];
    // lattice resolvent sums
    let volume = (2.0 * grid.half_length()).powi(3);
    let point_var: f64 = (0..grid.len())
        .map(|i| 0.5 / (grid.momentum_norm(i).powi(2) + m0sq))
        .sum::<f64>()
        / volume;
    let cov = |a: &RealField, b: &RealField| -> Result<f64> {
        let cb = apply_symbol(b, |k| 0.5 / (k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + m0sq))?;
        Ok(a.inner(&cb))
    };
    let origin = grid.origin();
    let mut rng = rng_stream(seed, STREAM_GAUSS);
    let mut point = Vec::with_capacity(samples);
    let mut smeared = vec![Vec::with_capacity(samples); fs.len()];
    for _ in 0..samples {
        let phi = ff.sample_spectral(&mut rng);
        let x = phi.eval_at(origin);
        point.push(x * x);
        for (s, col) in specs.iter().zip(smeared.iter_mut()) {
            col.push(s.pairing(&phi));
        }
    }
    let mut checks = Vec::new();
    let (m, e) = mean_and_error(&point);
    checks.push(Check::z("point_variance", m, point_var, e, threshold));
    let (m, e) = mean_and_error(&smeared[0]);
    checks.push(Check::z("smeared_mean_f0", m, 0.0, e, threshold));
    for (a, b) in pairs {
        let prod: Vec<f64> = smeared[a].iter().zip(&smeared[b]).map(|(x, y)| x * y).collect();
        let (m, e) = mean_and_error(&prod);
        checks.push(Check::z(format!("covariance_f{a}_f{b}"), m, cov(&fs[a], &fs[b])?, e, threshold));
    }
    Ok((checks, json!({ "samples": samples, "point_variance_oracle": point_var })))
}

// ------------------------------------------------------------ OU covariance

/// Two-time covariances of `P_N Z` against `<V_N(lag) f, g>`.
pub fn ou_covariance_checks(
    params: &ModelParams,
    cut: &CutoffPair,
    triples: &[(RealField, RealField, f64)],
    samples: usize,
    seed: u64,
    threshold: f64,
) -> Result<(Vec<Check>, Value)> {
    let grid = *cut.grid();
    let ff = FreeField::new(grid, params.m0sq);
    let mut out = Vec::new();
    let mut oracle = Vec::new();
    for (idx, (f, g, lag)) in triples.iter().enumerate() {
        let reference = covariance_op(f, *lag, cut, params)?.inner(g);
        let mut pf = f.to_spectral();
        pf.multiply(cut.psi_n());
        let mut pg = g.to_spectral();
        pg.multiply(cut.psi_n());
        let prop = OuPropagator::new(&ff, *lag)?;
        let mut rng = rng_stream(seed, STREAM_GAUSS + 1 + idx as u64);
        let prods: Vec<f64> = (0..samples)
            .map(|_| {
                let mut z = ff.sample_spectral(&mut rng);
                let a = pf.pairing(&z);
                prop.step(&mut z, ff.noise(), &mut rng);
                a * pg.pairing(&z)
            })
            .collect();
        let (m, e) = mean_and_error(&prods);
        out.push(Check::z(format!("two_time_cov_{idx}_lag{lag}"), m, reference, e, threshold));
        oracle.push(reference);
    }
    Ok((out, json!({ "samples": samples, "oracle": oracle })))
}

/// Default `(f, g, lag)` triples.
pub fn default_triples(grid: GridSpec, m0sq: f64) -> Vec<(RealField, RealField, f64)> {
    let tau = 1.0 / m0sq;
    vec![
        (gaussian_bump(grid, [0.0; 3], 1.0), gaussian_bump(grid, [0.0; 3], 1.0), 0.5 * tau),
        (gaussian_bump(grid, [0.0; 3], 1.0), gaussian_bump(grid, [1.0, 0.0, 0.0], 1.0), tau),
        (gaussian_bump(grid, [0.0; 3], 0.5), gaussian_bump(grid, [0.5, 0.0, 0.0], 1.5), 0.25 * tau),
    ]
}

// ------------------------------------------------------------------ renorm

/// `C_1` ratio sequence and the `C_2` envelope across levels.
///
/// The envelope constant is fitted on every level but the last, which is then
/// checked against `-c2 <= C_2 <= c2 N` as a held-out prediction.
pub fn renorm_checks(levels: &[RenormConstants], m0sq: f64, psi: &crate::profile::RadialProfile, ratio_level: u32) -> Result<(Vec<Check>, Value)> {
    let mut checks = Vec::new();
    let mut seq = Vec::new();
    for n in 1..=ratio_level.max(2) + 1 {
        seq.push((n, c1_continuum(m0sq, n, psi)? / 2f64.powi(n as i32)));
    }
    let ratios: Vec<(u32, f64)> = seq.windows(2).map(|w| (w[1].0, w[1].1 / w[0].1)).collect();
    if let Some(&(n, r)) = ratios.iter().find(|(n, _)| *n == ratio_level) {
        checks.push(Check::flag(
            format!("c1_ratio_N{n}"),
            r,
            1.0,
            0.05,
            (r - 1.0).abs(),
            (0.95..=1.05).contains(&r),
        ));
    }
    let envelope = |c: &RenormConstants| {
        c.c2_probes
            .iter()
            .map(|p| (p.c2 / c.n as f64).max(-p.c2))
            .fold(0.0, f64::max)
    };
    let mut fit = None;
    if levels.len() >= 2 {
        let (train, test) = levels.split_at(levels.len() - 1);
        let c2 = train.iter().map(envelope).fold(0.0, f64::max);
        let last = &test[0];
        let n = last.n as f64;
        let worst = last
            .c2_probes
            .iter()
            .map(|p| (p.c2 / (c2 * n)).max(-p.c2 / c2))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::flag(format!("c2_envelope_N{}", last.n), worst, 1.0, 0.0, worst, worst <= 1.0));
        fit = Some(c2);
    }
    let per_level: Vec<Value> = levels
        .iter()
        .map(|c| {
            let vals: Vec<f64> = c.c2_probes.iter().map(|p| p.c2).collect();
            json!({
                "N": c.n, "M": c.m, "c1_grid": c.c1_grid, "c1_continuum": c.c1_continuum,
                "c2_min": vals.iter().cloned().fold(f64::INFINITY, f64::min),
                "c2_max": vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect();
    Ok((
        checks,
        json!({
            "c1_scaled": seq,
            "c1_ratios": ratios,
            "c2_envelope_fit": fit,
            "levels": per_level,
        }),
    ))
}

// -------------------------------------------------------------------- wick

/// Wick centering and pairing of `Z2`, and the mean of the resonant tree.
pub fn wick_checks(model: &Model, samples: usize, spacing: usize, seed: u64, batches: usize, threshold: f64) -> Result<(Vec<Check>, Value)> {
    let grid = model.grid();
    let cut = &model.cut;
    let params = &model.params;
    let constants = &model.constants;
    let partition = DyadicPartition::new(grid)?;
    let step = model.config.integrator.step_config();
    let dt = step.resolved_dt(params.m0sq).max(0.01 / params.m0sq);
    let trees = TreeSet {
        tree02: false,
        tree03: false,
        i22: true,
        i23: false,
    };
    let mut rng = rng_stream(seed, STREAM_REPLICA);
    let mut ev = WickEvolver::new(params, cut, constants.c1(), dt, SourceRule::Trapezoid, trees, 0, &mut rng)?;
    ev.burn_in(step.resolved_burn_in(params.m0sq), &mut rng);
    let points = constants.c2_map.lattice.indices(grid);
    let x0 = grid.origin();
    let x1 = grid.index((grid.n() / 2 + 1) % grid.n(), grid.n() / 2, grid.n() / 2);
    let x2 = grid.index((grid.n() / 2 + 2) % grid.n(), (grid.n() / 2 + 1) % grid.n(), grid.n() / 2);
    let pairs = [(x0, x0), (x0, x1), (x0, x2)];
    let kernel: Vec<f64> = pairs
        .iter()
        .map(|&(x, y)| covariance_op(&delta_at(grid, y), 0.0, cut, params).map(|k| k.at(x)))
        .collect::<Result<_>>()?;
    let mut z2_at = vec![Vec::with_capacity(samples); 2];
    let mut z2_pairs = vec![Vec::with_capacity(samples); pairs.len()];
    let mut res = vec![Vec::with_capacity(samples); points.len()];
    for _ in 0..samples {
        for _ in 0..spacing {
            ev.step(&mut rng);
        }
        let z2 = ev.z2();
        z2_at[0].push(z2.at(x0));
        z2_at[1].push(z2.at(x2));
        for (col, &(x, y)) in z2_pairs.iter_mut().zip(&pairs) {
            col.push(z2.at(x) * z2.at(y));
        }
        let raw = ev.resonant_raw(&partition)?;
        for ((col, &p), probe) in res.iter_mut().zip(&points).zip(&constants.c2_probes) {
            col.push(raw.at(p) - probe.c2);
        }
    }
    let mut checks = Vec::new();
    for (i, col) in z2_at.iter().enumerate() {
        let (m, e) = batch_means(col, batches)?;
        checks.push(Check::z(format!("z2_mean_{i}"), m, 0.0, e, threshold));
    }
    for (i, col) in z2_pairs.iter().enumerate() {
        let (m, e) = batch_means(col, batches)?;
        checks.push(Check::z(format!("z2_pairing_{i}"), m, 2.0 * kernel[i] * kernel[i], e, threshold));
    }
    for (i, col) in res.iter().enumerate() {
        let (m, e) = batch_means(col, batches)?;
        checks.push(Check::z(format!("resonant_mean_probe{i}"), m, 0.0, e, threshold));
    }
    Ok((checks, json!({ "samples": samples, "dt": dt, "spacing_steps": spacing, "c1": constants.c1() })))
}

// ------------------------------------------------------------- ensembles

/// Runs a pCN chain for `count` thinned samples after burn-in, handing each to `visit`.
pub fn pcn_visit(
    target: &GibbsTarget,
    chain: &ChainConfig,
    count: usize,
    seed: u64,
    stream: u64,
    visit: impl FnMut(&SpectralField),
) -> Result<ChainRun> {
    let mut cfg = chain.clone();
    cfg.length = cfg.burn_in + count.max(1) * cfg.thinning;
    let mut rng = rng_stream(seed, stream);
    let init = RealField::zeros(*target.cut().grid());
    run_chain(target, &init, &cfg, &[], stream, &mut rng, visit)
}

/// `count` thinned pCN samples after burn-in (and the chain record).
pub fn pcn_samples(target: &GibbsTarget, chain: &ChainConfig, count: usize, seed: u64, stream: u64) -> Result<(Vec<SpectralField>, ChainRun)> {
    let mut out = Vec::with_capacity(count);
    let run = pcn_visit(target, chain, count, seed, stream, |phi| out.push(phi.clone()))?;
    Ok((out, run))
}

/// Observable columns over `count` free-field draws, without keeping the fields.
pub fn gaussian_columns<R: rand::Rng>(ff: &FreeField, observables: &[Observable], count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(count); observables.len()];
    for _ in 0..count {
        let phi = ff.sample_spectral(rng);
        for (col, o) in cols.iter_mut().zip(observables) {
            col.push(o.eval_spectral(&phi));
        }
    }
    cols
}

/// Observable values of an SQE ensemble: `values[replica][time][observable]`.
#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub ids: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
    pub finals: Vec<SqeState>,
}

impl EnsembleRun {
    /// Values of observable `obs` at time index `ti`, one per replica.
    pub fn at_time(&self, ti: usize, obs: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[ti][obs]).collect()
    }

    /// Replica-major table of the observables `cols`, dropping `t = 0` when `skip_initial`.
    pub fn table(&self, cols: std::ops::Range<usize>, skip_initial: bool) -> SampleTable {
        let mut t = SampleTable {
            ids: self.ids[cols.clone()].to_vec(),
            rows: Vec::new(),
        };
        let first = usize::from(skip_initial);
        for r in &self.values {
            for row in &r[first..] {
                t.rows.push(row[cols.clone()].to_vec());
            }
        }
        t
    }

    pub fn series(&self, cols: std::ops::Range<usize>) -> Vec<SeriesRow> {
        let mut out = Vec::new();
        for (state, r) in self.finals.iter().zip(&self.values) {
            for (t, row) in self.times.iter().zip(r) {
                for c in cols.clone() {
                    out.push(SeriesRow {
                        t: *t,
                        id: self.ids[c].clone(),
                        value: row[c],
                        replica: state.stream,
                    });
                }
            }
        }
        out
    }
}

/// Runs one SQE trajectory per initial field, in parallel, merged by replica index.
///
/// Observables are recorded at `t = 0`, every `thinning` steps, at the middle
/// step and at the final step.
pub fn run_ensemble(
    engine: &Sqe,
    inits: &[SpectralField],
    t_end: f64,
    thinning: usize,
    observables: &[Observable],
    seed: u64,
) -> Result<EnsembleRun> {
    let steps = (t_end / engine.dt()).round() as usize;
    let record = |k: usize| k == 0 || k % thinning.max(1) == 0 || k == steps / 2 || k == steps;
    let times: Vec<f64> = (0..=steps).filter(|&k| record(k)).map(|k| k as f64 * engine.dt()).collect();
    let runs: Vec<(Vec<Vec<f64>>, SqeState)> = inits
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let stream = STREAM_REPLICA + i as u64;
            let mut rng = rng_stream(seed, stream);
            let mut state = engine.init(&x0.to_real_unchecked(), i as u64, &mut rng)?;
            let eval = |s: &SqeState| observables.iter().map(|o| o.eval_spectral(&s.x)).collect::<Vec<f64>>();
            let mut rows = vec![eval(&state)];
            for k in 1..=steps {
                engine.step(&mut state, &mut rng)?;
                if record(k) {
                    rows.push(eval(&state));
                }
            }
            Ok((rows, state))
        })
        .collect::<Result<_>>()?;
    let (values, finals) = runs.into_iter().unzip();
    Ok(EnsembleRun {
        ids: observables.iter().map(|o| o.id.clone()).collect(),
        times,
        values,
        finals,
    })
}

/// Moments at `t = 0, T/2, T` against each other, for observables `0..count`.
pub fn stationarity_checks(run: &EnsembleRun, count: usize, threshold: f64) -> Vec<Check> {
    let last = run.times.len() - 1;
    let t_end = run.times[last];
    let mid = run
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 0.5 * t_end).abs().total_cmp(&(b.1 - 0.5 * t_end).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let idx = [0, mid, last];
    let mut checks = Vec::new();
    for obs in 0..count {
        let m: Vec<[(f64, f64); 4]> = idx.iter().map(|&ti| raw_moments(&run.at_time(ti, obs))).collect();
        for k in 0..4 {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                let (va, ea) = m[a][k];
                let (vb, eb) = m[b][k];
                let z = z_score(va, ea, vb, eb);
                checks.push(Check::flag(
                    format!("{}_m{}_t{}_vs_t{}", run.ids[obs], k + 1, ["0", "T/2", "T"][a], ["0", "T/2", "T"][b]),
                    va,
                    vb,
                    (ea * ea + eb * eb).sqrt(),
                    z.abs(),
                    z.abs() <= threshold,
                ));
            }
        }
    }
    checks
}

/// Replica-averaged time means of `x^k` against an independent chain series.
pub fn oracle_checks(run: &EnsembleRun, chain_series: &[Vec<f64>], batches: usize, threshold: f64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (obs, series) in chain_series.iter().enumerate() {
        for k in 1..=4 {
            let per_replica: Vec<f64> = run
                .values
                .iter()
                .map(|r| r.iter().map(|row| row[obs].powi(k)).sum::<f64>() / r.len() as f64)
                .collect();
            let (vs, es) = mean_and_error(&per_replica);
            let p: Vec<f64> = series.iter().map(|x| x.powi(k)).collect();
            let (vc, ec) = batch_means(&p, batches)?;
            let z = z_score(vs, es, vc, ec);
            checks.push(Check::flag(
                format!("{}_m{k}_sqe_vs_pcn", run.ids[obs]),
                vs,
                vc,
                (es * es + ec * ec).sqrt(),
                z.abs(),
                z.abs() <= threshold,
            ));
        }
    }
    Ok(checks)
}

/// Octahedral symmetry check on an ensemble that recorded `probe.observables()` at columns `offset..`.
pub fn symmetry_checks(probe: &SymmetryProbe, table: &SampleTable, batches: usize, threshold: f64) -> Result<(Vec<Check>, Value)> {
    let report = symmetry_test(probe, table, batches, threshold)?;
    let check = Check::flag("octahedral_max_z", report.max_z, 0.0, 1.0, report.max_z, report.pass);
    let worst = report
        .entries
        .iter()
        .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
        .cloned();
    Ok((vec![check], json!({ "comparisons": report.entries.len(), "worst": worst })))
}

/// Reflection-positivity Gram check on columns `reflected` / `plain`.
pub fn rp_checks(
    name: &str,
    reflected: &[Vec<f64>],
    plain: &[Vec<f64>],
    gaussian: Option<&nalgebra::DMatrix<Complex64>>,
    threshold: f64,
) -> Result<(Vec<Check>, Value)> {
    let r = rp_gram(reflected, plain, gaussian)?;
    let mut checks = vec![Check::flag(
        format!("{name}_min_eigenvalue"),
        r.min_eigenvalue,
        0.0,
        r.error,
        -r.min_eigenvalue / r.error.max(f64::MIN_POSITIVE),
        r.min_eigenvalue >= -threshold * r.error,
    )];
    if let Some(z) = r.gaussian_max_z {
        checks.push(Check::flag(format!("{name}_gaussian_closed_form"), z, 0.0, 1.0, z, z <= threshold));
    }
    Ok((checks, serde_json::to_value(&r)?))
}

// ---------------------------------------------------------------- integrator

/// Exact bookkeeping of the `lambda = 0` law: drift vanishes identically and the
/// per-step coefficients propagate mode variances to `c (1 - e^{-2 w t})`.
pub fn free_dynamics_defect(engine: &Sqe, steps: usize, seed: u64) -> Result<f64> {
    if engine.params().lambda != 0.0 {
        return Err(Error::InvalidParameter("free dynamics check needs lambda = 0".into()));
    }
    let ff = engine.free_field();
    let mut rng = rng_stream(seed, STREAM_GAUSS);
    let (drift, _) = engine.drift_spectral(&ff.sample_spectral(&mut rng));
    let mut defect = drift.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let prop = engine.propagator();
    let stat = ff.mode_variances();
    let w = ff.omega().values();
    let mut var = vec![0.0; stat.len()];
    for k in 1..=steps {
        var = prop.propagate_variance(&var);
        let t = k as f64 * engine.dt();
        for i in 0..var.len() {
            let exact = stat[i] * -(-2.0 * w[i] * t).exp_m1();
            defect = defect.max((var[i] - exact).abs() / exact);
        }
    }
    Ok(defect)
}

/// Statistic of `<f, X_T>` whose weak error is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakStat {
    Mean,
    Variance,
}

/// `<f, X_T>` on coupled direct-mode paths from `x0`, one column per level.
///
/// Column `i < levels.len()` uses `dt = T 2^-levels[i]`; the last column is the
/// reference at four times the finest requested resolution.
pub struct CoupledFinals {
    pub dts: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn coupled_finals(
    model: &Model,
    x0: &RealField,
    f: &RealField,
    t_end: f64,
    levels: &[u32],
    paths: usize,
    seed: u64,
) -> Result<CoupledFinals> {
    let finest = *levels.iter().max().ok_or_else(|| Error::InvalidParameter("no levels".into()))? + 2;
    let grid = model.grid();
    let engine = model.engine(Mode::Direct)?;
    let ff = FreeField::new(grid, model.params.m0sq);
    let w = ff.omega().values().to_vec();
    let h0 = t_end / 2f64.powi(finest as i32);
    let std = OuPropagator::new(&ff, h0)?.noise_std().to_vec();
    let fs = f.to_spectral();
    let mut all_levels: Vec<u32> = levels.to_vec();
    all_levels.push(finest);
    let values: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_stream(seed, STREAM_TREE + p as u64);
            let mut incs: Vec<Vec<Complex64>> = (0..1usize << finest)
                .map(|_| ff.noise().sample(&std, &mut rng).coeffs().to_vec())
                .collect();
            let mut by_level = BTreeMap::new();
            let mut h = h0;
            for level in (0..=finest).rev() {
                let next: Vec<Vec<Complex64>> = incs
                    .chunks(2)
                    .filter(|c| c.len() == 2)
                    .map(|c| c[0].iter().zip(&c[1]).zip(&w).map(|((a, b), wi)| a * (-h * wi).exp() + b).collect())
                    .collect();
                if all_levels.contains(&level) {
                    by_level.insert(level, (h, std::mem::replace(&mut incs, next)));
                } else {
                    incs = next;
                }
                h *= 2.0;
            }
            all_levels
                .iter()
                .map(|level| {
                    let (h, incs) = &by_level[level];
                    let mut state = engine.init(x0, p as u64, &mut rng)?;
                    for inc in incs {
                        engine.step_with_noise(&mut state, *h, inc)?;
                    }
                    Ok(fs.pairing(&state.x))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(CoupledFinals {
        dts: all_levels.iter().map(|l| t_end / 2f64.powi(*l as i32)).collect(),
        values,
    })
}

/// `(dt, error, standard error)` per level against the reference column.
pub fn weak_errors(finals: &CoupledFinals, stat: WeakStat) -> Result<Vec<(f64, f64, f64)>> {
    let paths = finals.values.len();
    let reference = finals.dts.len() - 1;
    let eval = |col: usize, keep: &dyn Fn(usize) -> bool| {
        let xs: Vec<f64> = finals.values.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, r)| r[col]).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        match stat {
            WeakStat::Mean => m,
            WeakStat::Variance => xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0),
        }
    };
    (0..reference)
        .map(|col| {
            let (v, e) = jackknife(paths, 20.min(paths), |keep| eval(col, keep) - eval(reference, keep))?;
            Ok((finals.dts[col], v, e))
        })
        .collect()
}

/// Monotone decrease of `|error|` along halving steps, plus the fitted order.
pub fn weak_error_checks(errors: &[(f64, f64, f64)]) -> (Vec<Check>, f64) {
    let mags: Vec<f64> = errors.iter().map(|e| e.1.abs()).collect();
    let monotone = mags.windows(2).all(|w| w[1] < w[0]);
    let n = errors.len() as f64;
    let xs: Vec<f64> = errors.iter().map(|e| e.0.log2()).collect();
    let ys: Vec<f64> = mags.iter().map(|m| m.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let order = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let checks = vec![Check::flag(
        "weak_error_monotone",
        mags.last().copied().unwrap_or(0.0),
        0.0,
        errors.last().map(|e| e.2).unwrap_or(0.0),
        order,
        monotone,
    )];
    (checks, order)
}

// ------------------------------------------------------------------ nongauss

/// `kappa_4` of a narrow bump under importance sampling from the free field.
pub fn kappa4_check(model: &Model, width: f64, samples: usize, seed: u64) -> Result<(Check, Value)> {
    let target = model.target()?;
    let obs = [Observable::smeared("bump", gaussian_bump(model.grid(), [0.0; 3], width))];
    let mut rng = rng_stream(seed, STREAM_ORACLE);
    let ws = importance_samples(&target, &obs, samples, &mut rng);
    let ess = crate::mcmc::effective_sample_size(&ws);
    let k = kappa4_importance(&ws, 0)?;
    let z = k.value / k.error;
    Ok((
        Check::flag("kappa4_nonzero", k.value, 0.0, k.error, z.abs(), z.abs() > 3.0),
        json!({ "width": width, "samples": samples, "ess": ess, "kappa4": k }),
    ))
}

/// Deterministic tree moment against its Monte Carlo counterpart.
pub fn tree_moment_check(
    params: &ModelParams,
    cut: &CutoffPair,
    f: &RealField,
    quad: &QuadratureSpec,
    mc: &TreeMcSpec,
    seed: u64,
    batches: usize,
    threshold: f64,
) -> Result<(Check, Value)> {
    let det = tree_moment(params, cut, f, quad)?;
    let mut rng = rng_stream(seed, STREAM_TREE);
    let xs = tree_moment_mc(params, cut, f, mc, 0, &mut rng)?;
    let (m, e) = batch_means(&xs, batches)?;
    Ok((
        Check::z("tree_moment_mc_vs_quadrature", m, det.finite, e, threshold),
        json!({ "finite": det.finite, "limit": det.limit, "mc": m, "mc_error": e, "mc_spec": mc, "M": cut.m(), "N": cut.n() }),
    ))
}

/// Log2-slope of the block-probe tree integrals over `j = 0..=3`.
pub fn block_slope_check(params: &ModelParams, grid: GridSpec, quad: &QuadratureSpec) -> Result<(Check, Value)> {
    let partition = DyadicPartition::new(grid)?;
    let js = [0, 1, 2, 3];
    let (values, _) = block_tree_integrals(params, &partition, &js, grid.origin(), quad)?;
    let slope = log2_slope(&js, &values);
    let local: Vec<f64> = values.windows(2).map(|w| (w[1] / w[0]).abs().log2()).collect();
    Ok((
        Check::flag("block_probe_log2_slope", slope, 1.0, 0.15, (slope - 1.0).abs(), (slope - 1.0).abs() <= 0.15),
        json!({ "n": grid.n(), "L": grid.half_length(), "values": values, "slope": slope, "local_slopes": local }),
    ))
}

// -------------------------------------------------------------------- suites

/// Holds models computed so far, so `all` pays for each `C_2` quadrature once.
pub struct Session {
    pub config: RunConfig,
    models: BTreeMap<u32, Model>,
}

impl Session {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            models: BTreeMap::new(),
        }
    }

    pub fn model(&mut self, n: u32) -> Result<&Model> {
        if !self.models.contains_key(&n) {
            log::info!("computing renormalization constants at N={n}");
            let m = Model::build(&self.config, n)?;
            self.models.insert(n, m);
        }
        Ok(&self.models[&n])
    }

    fn out(&self, name: &str) -> std::path::PathBuf {
        self.config.out_dir.join(name)
    }
}

/// Runs `name` (or every suite for `all`), writing `<suite>.json` and `summary.json`.
pub fn run_suite(config: &RunConfig, name: SuiteName) -> Result<Vec<Report>> {
    fs::create_dir_all(&config.out_dir)?;
    let mut session = Session::new(config.clone());
    let names: Vec<SuiteName> = if name == SuiteName::All { SuiteName::EACH.to_vec() } else { vec![name] };
    let mut reports = Vec::new();
    for n in names {
        log::info!("suite {n}");
        let report = run_one(&mut session, n).map_err(|e| Error::Config(format!("suite {n}: {e}")))?;
        report.write(&session.out(&format!("{n}.json")))?;
        reports.push(report);
    }
    let summary = Summary::of(&reports);
    fs::write(session.out("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(reports)
}

fn run_one(s: &mut Session, name: SuiteName) -> Result<Report> {
    let c = s.config.clone();
    let grid = c.grid_spec()?;
    let th = c.sampling.threshold;
    let (checks, data) = match name {
        SuiteName::FreeField => free_field_checks(grid, c.model.m0sq, c.sampling.samples, c.seed, th)?,
        SuiteName::OuCovariance => {
            let cut = c.cutoffs_at(c.cutoffs.n)?;
            let triples = default_triples(grid, c.model.m0sq);
            ou_covariance_checks(&c.model_params(), &cut, &triples, c.sampling.samples, c.seed, th)?
        }
        SuiteName::Renorm => {
            let mut levels = Vec::new();
            for &n in &c.cutoffs.schedule {
                levels.push(s.model(n)?.constants.clone());
            }
            let psi = c.cutoffs_at(c.cutoffs.n)?.psi().clone();
            let top = c.cutoffs.schedule.iter().copied().max().unwrap_or(c.cutoffs.n).max(5);
            let (checks, mut data) = renorm_checks(&levels, c.model.m0sq, &psi, 5)?;
            let extra: Vec<(u32, f64)> = (1..=top + 4)
                .map(|n| c1_continuum(c.model.m0sq, n, &psi).map(|v| (n, v)))
                .collect::<Result<_>>()?;
            data["c1_continuum"] = json!(extra);
            data["constants"] = serde_json::to_value(&levels)?;
            (checks, data)
        }
        SuiteName::Wick => {
            let model = s.model(c.cutoffs.n)?;
            let samples = (c.sampling.samples / 10).max(100 * c.sampling.batches);
            wick_checks(model, samples, 10, c.seed, c.sampling.batches, th)?
        }
        SuiteName::Stationarity | SuiteName::OracleCompare | SuiteName::Symmetry => {
            let model = s.model(c.cutoffs.n)?.clone();
            dynamic_suite(s, &model, name)?
        }
        SuiteName::Rp => {
            let model = s.model(c.cutoffs.n)?.clone();
            rp_suite(&model)?
        }
        SuiteName::Support => support_suite(s)?,
        SuiteName::Nongauss => {
            let model = s.model(c.cutoffs.n)?.clone();
            nongauss_suite(&model)?
        }
        SuiteName::All => unreachable!("expanded by run_suite"),
    };
    Ok(Report::new(name.as_str(), &c, checks, data))
}

fn dynamic_suite(s: &Session, model: &Model, name: SuiteName) -> Result<(Vec<Check>, Value)> {
    let c = &s.config;
    let grid = model.grid();
    let th = c.sampling.threshold;
    let target = model.target()?;
    let (inits, chain) = pcn_samples(&target, &c.mcmc, c.sampling.replicas, c.seed, STREAM_CHAIN)?;
    let engine = model.engine(c.integrator.mode)?;
    let base = invariance_observables(grid);
    let mut obs = base.clone();
    let probe = SymmetryProbe::new(symmetry_base(grid)[..1].to_vec(), octahedral_group())?;
    if name == SuiteName::Symmetry {
        obs.extend(probe.observables());
    }
    let run = run_ensemble(&engine, &inits, c.t_end(), c.integrator.thinning, &obs, c.seed)?;
    let meta = json!({
        "replicas": inits.len(), "pcn_beta": chain.beta, "pcn_acceptance": chain.acceptance,
        "times": run.times.len(), "mode": c.integrator.mode,
    });
    match name {
        SuiteName::Stationarity => {
            write_series(&s.out("stationarity.csv"), &run.series(0..base.len()))?;
            let finals: Vec<RealField> = run.finals.iter().map(|st| st.field()).collect();
            snapshot::write(&s.out("stationarity_final.phi4"), &finals, c.seed)?;
            Ok((stationarity_checks(&run, base.len(), th), meta))
        }
        SuiteName::OracleCompare => {
            let mut cfg = c.mcmc.clone();
            cfg.length = cfg.burn_in + c.sampling.samples.max(cfg.thinning * c.sampling.batches) ;
            let mut rng = rng_stream(c.seed, STREAM_ORACLE);
            let init = RealField::zeros(grid);
            let chain = run_chain(&target, &init, &cfg, &base, STREAM_ORACLE, &mut rng, |_| {})?;
            let checks = oracle_checks(&run, &chain.series, c.sampling.batches, th)?;
            Ok((checks, json!({ "ensemble": meta, "chain_kept": chain.kept, "tau_int": chain.tau_int })))
        }
        _ => {
            let table = run.table(base.len()..obs.len(), true);
            let (checks, data) = symmetry_checks(&probe, &table, c.sampling.replicas.max(2), th)?;
            Ok((checks, json!({ "ensemble": meta, "symmetry": data })))
        }
    }
}

fn rp_suite(model: &Model) -> Result<(Vec<Check>, Value)> {
    let c = &model.config;
    let grid = model.grid();
    let fs = rp_functions(grid, c.seed);
    let (refl, plain) = rp_observables(&fs)?;
    let all: Vec<Observable> = refl.iter().chain(&plain).cloned().collect();
    let k = refl.len();
    let target = model.target()?;
    let mut cols = vec![Vec::new(); all.len()];
    pcn_visit(&target, &c.mcmc, c.sampling.samples / 10, c.seed, STREAM_CHAIN, |phi| {
        for (col, o) in cols.iter_mut().zip(&all) {
            col.push(o.eval_spectral(phi));
        }
    })?;
    let (mut checks, interacting) = rp_checks("interacting", &cols[..k], &cols[k..], None, c.sampling.threshold)?;
    let ff = FreeField::new(grid, model.params.m0sq);
    let mut rng = rng_stream(c.seed, STREAM_GAUSS);
    let cols = gaussian_columns(&ff, &all, c.sampling.samples, &mut rng);
    let (a, b) = cols.split_at(k);
    let closed = gaussian_rp_matrix(&fs, model.params.m0sq);
    let (more, free) = rp_checks("free", &a, &b, Some(&closed), c.sampling.threshold)?;
    checks.extend(more);
    Ok((checks, json!({ "interacting": interacting, "free": free })))
}

fn support_suite(s: &mut Session) -> Result<(Vec<Check>, Value)> {
    let c = s.config.clone();
    let grid = c.grid_spec()?;
    let partition = DyadicPartition::new(grid)?;
    let eps = 0.1;
    let p = 2.0;
    let count = (c.sampling.samples / 10).max(c.sampling.batches * 5);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut prev: Option<(u32, f64, f64)> = None;
    for &n in &c.cutoffs.schedule {
        let model = s.model(n)?.clone();
        let target = model.target()?;
        let mut norms = Vec::with_capacity(count);
        let mut failure = None;
        pcn_visit(&target, &c.mcmc, count, c.seed, STREAM_CHAIN + n as u64, |phi| {
            match besov_sq_norm(&phi.to_real_unchecked(), &partition, model.cut.weight(), eps, p) {
                Ok(v) => norms.push(v),
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let est = besov_support_estimate(&norms, c.sampling.batches)?;
        if let Some((pn, v, e)) = prev {
            let z = (est.value - v) / (est.error * est.error + e * e).sqrt();
            checks.push(Check::flag(format!("besov_growth_N{pn}_to_N{n}"), est.value, v, est.error, z, z <= c.sampling.threshold));
        }
        prev = Some((n, est.value, est.error));
        rows.push(json!({ "N": n, "estimate": est }));
    }
    Ok((checks, json!({ "eps": eps, "p": p, "samples_per_level": count, "levels": rows })))
}

fn nongauss_suite(model: &Model) -> Result<(Vec<Check>, Value)> {
    let c = &model.config;
    let th = c.sampling.threshold;
    let (k4, k4_data) = kappa4_check(model, 0.5, c.sampling.samples, c.seed)?;
    // tree moment with the space cutoff as large as the box allows
    let grid = model.grid();
    let m_big = (grid.half_length() / 2.0).floor().max(1.0) as u32;
    let n_top = c.cutoffs.schedule.iter().copied().max().unwrap_or(c.cutoffs.n).max(m_big);
    let cut = crate::cutoff::CutoffPair::new(grid, m_big, n_top, c.cutoffs.profile, model.cut.weight().clone())?;
    let f = gaussian_bump(grid, [0.0; 3], 1.0);
    let m0sq = model.params.m0sq;
    let mc = TreeMcSpec {
        dt: 0.05 / m0sq,
        burn_in: 10.0 / m0sq,
        spacing: 0.25 / m0sq,
        samples: c.sampling.samples,
    };
    let (tree, tree_data) = tree_moment_check(&model.params, &cut, &f, &c.quadrature, &mc, c.seed, c.sampling.batches, th)?;
    let fine = GridSpec::new(2 * grid.n(), grid.half_length() / 2.0)?;
    let (slope, slope_data) = block_slope_check(&model.params, fine, &c.quadrature)?;
    Ok((
        vec![k4, tree, slope],
        json!({ "kappa4": k4_data, "tree_moment": tree_data, "block_slope": slope_data }),
    ))
}

/// Creates `dir` if needed; used by callers that write next to the reports.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}
