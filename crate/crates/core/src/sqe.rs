//! Langevin dynamics for the cut-off measure, in direct and shifted form.
//!
//! Both integrators keep the state in spectral form and treat the linear part
//! exactly: `x <- e^{-dt w} x + (1 - e^{-dt w})/w * drift + eta` with `eta`
//! the exact OU increment. At `lambda = 0` this is the OU transition itself.
//!
//! In shifted mode the state is `x = X2 + Z - lambda Z03`, where `Z` is the
//! stationary OU field and `Z03` the cubic tree. Only `X2` sees the drift.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffPair;
use crate::diagnostics::Observable;
use crate::error::{Error, Result};
use crate::gff::{FreeField, ModelParams, OuPropagator, OuState};
use crate::grid::{GridSpec, RealField, SpectralField};
use crate::wick::{ExpWeights, RenormConstants, SourceRule, TreeSet, WickEvolver, DEFAULT_BURN_IN};
use crate::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Direct,
    Dpd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub mode: Mode,
    /// `None` means `0.01 / m0^2`.
    pub dt: Option<f64>,
    /// Bound on `max |P_{M,N} x|` before the run is declared divergent.
    pub guard: f64,
    /// Source rule for the cubic tree in shifted mode.
    pub source_rule: SourceRule,
    /// Tree burn-in for shifted mode; `None` means `10 / m0^2`.
    pub burn_in: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Direct,
            dt: None,
            guard: 1e6,
            source_rule: SourceRule::Trapezoid,
            burn_in: None,
        }
    }
}

impl IntegratorConfig {
    pub fn resolved_dt(&self, m0sq: f64) -> f64 {
        self.dt.unwrap_or(0.01 / m0sq)
    }

    pub fn resolved_burn_in(&self, m0sq: f64) -> f64 {
        self.burn_in.unwrap_or(DEFAULT_BURN_IN / m0sq)
    }
}

/// `v^3 - 3 C_* rho^2 v` with `v = P_{M,N} x`, before `P*_{M,N}`.
fn cubic_kernel(v: f64, cstar_rho2: f64) -> f64 {
    v * v * v - 3.0 * cstar_rho2 * v
}

/// `-lambda P*_{M,N}[(P_{M,N} x)^3 - 3 C_* rho_M^2 P_{M,N} x]` with `C_* = C_1 - 3 lambda C_2`.
pub fn nonlinear_drift(x: &RealField, cut: &CutoffPair, constants: &RenormConstants, lambda: f64) -> Result<RealField> {
    x.grid().check_same(cut.grid())?;
    if lambda == 0.0 {
        return Ok(RealField::zeros(*x.grid()));
    }
    let rho = cut.rho_m();
    let v = crate::cutoff::p_mn(x, cut, false)?;
    let cs = constants.c_star(lambda);
    let mut g = RealField::zeros(*x.grid());
    for i in 0..g.values().len() {
        let r = rho.at(i);
        g.values_mut()[i] = r * cubic_kernel(v.at(i), cs.at(i) * r * r);
    }
    Ok(crate::cutoff::p_n(&g, cut)?.scaled(-lambda))
}

/// Integrator state for one replica.
#[derive(Clone, Debug)]
pub struct SqeState {
    pub t: f64,
    /// Spectrum of the solution `x`.
    pub x: SpectralField,
    pub stream: u64,
    pub steps: u64,
    shifted: Option<Shifted>,
}

#[derive(Clone, Debug)]
struct Shifted {
    x2: SpectralField,
    wick: WickEvolver,
}

impl SqeState {
    pub fn mode(&self) -> Mode {
        if self.shifted.is_some() {
            Mode::Dpd
        } else {
            Mode::Direct
        }
    }

    pub fn field(&self) -> RealField {
        self.x.to_real_unchecked()
    }

    /// Remainder `X2` in shifted mode.
    pub fn remainder(&self) -> Option<&SpectralField> {
        self.shifted.as_ref().map(|s| &s.x2)
    }

    /// Companion OU/tree path in shifted mode.
    pub fn wick(&self) -> Option<&WickEvolver> {
        self.shifted.as_ref().map(|s| &s.wick)
    }

    /// `max |x - (X2 + Z - lambda Z03)|` relative to `max |x|` (zero in direct mode).
    pub fn reconstruction_defect(&self, lambda: f64) -> f64 {
        let Some(s) = &self.shifted else { return 0.0 };
        let z = s.wick.ou().z.coeffs();
        let t = s.wick.tree03_spectral().coeffs();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..z.len() {
            let r = s.x2.coeffs()[i] + z[i] - t[i] * lambda;
            num = num.max((self.x.coeffs()[i] - r).norm());
            den = den.max(self.x.coeffs()[i].norm());
        }
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

/// Shared, immutable data of the integrator for one `(params, M, N)`.
#[derive(Clone, Debug)]
pub struct Sqe {
    params: ModelParams,
    cut: CutoffPair,
    constants: RenormConstants,
    config: IntegratorConfig,
    ff: FreeField,
    prop: OuPropagator,
    /// `(1 - e^{-dt w}) / w`.
    e1: Vec<f64>,
    /// `C_* rho_M^2`.
    cstar_rho2: Vec<f64>,
    /// `9 lambda C_2 rho_M^2`.
    c2_shift: Vec<f64>,
}

impl Sqe {
    pub fn new(params: &ModelParams, cut: &CutoffPair, constants: &RenormConstants, config: &IntegratorConfig) -> Result<Self> {
        params.validate()?;
        let grid = *cut.grid();
        let dt = config.resolved_dt(params.m0sq);
        if !(config.guard > 0.0) {
            return Err(Error::InvalidParameter("guard must be positive".into()));
        }
        let ff = FreeField::new(grid, params.m0sq);
        let prop = ff.propagator(dt)?;
        let e1 = ExpWeights::new(ff.omega().values(), dt, SourceRule::Left).left;
        let rho = cut.rho_m().values();
        let cs = constants.c_star(params.lambda);
        let cstar_rho2 = cs.values().iter().zip(rho).map(|(c, r)| c * r * r).collect();
        let c2_shift = constants
            .c2_field()
            .values()
            .iter()
            .zip(rho)
            .map(|(c, r)| 9.0 * params.lambda * c * r * r)
            .collect();
        Ok(Self {
            params: *params,
            cut: cut.clone(),
            constants: constants.clone(),
            config: config.clone(),
            ff,
            prop,
            e1,
            cstar_rho2,
            c2_shift,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.cut.grid()
    }

    pub fn dt(&self) -> f64 {
        self.prop.dt()
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

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn free_field(&self) -> &FreeField {
        &self.ff
    }

    pub fn propagator(&self) -> &OuPropagator {
        &self.prop
    }

    /// Starts a replica at `x0`. Shifted mode draws `Z ~ mu_0`, burns the tree in,
    /// and sets `X2 = x0 - Z + lambda Z03`.
    pub fn init<R: Rng>(&self, x0: &RealField, stream: u64, rng: &mut R) -> Result<SqeState> {
        x0.grid().check_same(self.grid())?;
        let x = x0.to_spectral();
        let shifted = match self.config.mode {
            Mode::Direct => None,
            Mode::Dpd => {
                let ou = OuState::stationary(&self.ff, stream, rng);
                let mut wick = WickEvolver::from_state(
                    &self.params,
                    &self.cut,
                    self.constants.c1(),
                    self.dt(),
                    self.config.source_rule,
                    TreeSet::TREE03,
                    ou,
                )?;
                wick.burn_in(self.config.resolved_burn_in(self.params.m0sq), rng);
                let z = wick.ou().z.coeffs();
                let t = wick.tree03_spectral().coeffs();
                let lambda = self.params.lambda;
                let x2: Vec<Complex64> = (0..z.len()).map(|i| x.coeffs()[i] - z[i] + t[i] * lambda).collect();
                Some(Shifted {
                    x2: SpectralField::from_coeffs(*self.grid(), x2)?,
                    wick,
                })
            }
        };
        Ok(SqeState {
            t: 0.0,
            x,
            stream,
            steps: 0,
            shifted,
        })
    }

    /// Drift spectrum at `x` and `max |P_{M,N} x|`.
    pub fn drift_spectral(&self, x: &SpectralField) -> (Vec<Complex64>, f64) {
        let grid = *self.grid();
        let lambda = self.params.lambda;
        let mut y = x.clone();
        y.multiply(self.cut.psi_n());
        let mut v = y.to_real_unchecked().into_values();
        let rho = self.cut.rho_m().values();
        let mut vmax = 0.0f64;
        for i in 0..v.len() {
            let vi = rho[i] * v[i];
            vmax = vmax.max(vi.abs());
            if vi.is_nan() {
                vmax = f64::NAN;
            }
            v[i] = rho[i] * cubic_kernel(vi, self.cstar_rho2[i]);
        }
        (self.project_drift(v, grid, lambda), vmax)
    }

    /// `-lambda psi_N FFT(g)`.
    fn project_drift(&self, g: Vec<f64>, grid: GridSpec, lambda: f64) -> Vec<Complex64> {
        let mut s = RealField::from_values(grid, g).expect("grid-sized").to_spectral();
        let psi = self.cut.psi_n().values();
        for (c, p) in s.coeffs_mut().iter_mut().zip(psi) {
            *c *= -lambda * p;
        }
        s.coeffs().to_vec()
    }

    /// Shifted-mode drift of `X2` and `max |P_{M,N} x|`.
    fn shifted_drift(&self, s: &Shifted) -> (Vec<Complex64>, f64) {
        let grid = *self.grid();
        let lambda = self.params.lambda;
        let psi = self.cut.psi_n().values();
        let t = s.wick.tree03_spectral().coeffs();
        let coeffs: Vec<Complex64> = s
            .x2
            .coeffs()
            .iter()
            .zip(t)
            .zip(psi)
            .map(|((a, b), p)| (a - b * lambda) * p)
            .collect();
        let w = SpectralField::from_coeffs(grid, coeffs).expect("grid-sized").to_real_unchecked();
        let rho = self.cut.rho_m().values();
        let y = s.wick.pn_z().values();
        let c1 = self.constants.c1();
        let mut g = w.into_values();
        let mut vmax = 0.0f64;
        for i in 0..g.len() {
            let r = rho[i];
            let wi = r * g[i];
            let z1 = r * y[i];
            let z2 = r * r * (y[i] * y[i] - c1);
            let vi = wi + z1;
            vmax = vmax.max(vi.abs());
            if vi.is_nan() {
                vmax = f64::NAN;
            }
            g[i] = r * (wi * wi * wi + 3.0 * wi * wi * z1 + 3.0 * wi * z2 + self.c2_shift[i] * (wi + z1));
        }
        (self.project_drift(g, grid, lambda), vmax)
    }

    fn check_guard(&self, state: &SqeState, vmax: f64) -> Result<()> {
        if !(vmax <= self.config.guard) {
            return Err(Error::BlowUp {
                time: state.t,
                norm: vmax,
            });
        }
        Ok(())
    }

    /// One step of the configured integrator.
    pub fn step<R: Rng>(&self, state: &mut SqeState, rng: &mut R) -> Result<()> {
        match state.shifted.as_mut() {
            None => {
                let (drift, vmax) = self.drift_spectral(&state.x);
                self.check_guard(state, vmax)?;
                self.prop.step(&mut state.x, self.ff.noise(), rng);
                if self.params.lambda != 0.0 {
                    for ((c, d), e) in state.x.coeffs_mut().iter_mut().zip(&drift).zip(&self.e1) {
                        *c += d * e;
                    }
                }
            }
            Some(_) => {
                let s = state.shifted.as_ref().expect("shifted");
                let (drift, vmax) = self.shifted_drift(s);
                self.check_guard(state, vmax)?;
                let s = state.shifted.as_mut().expect("shifted");
                let decay = self.prop.decay();
                for (i, c) in s.x2.coeffs_mut().iter_mut().enumerate() {
                    *c = *c * decay[i] + drift[i] * self.e1[i];
                }
                s.wick.step(rng);
                let z = s.wick.ou().z.coeffs();
                let t = s.wick.tree03_spectral().coeffs();
                let lambda = self.params.lambda;
                for (i, c) in state.x.coeffs_mut().iter_mut().enumerate() {
                    *c = s.x2.coeffs()[i] + z[i] - t[i] * lambda;
                }
            }
        }
        state.t += self.dt();
        state.steps += 1;
        Ok(())
    }

    /// Direct-mode step over `h` with a caller-supplied exact OU increment.
    ///
    /// Used for coupled runs at different step sizes: the increment over `2h`
    /// is `e^{-h w} eta_1 + eta_2` when `eta_1, eta_2` are the two `h` increments.
    pub fn step_with_noise(&self, state: &mut SqeState, h: f64, noise: &[Complex64]) -> Result<()> {
        if state.shifted.is_some() {
            return Err(Error::InvalidParameter("coupled stepping is direct-mode only".into()));
        }
        let (drift, vmax) = self.drift_spectral(&state.x);
        self.check_guard(state, vmax)?;
        let w = self.ff.omega().values();
        for (i, c) in state.x.coeffs_mut().iter_mut().enumerate() {
            let x = h * w[i];
            let e1 = -(-x).exp_m1() / w[i];
            *c = *c * (-x).exp() + drift[i] * e1 + noise[i];
        }
        state.t += h;
        state.steps += 1;
        Ok(())
    }
}

/// `sqe_step`: one step of `engine` on `state`.
pub fn sqe_step<R: Rng>(engine: &Sqe, state: &mut SqeState, rng: &mut R) -> Result<()> {
    engine.step(state, rng)
}

/// Integration horizon and output thinning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_end: f64,
    /// Observe every `thinning` steps (and at `t = 0`).
    pub thinning: usize,
}

/// One observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub id: String,
    pub value: f64,
    pub replica: u64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub series: Vec<SeriesRow>,
    pub state: SqeState,
}

/// Runs `state` to `schedule.t_end`, observing every `thinning` steps.
pub fn run_trajectory<R: Rng>(
    engine: &Sqe,
    mut state: SqeState,
    schedule: Schedule,
    observers: &[Observable],
    rng: &mut R,
) -> Result<Trajectory> {
    if schedule.thinning == 0 {
        return Err(Error::InvalidParameter("thinning must be at least 1".into()));
    }
    let steps = (schedule.t_end / engine.dt()).round() as usize;
    let mut series = Vec::new();
    let observe = |state: &SqeState, series: &mut Vec<SeriesRow>| {
        if observers.is_empty() {
            return;
        }
        for o in observers {
            series.push(SeriesRow {
                t: state.t,
                id: o.id.clone(),
                value: o.eval_spectral(&state.x),
                replica: state.stream,
            });
        }
    };
    observe(&state, &mut series);
    for k in 1..=steps {
        engine.step(&mut state, rng)?;
        if k % schedule.thinning == 0 {
            observe(&state, &mut series);
        }
    }
    Ok(Trajectory { series, state })
}
