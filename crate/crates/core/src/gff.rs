//! Free field `mu_0` and the stationary Ornstein–Uhlenbeck process.
//!
//! Both are generated directly in spectral coordinates. With the grid
//! convention (see [`crate::grid`]) the raw DFT coefficient of a field with
//! covariance symbol `g(k)` has variance `n^3 g(k) / h^3`. Pairs `(m, -m)`
//! share one complex draw; self-conjugate modes get a real draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffPair;
use crate::error::{Error, Result};
use crate::grid::{apply_table, GridSpec, RealField, SpectralField, SymbolTable};
use crate::Complex64;

/// Physical parameters of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m0sq: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub a: f64,
}

impl ModelParams {
    pub fn new(m0sq: f64, lambda: f64, sigma: f64, a: f64) -> Result<Self> {
        let p = Self {
            m0sq,
            lambda,
            sigma,
            a,
        };
        p.validate()?;
        for w in p.warnings() {
            log::warn!("{w}");
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m0sq > 0.0 && self.m0sq.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mass squared must be positive (m0sq={})",
                self.m0sq
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coupling must satisfy lambda >= 0 (lambda={})",
                self.lambda
            )));
        }
        if !(self.sigma >= 0.0 && self.a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight needs sigma >= 0 and a > 0 (sigma={}, a={})",
                self.sigma, self.a
            )));
        }
        Ok(())
    }

    /// Soft constraint violations: `m0^2 > 9/2` and, for `a = 1`, `9 < sigma^2 < 2 m0^2`.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m0sq <= 4.5 {
            out.push(format!("m0^2 = {} does not satisfy m0^2 > 9/2", self.m0sq));
        }
        let s2 = self.sigma * self.sigma;
        if self.a == 1.0 && !(9.0 < s2 && s2 < 2.0 * self.m0sq) {
            out.push(format!(
                "sigma = {} violates 9 < sigma^2 < 2 m0^2 (= {})",
                self.sigma,
                2.0 * self.m0sq
            ));
        }
        out
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    /// `omega_k = |k|^2 + m0^2` on the lattice.
    pub fn dispersion(&self, grid: GridSpec) -> SymbolTable {
        SymbolTable::dispersion(grid, self.m0sq)
    }
}

/// Independent RNG stream `replica` derived from `seed`.
pub fn rng_stream(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Generator of Hermitian Gaussian spectra with a given per-mode variance.
#[derive(Clone, Debug)]
pub struct HermitianNoise {
    grid: GridSpec,
    /// `(index, partner)` with `index <= partner`, one entry per orbit.
    orbits: Vec<(usize, usize)>,
}

impl HermitianNoise {
    pub fn new(grid: GridSpec) -> Self {
        let orbits = (0..grid.len())
            .filter_map(|i| {
                let p = grid.partner(i);
                (i <= p).then_some((i, p))
            })
            .collect();
        Self { grid, orbits }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Adds `sqrt(var)`-scaled Hermitian noise to `out`.
    pub fn add_to<R: rand::Rng>(&self, out: &mut [Complex64], std: &[f64], rng: &mut R) {
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for &(i, p) in &self.orbits {
            if i == p {
                let g: f64 = StandardNormal.sample(rng);
                out[i].re += std[i] * g;
            } else {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                let c = Complex64::new(a, b) * (std[i] * half);
                out[i] += c;
                out[p] += c.conj();
            }
        }
    }

    pub fn sample<R: rand::Rng>(&self, std: &[f64], rng: &mut R) -> SpectralField {
        let mut s = SpectralField::zeros(self.grid);
        self.add_to(s.coeffs_mut(), std, rng);
        s
    }
}

/// Stationary OU / free-field spectral data for one grid and mass.
#[derive(Clone, Debug)]
pub struct FreeField {
    grid: GridSpec,
    m0sq: f64,
    omega: SymbolTable,
    /// Stationary variance of each raw DFT coefficient.
    mode_var: Vec<f64>,
    mode_std: Vec<f64>,
    noise: HermitianNoise,
}

impl FreeField {
    pub fn new(grid: GridSpec, m0sq: f64) -> Self {
        let omega = SymbolTable::dispersion(grid, m0sq);
        let scale = grid.len() as f64 / grid.cell_volume();
        let mode_var: Vec<f64> = omega.values().iter().map(|w| scale / (2.0 * w)).collect();
        let mode_std = mode_var.iter().map(|v| v.sqrt()).collect();
        Self {
            grid,
            m0sq,
            omega,
            mode_var,
            mode_std,
            noise: HermitianNoise::new(grid),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn m0sq(&self) -> f64 {
        self.m0sq
    }

    pub fn omega(&self) -> &SymbolTable {
        &self.omega
    }

    pub fn mode_variances(&self) -> &[f64] {
        &self.mode_var
    }

    pub fn noise(&self) -> &HermitianNoise {
        &self.noise
    }

    /// A draw from `mu_0` in spectral form.
    pub fn sample_spectral<R: rand::Rng>(&self, rng: &mut R) -> SpectralField {
        self.noise.sample(&self.mode_std, rng)
    }

    /// Exact OU transition for step `dt`.
    pub fn propagator(&self, dt: f64) -> Result<OuPropagator> {
        OuPropagator::new(self, dt)
    }
}

/// `sample_gff`: a draw from the free field with covariance `[2(m0^2 - Laplacian)]^{-1}`.
pub fn sample_gff<R: rand::Rng>(grid: GridSpec, params: &ModelParams, rng: &mut R) -> RealField {
    FreeField::new(grid, params.m0sq)
        .sample_spectral(rng)
        .to_real_unchecked()
}

/// Per-mode decay and noise amplitude of the exact OU update over `dt`.
#[derive(Clone, Debug)]
pub struct OuPropagator {
    dt: f64,
    decay: Vec<f64>,
    noise_std: Vec<f64>,
    noise_var: Vec<f64>,
}

impl OuPropagator {
    pub fn new(ff: &FreeField, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive (dt={dt})"
            )));
        }
        let decay: Vec<f64> = ff.omega.values().iter().map(|w| (-dt * w).exp()).collect();
        let noise_var: Vec<f64> = ff
            .omega
            .values()
            .iter()
            .zip(&ff.mode_var)
            .map(|(w, v)| -(-2.0 * dt * w).exp_m1() * v)
            .collect();
        let noise_std = noise_var.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            dt,
            decay,
            noise_std,
            noise_var,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn noise_var(&self) -> &[f64] {
        &self.noise_var
    }

    /// Deterministic part of the update, in place.
    pub fn decay_in_place(&self, z: &mut [Complex64]) {
        for (c, d) in z.iter_mut().zip(&self.decay) {
            *c *= *d;
        }
    }

    /// Full exact update `z <- e^{-dt omega} z + eta`.
    pub fn step<R: rand::Rng>(&self, z: &mut SpectralField, noise: &HermitianNoise, rng: &mut R) {
        self.decay_in_place(z.coeffs_mut());
        noise.add_to(z.coeffs_mut(), &self.noise_std, rng);
    }

    /// Mode variance after one step from variance `var`.
    pub fn propagate_variance(&self, var: &[f64]) -> Vec<f64> {
        var.iter()
            .zip(self.decay.iter().zip(&self.noise_var))
            .map(|(v, (d, q))| d * d * v + q)
            .collect()
    }
}

/// Stationary OU state, kept in spectral form.
#[derive(Clone, Debug)]
pub struct OuState {
    pub t: f64,
    pub z: SpectralField,
    pub stream: u64,
}

impl OuState {
    /// Stationary start `Z_0 ~ mu_0`.
    pub fn stationary<R: rand::Rng>(ff: &FreeField, stream: u64, rng: &mut R) -> Self {
        Self {
            t: 0.0,
            z: ff.sample_spectral(rng),
            stream,
        }
    }

    pub fn field(&self) -> RealField {
        self.z.to_real_unchecked()
    }
}

/// Advances `state` by the exact OU transition over `dt`.
pub fn ou_step<R: rand::Rng>(
    state: &mut OuState,
    ff: &FreeField,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    let prop = ff.propagator(dt)?;
    prop.step(&mut state.z, ff.noise(), rng);
    state.t += dt;
    Ok(())
}

/// Symbol of `V_N(t) = P_N^2 [2(m0^2 - Laplacian)]^{-1} e^{t(Laplacian - m0^2)}`.
pub fn v_n_symbol(cut: &CutoffPair, m0sq: f64, t: f64) -> Result<SymbolTable> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("lag must be >= 0 (t={t})")));
    }
    let grid = *cut.grid();
    let base = SymbolTable::radial(grid, |k| {
        let w = k * k + m0sq;
        (-t * w).exp() / (2.0 * w)
    });
    Ok(base.product(cut.psi_n_sq()))
}

/// `covariance_op`: `V_N(t) f`.
pub fn covariance_op(f: &RealField, t: f64, cut: &CutoffPair, params: &ModelParams) -> Result<RealField> {
    apply_table(f, &v_n_symbol(cut, params.m0sq, t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_and_error;

    fn grid() -> GridSpec {
        GridSpec::new(8, 2.0).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::new(5.0, 0.0, 3.1, 1.0).unwrap()
    }

    fn lattice_variance(g: GridSpec, m0sq: f64) -> f64 {
        SymbolTable::resolvent(g, m0sq).kernel_at_origin()
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(-1.0, 0.0, 3.1, 1.0).is_err());
        assert!(ModelParams::new(5.0, -0.5, 3.1, 1.0).is_err());
        let p = ModelParams::new(5.0, 0.5, 2.0, 1.0).unwrap();
        assert!(p.warnings().iter().any(|w| w.contains("9 < sigma^2")));
        assert!(params().warnings().is_empty());
        assert!(ModelParams::new(4.0, 0.5, 3.1, 1.0).unwrap().warnings().len() == 2);
    }

    #[test]
    fn noise_is_hermitian_and_real() {
        let g = grid();
        let ff = FreeField::new(g, 5.0);
        let mut rng = rng_stream(1, 0);
        let s = ff.sample_spectral(&mut rng);
        assert!(s.hermitian_defect() < 1e-15);
        assert!(s.to_real().is_ok());
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        use rand::Rng;
        let a: f64 = rng_stream(7, 0).gen();
        let b: f64 = rng_stream(7, 0).gen();
        let c: f64 = rng_stream(7, 1).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gff_point_variance() {
        let g = grid();
        let ff = FreeField::new(g, 5.0);
        let mut rng = rng_stream(2, 0);
        let x0 = g.origin();
        let samples: Vec<f64> = (0..10_000)
            .map(|_| ff.sample_spectral(&mut rng).eval_at(x0))
            .collect();
        let (m, e) = mean_and_error(&samples);
        assert!(m.abs() < 4.0 * e, "mean {m} +- {e}");
        let sq: Vec<f64> = samples.iter().map(|v| v * v).collect();
        let (v, ev) = mean_and_error(&sq);
        let expect = lattice_variance(g, 5.0);
        assert!((v - expect).abs() < 4.0 * ev, "{v} vs {expect} +- {ev}");
    }

    #[test]
    fn ou_keeps_stationary_variances_exactly() {
        let ff = FreeField::new(grid(), 5.0);
        let prop = ff.propagator(0.013).unwrap();
        let mut var = ff.mode_variances().to_vec();
        for _ in 0..100 {
            var = prop.propagate_variance(&var);
        }
        for (a, b) in var.iter().zip(ff.mode_variances()) {
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn markov_consistency() {
        let ff = FreeField::new(grid(), 5.0);
        let p1 = ff.propagator(0.02).unwrap();
        let p2 = ff.propagator(0.05).unwrap();
        let p12 = ff.propagator(0.07).unwrap();
        let zero = vec![0.0; grid().len()];
        let two = p2.propagate_variance(&p1.propagate_variance(&zero));
        let one = p12.propagate_variance(&zero);
        for (a, b) in two.iter().zip(&one) {
            assert!((a - b).abs() < 1e-12 * b.max(1e-300));
        }
        for i in 0..grid().len() {
            assert!((p1.decay()[i] * p2.decay()[i] - p12.decay()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_mode_autocorrelation() {
        let g = grid();
        let ff = FreeField::new(g, 5.0);
        let mut rng = rng_stream(3, 0);
        let tau = 0.1;
        let prop = ff.propagator(tau).unwrap();
        let vol = (2.0 * g.half_length()).powi(3);
        // spatial mean of Z is the k=0 mode divided by n^3
        let mut z = ff.sample_spectral(&mut rng);
        let mut prods = Vec::new();
        for _ in 0..20_000 {
            let a = z.coeffs()[0].re / g.len() as f64;
            prop.step(&mut z, ff.noise(), &mut rng);
            let b = z.coeffs()[0].re / g.len() as f64;
            prods.push(a * b);
        }
        let (m, e) = crate::stats::batch_means(&prods, 50).unwrap();
        let expect = (-5.0 * tau).exp() / (2.0 * 5.0) / vol;
        assert!((m - expect).abs() < 4.0 * e, "{m} vs {expect} +- {e}");
    }

    #[test]
    fn long_step_decorrelates() {
        let ff = FreeField::new(grid(), 5.0);
        let prop = ff.propagator(20.0).unwrap();
        assert!(prop.decay().iter().all(|d| *d < 1e-40));
    }

    #[test]
    fn covariance_op_examples() {
        let g = grid();
        let p = params();
        let cut = CutoffPair::unweighted(g, 1, 6).unwrap();
        assert!(cut.momentum_cutoff_inactive());
        let f = RealField::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + x[2]));
        let v0 = covariance_op(&f, 0.0, &cut, &p).unwrap();
        let r = apply_table(&f, &SymbolTable::resolvent(g, p.m0sq)).unwrap();
        assert!(v0.sub(&r).max_abs() < 1e-14);
        let vt = covariance_op(&f, 0.3, &cut, &p).unwrap();
        assert!(vt.norm_l2() <= (-p.m0sq * 0.3).exp() * v0.norm_l2() + 1e-15);
        assert!(covariance_op(&f, -0.1, &cut, &p).is_err());
    }
}
