//! Periodic 3-D grid, Fourier conventions and spectral multipliers.
//!
//! The box `[-L, L)^3` is sampled at `n` points per axis, `x_a = -L + a h`
//! with `h = 2L/n`, so the origin sits at index `n/2`. Fields are stored
//! x-major / z-fastest: `idx = (a n + b) n + c`.
//!
//! # Fourier convention
//!
//! Spectral data is kept as the raw DFT `F_m = sum_a f_a exp(-2 pi i m.a/n)`
//! on the momentum lattice `k = (pi/L) m`, `m in {-n/2, .., n/2-1}^3`. It
//! relates to the symmetric continuum transform
//! `f^(k) = (2 pi)^{-3/2} int f(x) exp(-i k.x) dx` by
//!
//! ```text
//! f^(k) = (2 pi)^{-3/2} h^3 (-1)^{m1+m2+m3} F_m
//! ```
//!
//! and the grid inner product `<f, g> = h^3 sum_x f g` equals the spectral
//! pairing `(h^3 / n^3) sum_m F_m conj(G_m)`, which is the lattice form of
//! `int f^(k) conj(g^(k)) dk`. Multipliers are continuum symbols sampled at
//! lattice momenta. With this convention the kernel of a multiplier `s(k)` is
//! `(2L)^{-3} sum_k s(k) exp(i k.(x-y))`, so every covariance and
//! renormalization constant in the crate is a plain lattice sum.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative tolerance for the Hermitian-symmetry check of inverse transforms.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Discretization of the box `[-L, L)^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_length: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "half box length must be positive, got {half_length}"
            )));
        }
        Ok(Self { n, half_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Number of grid points, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    /// `h^3`, the weight of one grid point in the inner product.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Lattice spacing of momenta, `pi / L`.
    pub fn momentum_unit(&self) -> f64 {
        PI / self.half_length
    }

    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.n + b) * self.n + c
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    /// Axis coordinate of index `a`.
    pub fn coord(&self, a: usize) -> f64 {
        -self.half_length + a as f64 * self.spacing()
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [a, b, c] = self.unravel(idx);
        [self.coord(a), self.coord(b), self.coord(c)]
    }

    /// Index of the origin.
    pub fn origin(&self) -> usize {
        let c = self.n / 2;
        self.index(c, c, c)
    }

    /// Grid index of a point, if it lies on the grid (within 1e-9 spacings).
    pub fn locate(&self, x: [f64; 3]) -> Result<usize> {
        let h = self.spacing();
        let mut ijk = [0usize; 3];
        for (axis, &xi) in x.iter().enumerate() {
            let t = (xi + self.half_length) / h;
            let r = t.round();
            if (t - r).abs() > 1e-9 {
                return Err(Error::OffGrid(x));
            }
            ijk[axis] = (r as i64).rem_euclid(self.n as i64) as usize;
        }
        Ok(self.index(ijk[0], ijk[1], ijk[2]))
    }

    /// Signed wavenumber `m` of DFT index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    pub fn momentum(&self, idx: usize) -> [f64; 3] {
        let [a, b, c] = self.unravel(idx);
        let u = self.momentum_unit();
        [
            u * self.wavenumber(a) as f64,
            u * self.wavenumber(b) as f64,
            u * self.wavenumber(c) as f64,
        ]
    }

    pub fn momentum_norm(&self, idx: usize) -> f64 {
        let k = self.momentum(idx);
        (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
    }

    /// Largest `|k|` on the lattice (the corner `m = (-n/2, -n/2, -n/2)`).
    pub fn max_momentum(&self) -> f64 {
        self.momentum_unit() * (self.n / 2) as f64 * 3f64.sqrt()
    }

    /// DFT index of `-m`.
    pub fn partner(&self, idx: usize) -> usize {
        let n = self.n;
        let [a, b, c] = self.unravel(idx);
        self.index((n - a) % n, (n - b) % n, (n - c) % n)
    }

    /// Cached FFT plans for this grid size.
    pub fn fft(&self) -> Arc<Fft3> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("fft cache poisoned");
        guard
            .entry(self.n)
            .or_insert_with(|| Arc::new(Fft3::new(self.n)))
            .clone()
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: (self.n, self.half_length),
                right: (other.n, other.half_length),
            })
        }
    }
}

/// 3-D complex FFT built from 1-D rustfft passes along each axis.
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    partners: Vec<usize>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let partners = (0..n * n * n)
            .map(|idx| {
                let (a, b, c) = (idx / (n * n), (idx / n) % n, idx % n);
                (((n - a) % n) * n + (n - b) % n) * n + (n - c) % n
            })
            .collect();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            partners,
        }
    }

    /// Index of `-m` for every DFT index `m`.
    pub fn partners(&self) -> &[usize] {
        &self.partners
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse DFT in place, including the `1/n^3` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "buffer does not match grid");
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // z axis: contiguous rows
        plan.process_with_scratch(data, &mut scratch);
        let mut slab = vec![Complex64::default(); n * n];
        // y axis: for each x-slab gather (c, b) lines
        for a in 0..n {
            let base = a * n * n;
            for b in 0..n {
                for c in 0..n {
                    slab[c * n + b] = data[base + b * n + c];
                }
            }
            plan.process_with_scratch(&mut slab, &mut scratch);
            for b in 0..n {
                for c in 0..n {
                    data[base + b * n + c] = slab[c * n + b];
                }
            }
        }
        // x axis: for each y index gather (c, a) lines
        for b in 0..n {
            for a in 0..n {
                let row = (a * n + b) * n;
                for c in 0..n {
                    slab[c * n + a] = data[row + c];
                }
            }
            plan.process_with_scratch(&mut slab, &mut scratch);
            for a in 0..n {
                let row = (a * n + b) * n;
                for c in 0..n {
                    data[row + c] = slab[c * n + a];
                }
            }
        }
    }
}

/// Real scalar field on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Grid inner product `h^3 sum f g`.
    pub fn inner(&self, other: &RealField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &RealField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &RealField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Sum over grid points times `h^3`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Periodic shift by `steps` grid points along `axis`: `g(x) = f(x - steps h e_axis)`.
    pub fn shifted(&self, axis: usize, steps: i64) -> Self {
        let n = self.grid.n as i64;
        let mut out = vec![0.0; self.values.len()];
        for (idx, v) in out.iter_mut().enumerate() {
            let mut ijk = self.grid.unravel(idx);
            ijk[axis] = ((ijk[axis] as i64 - steps).rem_euclid(n)) as usize;
            *v = self.values[self.grid.index(ijk[0], ijk[1], ijk[2])];
        }
        Self {
            grid: self.grid,
            values: out,
        }
    }

    /// Forward transform.
    pub fn to_spectral(&self) -> SpectralField {
        let mut coeffs: Vec<Complex64> =
            self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.grid.fft().forward(&mut coeffs);
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }
}

/// Raw DFT coefficients on the momentum lattice (see module docs).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient in the symmetric continuum normalization `f^(k)`.
    pub fn continuum_coeff(&self, idx: usize) -> Complex64 {
        let [a, b, c] = self.grid.unravel(idx);
        let parity = self.grid.wavenumber(a) + self.grid.wavenumber(b) + self.grid.wavenumber(c);
        let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        self.coeffs[idx] * (sign * self.grid.cell_volume() / (2.0 * PI).powf(1.5))
    }

    /// Largest `|F_m - conj(F_{-m})|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.coeffs.len()).fold(0.0f64, |m, i| {
            let p = self.grid.partner(i);
            m.max((self.coeffs[i] - self.coeffs[p].conj()).norm())
        });
        worst / scale
    }

    /// Spectral pairing; equals the grid inner product of the inverse transforms.
    pub fn pairing(&self, other: &SpectralField) -> f64 {
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    pub fn multiply(&mut self, symbol: &SymbolTable) {
        for (c, s) in self.coeffs.iter_mut().zip(symbol.values()) {
            *c *= *s;
        }
    }

    /// Inverse transform; fails if the coefficients are not Hermitian.
    pub fn to_real(&self) -> Result<RealField> {
        let defect = self.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(self.to_real_unchecked())
    }

    /// Inverse transform keeping only the real part.
    pub fn to_real_unchecked(&self) -> RealField {
        let mut buf = self.coeffs.clone();
        self.grid.fft().inverse(&mut buf);
        RealField {
            grid: self.grid,
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Value of the inverse transform at one grid point, without a full FFT.
    pub fn eval_at(&self, idx: usize) -> f64 {
        let n = self.grid.n;
        let [a, b, c] = self.grid.unravel(idx);
        let w = 2.0 * PI / n as f64;
        let mut s = 0.0;
        for (j, coeff) in self.coeffs.iter().enumerate() {
            let [p, q, r] = self.grid.unravel(j);
            let phase = w * ((p * a + q * b + r * c) % n) as f64;
            s += coeff.re * phase.cos() - coeff.im * phase.sin();
        }
        s / self.grid.len() as f64
    }
}

/// Forward transforms of two real fields with one complex FFT.
pub fn forward_pair(a: &[f64], b: &[f64], grid: GridSpec) -> (Vec<Complex64>, Vec<Complex64>) {
    let fft = grid.fft();
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft.forward(&mut buf);
    let mut fa = vec![Complex64::default(); buf.len()];
    let mut fb = vec![Complex64::default(); buf.len()];
    for (i, &p) in fft.partners().iter().enumerate() {
        let h = buf[i];
        let hp = buf[p].conj();
        fa[i] = (h + hp) * 0.5;
        fb[i] = (h - hp) * Complex64::new(0.0, -0.5);
    }
    (fa, fb)
}

/// Inverse transforms of two Hermitian spectra with one complex FFT.
pub fn inverse_pair(a: &[Complex64], b: &[Complex64], grid: GridSpec) -> (Vec<f64>, Vec<f64>) {
    let i = Complex64::new(0.0, 1.0);
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| x + i * y).collect();
    grid.fft().inverse(&mut buf);
    (buf.iter().map(|c| c.re).collect(), buf.iter().map(|c| c.im).collect())
}

/// Direction for [`transform`].
pub enum Transform<'a> {
    Forward(&'a RealField),
    Inverse(&'a SpectralField),
}

/// Result of [`transform`].
#[derive(Debug)]
pub enum Transformed {
    Spectral(SpectralField),
    Real(RealField),
}

/// Forward or inverse transform under the convention in the module docs.
pub fn transform(input: Transform<'_>) -> Result<Transformed> {
    match input {
        Transform::Forward(f) => Ok(Transformed::Spectral(f.to_spectral())),
        Transform::Inverse(s) => s.to_real().map(Transformed::Real),
    }
}

/// A real multiplier tabulated on the momentum lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolTable {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SymbolTable {
    /// Tabulates `m(k)`; the symbol must be finite and even under `k -> -k`.
    pub fn from_fn(grid: GridSpec, m: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..grid.len()).map(|i| m(grid.momentum(i))).collect();
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidSymbol(format!(
                    "non-finite value at k = {:?}",
                    grid.momentum(i)
                )));
            }
            let p = grid.partner(i);
            let tol = 1e-12 * v.abs().max(values[p].abs()).max(1e-300);
            if (v - values[p]).abs() > tol {
                return Err(Error::InvalidSymbol(format!(
                    "symbol is not even at k = {:?}",
                    grid.momentum(i)
                )));
            }
        }
        Ok(Self { grid, values })
    }

    /// Tabulates a radial symbol `m(|k|)`; evenness holds by construction.
    pub fn radial(grid: GridSpec, m: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| m(grid.momentum_norm(i))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn product(&self, other: &SymbolTable) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `|k|^2 + m0^2` at every lattice momentum.
    pub fn dispersion(grid: GridSpec, mass_sq: f64) -> Self {
        Self::radial(grid, |k| k * k + mass_sq)
    }

    /// Heat symbol `exp(-t(|k|^2 + m0^2))`.
    pub fn heat(grid: GridSpec, mass_sq: f64, t: f64) -> Self {
        Self::radial(grid, |k| (-t * (k * k + mass_sq)).exp())
    }

    /// Resolvent symbol of `[2(m0^2 - Laplacian)]^{-1}`.
    pub fn resolvent(grid: GridSpec, mass_sq: f64) -> Self {
        Self::radial(grid, |k| 1.0 / (2.0 * (k * k + mass_sq)))
    }

    /// Lattice sum `(2L)^{-3} sum_k m(k)`: the multiplier's kernel at the origin.
    pub fn kernel_at_origin(&self) -> f64 {
        self.values.iter().sum::<f64>() / (2.0 * self.grid.half_length).powi(3)
    }
}

/// `F^{-1}[m F f]` for a symbol given as a function of the lattice momentum.
pub fn apply_symbol(f: &RealField, m: impl Fn([f64; 3]) -> f64) -> Result<RealField> {
    let table = SymbolTable::from_fn(*f.grid(), m)?;
    apply_table(f, &table)
}

/// `F^{-1}[m F f]` for a pre-tabulated symbol.
pub fn apply_table(f: &RealField, m: &SymbolTable) -> Result<RealField> {
    f.grid().check_same(m.grid())?;
    let mut s = f.to_spectral();
    s.multiply(m);
    Ok(s.to_real_unchecked())
}

/// Grid surrogate of the Dirac delta at a grid point: `h^{-3}` there, zero elsewhere.
pub fn delta_field(grid: GridSpec, x: [f64; 3]) -> Result<RealField> {
    let idx = grid.locate(x)?;
    Ok(delta_at(grid, idx))
}

pub fn delta_at(grid: GridSpec, idx: usize) -> RealField {
    let mut f = RealField::zeros(grid);
    f.values[idx] = 1.0 / grid.cell_volume();
    f
}

/// Spectrum of [`delta_at`] computed directly: `F_m = h^{-3} exp(-2 pi i m.a/n)`.
pub fn delta_spectrum(grid: GridSpec, idx: usize) -> SpectralField {
    let n = grid.n;
    let [a, b, c] = grid.unravel(idx);
    let w = 2.0 * PI / n as f64;
    let amp = 1.0 / grid.cell_volume();
    let coeffs = (0..grid.len())
        .map(|j| {
            let [p, q, r] = grid.unravel(j);
            let phase = -w * ((p * a + q * b + r * c) % n) as f64;
            Complex64::from_polar(amp, phase)
        })
        .collect();
    SpectralField { grid, coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealField::from_fn(grid, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(6, 1.0).is_err());
        assert!(GridSpec::new(9, 1.0).is_err());
        assert!(GridSpec::new(8, 0.0).is_err());
    }

    #[test]
    fn roundtrip_is_identity() {
        let g = GridSpec::new(16, 3.0).unwrap();
        let f = random_field(g, 1);
        let back = f.to_spectral().to_real().unwrap();
        let err = f.sub(&back).max_abs();
        assert!(err < 1e-12 * f.max_abs(), "{err}");
    }

    #[test]
    fn constant_has_only_zero_mode() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let s = RealField::constant(g, 2.5).to_spectral();
        for (i, c) in s.coeffs().iter().enumerate() {
            if i == 0 {
                assert!((c.re - 2.5 * 512.0).abs() < 1e-9);
            } else {
                assert!(c.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn cosine_has_two_modes() {
        let g = GridSpec::new(8, PI).unwrap();
        let f = RealField::from_fn(g, |x| x[0].cos());
        let s = f.to_spectral();
        // oracle: direct DFT sum
        let n = 8usize;
        for j in 0..g.len() {
            let [p, q, r] = g.unravel(j);
            let mut acc = Complex64::default();
            for i in 0..g.len() {
                let [a, b, c] = g.unravel(i);
                let ph = -2.0 * PI * ((p * a + q * b + r * c) % n) as f64 / n as f64;
                acc += Complex64::from_polar(f.at(i), ph);
            }
            assert!((acc - s.coeffs()[j]).norm() < 1e-9);
            let m = [g.wavenumber(p), g.wavenumber(q), g.wavenumber(r)];
            let expect_nonzero = m == [1, 0, 0] || m == [-1, 0, 0];
            assert_eq!(acc.norm() > 1e-9, expect_nonzero, "mode {m:?}");
        }
    }

    #[test]
    fn inverse_rejects_non_hermitian() {
        let g = GridSpec::new(8, 1.0).unwrap();
        let mut s = SpectralField::zeros(g);
        s.coeffs_mut()[1] = Complex64::new(1.0, 0.0);
        assert!(matches!(s.to_real(), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn parseval() {
        let g = GridSpec::new(16, 2.0).unwrap();
        let f = random_field(g, 2);
        let h = random_field(g, 3);
        let direct = f.inner(&h);
        let spectral = f.to_spectral().pairing(&h.to_spectral());
        assert!((direct - spectral).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn identity_and_heat_symbols() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let f = random_field(g, 4);
        let same = apply_symbol(&f, |_| 1.0).unwrap();
        assert!(f.sub(&same).max_abs() < 1e-13);
        let heat0 = apply_table(&f, &SymbolTable::heat(g, 5.0, 0.0)).unwrap();
        assert!(f.sub(&heat0).max_abs() < 1e-13);
        let c = RealField::constant(g, 1.5);
        let heat = apply_table(&c, &SymbolTable::heat(g, 5.0, 0.3)).unwrap();
        let expect = 1.5 * (-0.3f64 * 5.0).exp();
        assert!(heat.values().iter().all(|v| (v - expect).abs() < 1e-13));
    }

    #[test]
    fn odd_symbol_rejected() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let f = RealField::zeros(g);
        assert!(apply_symbol(&f, |k| k[0]).is_err());
        assert!(apply_symbol(&f, |k| k[0] * k[0]).is_ok());
    }

    #[test]
    fn symbols_compose_and_commute_with_shifts() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let f = random_field(g, 5);
        let m1 = SymbolTable::heat(g, 1.0, 0.1);
        let m2 = SymbolTable::resolvent(g, 1.0);
        let seq = apply_table(&apply_table(&f, &m1).unwrap(), &m2).unwrap();
        let prod = apply_table(&f, &m1.product(&m2)).unwrap();
        assert!(seq.sub(&prod).max_abs() < 1e-14);
        for axis in 0..3 {
            let a = apply_table(&f.shifted(axis, 1), &m1).unwrap();
            let b = apply_table(&f, &m1).unwrap().shifted(axis, 1);
            assert!(a.sub(&b).max_abs() < 1e-14);
        }
    }

    #[test]
    fn delta_properties() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let x0 = [0.5, -1.0, 1.5];
        let d = delta_field(g, x0).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-14);
        let f = random_field(g, 6);
        let idx = g.locate(x0).unwrap();
        assert!((d.inner(&f) - f.at(idx)).abs() < 1e-13);
        assert!(delta_field(g, [0.3, 0.0, 0.0]).is_err());
        let ds = delta_spectrum(g, idx);
        let dd = d.to_spectral();
        for (a, b) in ds.coeffs().iter().zip(dd.coeffs()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn resolvent_of_delta_matches_lattice_sum() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let m0sq = 5.0;
        let d = delta_at(g, g.origin());
        let r = apply_table(&d, &SymbolTable::resolvent(g, m0sq)).unwrap();
        let mut sum = 0.0;
        for i in 0..g.len() {
            let k = g.momentum_norm(i);
            sum += 1.0 / (2.0 * (k * k + m0sq));
        }
        let expect = sum / (2.0 * g.half_length()).powi(3);
        assert!((r.at(g.origin()) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn eval_at_matches_inverse() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let f = random_field(g, 7);
        let s = f.to_spectral();
        for idx in [0, 17, 300, 511] {
            assert!((s.eval_at(idx) - f.at(idx)).abs() < 1e-12);
        }
    }

    #[test]
    fn paired_transforms_match_single() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let f = random_field(g, 8);
        let h = random_field(g, 9);
        let (fa, fb) = forward_pair(f.values(), h.values(), g);
        for (x, y) in fa.iter().zip(f.to_spectral().coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
        for (x, y) in fb.iter().zip(h.to_spectral().coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
        let (ra, rb) = inverse_pair(&fa, &fb, g);
        for i in 0..g.len() {
            assert!((ra[i] - f.at(i)).abs() < 1e-13 && (rb[i] - h.at(i)).abs() < 1e-13);
        }
    }

    #[test]
    fn continuum_normalization_of_delta() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let s = delta_at(g, g.origin()).to_spectral();
        for i in 0..g.len() {
            let c = s.continuum_coeff(i);
            assert!((c.re - (2.0 * PI).powf(-1.5)).abs() < 1e-12, "{c}");
            assert!(c.im.abs() < 1e-12);
        }
    }
}
