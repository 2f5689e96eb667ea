//! Renormalization constants and the Wick / tree processes built on the OU field.
//!
//! `C_2(x)` is evaluated as the expectation it is meant to cancel,
//!
//! ```text
//! C_2(x) = 2 sum_{|i-j|<=1} int_0^inf dt sum_{y,w} h^6 a_i(y) b_{j,t}(w) G_t(y-w)^2
//! a_i     = rho^2 Δ_i δ_x
//! b_{j,t} = rho^2 Δ_j e^{t(Δ-m0^2)} P_N^2 δ_x
//! ```
//!
//! with `G_t` the kernel of `V_N(t)`. This is exactly
//! `E[(Z2 ⊘= int e^{(t-s)L} P_N^2 Z2_s ds)(x)]`, so the resonant tree has mean
//! zero. The literal composition (`C2Formula::Literal`) is kept as an option.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffPair;
use crate::error::{Error, Result};
use crate::gff::{FreeField, ModelParams, OuPropagator, OuState};
use crate::grid::{delta_spectrum, forward_pair, inverse_pair, GridSpec, RealField, SpectralField, SymbolTable};
use crate::lp::{resonant, DyadicPartition};
use crate::quadrature::{integrate_vec, radial, QuadratureInfo, QuadratureSpec};
use crate::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum C1Mode {
    /// Exact variance of `P_N Z` on the grid.
    #[default]
    GridExact,
    /// Continuum radial integral times `2^N`.
    Continuum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum C2Formula {
    #[default]
    Expectation,
    Literal,
}

/// `C_1^{(N)}` in the requested mode.
pub fn compute_c1(params: &ModelParams, cut: &CutoffPair, mode: C1Mode) -> Result<f64> {
    match mode {
        C1Mode::GridExact => Ok(SymbolTable::resolvent(*cut.grid(), params.m0sq)
            .product(cut.psi_n_sq())
            .kernel_at_origin()),
        C1Mode::Continuum => c1_continuum(params.m0sq, cut.n(), cut.psi()),
    }
}

/// `2^N (2 pi)^{-3} 4 pi int_0^2 r^2 psi(r)^2 / (2 r^2 + 2^{1-2N} m0^2) dr`.
pub fn c1_continuum(m0sq: f64, n: u32, psi: &crate::profile::RadialProfile) -> Result<f64> {
    let eps = 2f64.powi(1 - 2 * n as i32) * m0sq;
    let g = |r: f64| {
        let p = psi.eval(r);
        r * r * p * p / (2.0 * r * r + eps)
    };
    let mut prev = radial(g, psi.outer, 8, 16);
    for panels in [16, 32, 64, 128, 256] {
        let cur = radial(g, psi.outer, panels, 16);
        if (cur - prev).abs() <= 1e-12 * cur.abs() {
            let pi = std::f64::consts::PI;
            return Ok(2f64.powi(n as i32) * 4.0 * pi * cur / (2.0 * pi).powi(3));
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged {
        tol: 1e-12,
        estimate: prev,
    })
}

/// Square sublattice of probe points centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeLattice {
    /// Probe spacing in grid steps.
    pub steps: usize,
    /// Probes per axis (odd).
    pub per_axis: usize,
}

impl ProbeLattice {
    /// 3 probes per axis, spaced so the lattice fits inside `|x| <= M`.
    pub fn default_for(grid: GridSpec, m: u32) -> Self {
        let steps = ((m as f64 / (3f64.sqrt() * grid.spacing())).floor() as usize).max(1);
        Self { steps, per_axis: 3 }
    }

    pub fn single_origin() -> Self {
        Self {
            steps: 1,
            per_axis: 1,
        }
    }

    fn half(&self) -> i64 {
        (self.per_axis / 2) as i64
    }

    /// Grid indices of the probes, x-major.
    pub fn indices(&self, grid: GridSpec) -> Vec<usize> {
        let c = (grid.n() / 2) as i64;
        let h = self.half();
        let s = self.steps as i64;
        let mut out = Vec::new();
        for a in -h..=h {
            for b in -h..=h {
                for d in -h..=h {
                    out.push(grid.index((c + a * s) as usize, (c + b * s) as usize, (c + d * s) as usize));
                }
            }
        }
        out
    }
}

/// Probe values of `C_2` and their trilinear extension to the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2Map {
    pub lattice: ProbeLattice,
    pub spacing: f64,
    /// One value per probe, in [`ProbeLattice::indices`] order.
    pub values: Vec<f64>,
}

impl C2Map {
    pub fn zero(grid: GridSpec) -> Self {
        Self {
            lattice: ProbeLattice::single_origin(),
            spacing: grid.spacing(),
            values: vec![0.0],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            values: vec![c],
            ..Self::zero(grid)
        }
    }

    fn value(&self, a: usize, b: usize, c: usize) -> f64 {
        let p = self.lattice.per_axis;
        self.values[(a * p + b) * p + c]
    }

    /// Trilinear interpolation, constant beyond the probe box.
    pub fn interpolate(&self, x: [f64; 3]) -> f64 {
        let p = self.lattice.per_axis;
        if p == 1 {
            return self.values[0];
        }
        let d = self.spacing * self.lattice.steps as f64;
        let top = (p - 1) as f64;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let u = (x[k] / d + self.lattice.half() as f64).clamp(0.0, top);
            let i = (u.floor() as usize).min(p - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
            let mut w = 1.0;
            for k in 0..3 {
                w *= if o[k] == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * self.value(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
            }
        }
        acc
    }

    pub fn to_field(&self, grid: GridSpec) -> RealField {
        RealField::from_fn(grid, |x| self.interpolate(x))
    }
}

/// Options for [`RenormConstants::compute`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenormSpec {
    pub quadrature: QuadratureSpec,
    pub c2_formula: C2Formula,
    pub probes: Option<ProbeLattice>,
    /// Skip the `C_2` quadrature and use zero (for `lambda = 0` work).
    pub skip_c2: bool,
}

impl Default for RenormSpec {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            c2_formula: C2Formula::Expectation,
            probes: None,
            skip_c2: false,
        }
    }
}

/// One row of the `C_2` probe table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeValue {
    pub x: [f64; 3],
    pub c2: f64,
}

/// `C_1`, `C_2` and their metadata for one `(M, N)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenormConstants {
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u32,
    pub c1_grid: f64,
    pub c1_continuum: f64,
    pub c2_probes: Vec<ProbeValue>,
    pub c2_map: C2Map,
    pub quadrature: Option<QuadratureInfo>,
    #[serde(skip)]
    c2_field: Option<RealField>,
}

impl RenormConstants {
    pub fn compute(params: &ModelParams, cut: &CutoffPair, spec: &RenormSpec) -> Result<Self> {
        let grid = *cut.grid();
        let c1_grid = compute_c1(params, cut, C1Mode::GridExact)?;
        let c1_continuum = compute_c1(params, cut, C1Mode::Continuum)?;
        let lattice = spec
            .probes
            .clone()
            .unwrap_or_else(|| ProbeLattice::default_for(grid, cut.m()));
        let probes = lattice.indices(grid);
        let (values, quadrature) = if spec.skip_c2 {
            (vec![0.0; probes.len()], None)
        } else {
            let partition = DyadicPartition::new(grid)?;
            let (v, info) = compute_c2_probes(params, cut, &partition, &probes, &spec.quadrature, spec.c2_formula)?;
            (v, Some(info))
        };
        let c2_probes = probes
            .iter()
            .zip(&values)
            .map(|(&i, &c2)| ProbeValue {
                x: grid.point(i),
                c2,
            })
            .collect();
        let c2_map = C2Map {
            lattice,
            spacing: grid.spacing(),
            values,
        };
        Ok(Self::assemble(cut, c1_grid, c1_continuum, c2_probes, c2_map, quadrature))
    }

    /// Constants with a given `C_1` and `C_2` map, skipping all quadrature.
    pub fn from_parts(cut: &CutoffPair, c1: f64, c2_map: C2Map) -> Self {
        let grid = *cut.grid();
        let probes = c2_map
            .lattice
            .indices(grid)
            .into_iter()
            .zip(&c2_map.values)
            .map(|(i, &c2)| ProbeValue {
                x: grid.point(i),
                c2,
            })
            .collect();
        Self::assemble(cut, c1, c1, probes, c2_map, None)
    }

    /// Grid-exact `C_1` and `C_2 = 0`.
    pub fn without_c2(params: &ModelParams, cut: &CutoffPair) -> Result<Self> {
        let c1 = compute_c1(params, cut, C1Mode::GridExact)?;
        let mut out = Self::from_parts(cut, c1, C2Map::zero(*cut.grid()));
        out.c1_continuum = compute_c1(params, cut, C1Mode::Continuum)?;
        Ok(out)
    }

    fn assemble(
        cut: &CutoffPair,
        c1_grid: f64,
        c1_continuum: f64,
        c2_probes: Vec<ProbeValue>,
        c2_map: C2Map,
        quadrature: Option<QuadratureInfo>,
    ) -> Self {
        let field = c2_map.to_field(*cut.grid());
        Self {
            n: cut.n(),
            m: cut.m(),
            c1_grid,
            c1_continuum,
            c2_probes,
            c2_map,
            quadrature,
            c2_field: Some(field),
        }
    }

    pub fn c1(&self) -> f64 {
        self.c1_grid
    }

    /// `C_2` interpolated onto the grid.
    pub fn c2_field(&self) -> &RealField {
        self.c2_field.as_ref().expect("c2 field built at construction")
    }

    /// Rebuilds the interpolated field after deserialization.
    pub fn attach_grid(&mut self, grid: GridSpec) {
        self.c2_field = Some(self.c2_map.to_field(grid));
    }

    /// `C_*(x) = C_1 - 3 lambda C_2(x)` on the grid.
    pub fn c_star(&self, lambda: f64) -> RealField {
        self.c2_field().map(|c2| self.c1_grid - 3.0 * lambda * c2)
    }
}

/// `C_2` at one grid point.
pub fn compute_c2(
    params: &ModelParams,
    cut: &CutoffPair,
    partition: &DyadicPartition,
    x: usize,
    quad: &QuadratureSpec,
    formula: C2Formula,
) -> Result<(f64, QuadratureInfo)> {
    let (v, info) = compute_c2_probes(params, cut, partition, &[x], quad, formula)?;
    Ok((v[0], info))
}

/// `C_2` at several grid points sharing one time quadrature.
pub fn compute_c2_probes(
    params: &ModelParams,
    cut: &CutoffPair,
    partition: &DyadicPartition,
    probes: &[usize],
    quad: &QuadratureSpec,
    formula: C2Formula,
) -> Result<(Vec<f64>, QuadratureInfo)> {
    let grid = *cut.grid();
    grid.check_same(partition.grid())?;
    if probes.iter().any(|&p| p >= grid.len()) {
        return Err(Error::InvalidParameter("probe index outside the grid".into()));
    }
    let t_max = quad.resolved_t_max(params.m0sq);
    match formula {
        C2Formula::Expectation => {
            let ctx = ExpectationC2::new(params, cut, partition, probes);
            integrate_vec(|t| ctx.integrand(t), t_max, quad)
        }
        C2Formula::Literal => {
            let ctx = LiteralC2::new(params, cut, partition, probes);
            integrate_vec(|t| ctx.integrand(t), t_max, quad)
        }
    }
}

struct ExpectationC2<'a> {
    grid: GridSpec,
    m0sq: f64,
    cut: &'a CutoffPair,
    omega: Vec<f64>,
    rho2: Vec<f64>,
    /// `phi_j psi_N^2` per block.
    block_psi2: Vec<Vec<f64>>,
    probes: Vec<ProbeData>,
}

struct ProbeData {
    delta: SpectralField,
    /// Spectra of `rho^2 (Δ_{j-1} + Δ_j + Δ_{j+1}) δ_x` per block `j`.
    near: Vec<Vec<Complex64>>,
}

impl<'a> ExpectationC2<'a> {
    fn new(params: &ModelParams, cut: &'a CutoffPair, partition: &DyadicPartition, probes: &[usize]) -> Self {
        let grid = *cut.grid();
        let nb = partition.len();
        let omega = SymbolTable::dispersion(grid, params.m0sq).values().to_vec();
        let rho2: Vec<f64> = cut.rho_m().values().iter().map(|r| r * r).collect();
        let blocks: Vec<&SymbolTable> = (0..nb)
            .map(|b| partition.symbol(b as i32 - 1).expect("in range"))
            .collect();
        let block_psi2 = blocks
            .iter()
            .map(|s| s.product(cut.psi_n_sq()).values().to_vec())
            .collect();
        let probes = probes
            .iter()
            .map(|&x| {
                let delta = delta_spectrum(grid, x);
                let near = (0..nb)
                    .map(|j| {
                        let lo = j.saturating_sub(1);
                        let hi = (j + 1).min(nb - 1);
                        let mut s = delta.clone();
                        let sym: Vec<f64> = (0..grid.len())
                            .map(|m| (lo..=hi).map(|i| blocks[i].values()[m]).sum())
                            .collect();
                        for (c, v) in s.coeffs_mut().iter_mut().zip(&sym) {
                            *c *= *v;
                        }
                        let mut r = s.to_real_unchecked();
                        for (v, w) in r.values_mut().iter_mut().zip(&rho2) {
                            *v *= w;
                        }
                        r.to_spectral().coeffs().to_vec()
                    })
                    .collect();
                ProbeData { delta, near }
            })
            .collect();
        Self {
            grid,
            m0sq: params.m0sq,
            cut,
            omega,
            rho2,
            block_psi2,
            probes,
        }
    }

    fn integrand(&self, t: f64) -> Vec<f64> {
        let grid = self.grid;
        let n3 = grid.len() as f64;
        let h3 = grid.cell_volume();
        let heat: Vec<f64> = self.omega.iter().map(|w| (-t * w).exp()).collect();
        // kernel of V_N(t), squared, back to spectral
        let mut g = SpectralField::zeros(grid);
        for (i, c) in g.coeffs_mut().iter_mut().enumerate() {
            *c = Complex64::new(self.cut.psi_n_sq().values()[i] * heat[i] / (2.0 * self.omega[i]), 0.0);
        }
        let gk = g.to_real_unchecked().map(|v| {
            let k = v / h3;
            k * k
        });
        let kk: Vec<f64> = gk.to_spectral().coeffs().iter().map(|c| c.re).collect();
        let nb = self.block_psi2.len();
        let _ = self.m0sq;
        self.probes
            .iter()
            .map(|p| {
                let mut total = 0.0;
                let mut j = 0;
                while j < nb {
                    let j2 = (j + 1).min(nb - 1);
                    let spec = |jj: usize| -> Vec<Complex64> {
                        p.delta
                            .coeffs()
                            .iter()
                            .enumerate()
                            .map(|(m, c)| c * (self.block_psi2[jj][m] * heat[m]))
                            .collect()
                    };
                    let (mut ra, mut rb) = inverse_pair(&spec(j), &spec(j2), grid);
                    for ((a, b), w) in ra.iter_mut().zip(rb.iter_mut()).zip(&self.rho2) {
                        *a *= w;
                        *b *= w;
                    }
                    let (fa, fb) = forward_pair(&ra, &rb, grid);
                    let pair = |near: &[Complex64], bj: &[Complex64]| -> f64 {
                        near.iter()
                            .zip(bj)
                            .zip(&kk)
                            .map(|((a, b), k)| (a * b.conj()).re * k)
                            .sum::<f64>()
                    };
                    total += pair(&p.near[j], &fa);
                    if j2 != j {
                        total += pair(&p.near[j2], &fb);
                    }
                    j += 2;
                }
                2.0 * total * h3 * h3 / n3
            })
            .collect()
    }
}

struct LiteralC2<'a> {
    grid: GridSpec,
    m0sq: f64,
    cut: &'a CutoffPair,
    partition: &'a DyadicPartition,
    probes: Vec<(usize, SpectralField)>,
}

impl<'a> LiteralC2<'a> {
    fn new(params: &ModelParams, cut: &'a CutoffPair, partition: &'a DyadicPartition, probes: &[usize]) -> Self {
        let grid = *cut.grid();
        Self {
            grid,
            m0sq: params.m0sq,
            cut,
            partition,
            probes: probes.iter().map(|&x| (x, delta_spectrum(grid, x))).collect(),
        }
    }

    fn integrand(&self, t: f64) -> Vec<f64> {
        let grid = self.grid;
        let nb = self.partition.len();
        let psi = self.cut.psi_n();
        let rho2 = self.cut.rho_m().map(|r| r * r);
        let vn = crate::gff::v_n_symbol(self.cut, self.m0sq, t).expect("t >= 0");
        let outer = SymbolTable::heat(grid, self.m0sq, t).product(self.cut.psi_n_sq());
        self.probes
            .iter()
            .map(|(x, delta)| {
                let mut sq = RealField::zeros(grid);
                for j in 0..nb {
                    let mut s = delta.clone();
                    s.multiply(&self.partition.symbol(j as i32 - 1).expect("in range").product(psi));
                    let mut q = s.to_real_unchecked().mul(&rho2).to_spectral();
                    q.multiply(&vn);
                    let q = q.to_real_unchecked().mul(&rho2).to_spectral();
                    for i in j.saturating_sub(1)..=(j + 1).min(nb - 1) {
                        let mut u = q.clone();
                        u.multiply(&self.partition.symbol(i as i32 - 1).expect("in range").product(psi));
                        let u = u.to_real_unchecked();
                        for (a, b) in sq.values_mut().iter_mut().zip(u.values()) {
                            *a += b * b;
                        }
                    }
                }
                let mut s = sq.to_spectral();
                s.multiply(&outer);
                2.0 * s.eval_at(*x)
            })
            .collect()
    }
}

/// `k`-th Wick power of `P_N z` (or its localized version `rho^k (...)`).
pub fn wick_power(
    z: &RealField,
    k: u32,
    cut: &CutoffPair,
    constants: &RenormConstants,
    localized: bool,
) -> Result<RealField> {
    let y = crate::cutoff::p_n(z, cut)?;
    let c1 = constants.c1();
    let base = match k {
        1 => y,
        2 => y.map(|v| v * v - c1),
        3 => y.map(|v| v * v * v - 3.0 * c1 * v),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "Wick power must be 1, 2 or 3 (got {k})"
            )))
        }
    };
    if localized {
        Ok(base.zip_map(cut.rho_m(), |b, r| b * r.powi(k as i32)))
    } else {
        Ok(base)
    }
}

/// How the source is interpolated across a step in the tree integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceRule {
    /// Linear interpolation between step ends (second order in expectation).
    #[default]
    Trapezoid,
    /// Source frozen at the left end (the plain exponential integrator).
    Left,
}

/// Which auxiliary integrals to carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSet {
    pub tree02: bool,
    pub tree03: bool,
    /// `int e^{(t-s)L} P_N^2 Z2_s ds`, needed for the resonant tree.
    pub i22: bool,
    /// `int e^{(t-s)L} P_N^2 Z3_s ds`.
    pub i23: bool,
}

impl TreeSet {
    pub const ALL: TreeSet = TreeSet {
        tree02: true,
        tree03: true,
        i22: true,
        i23: true,
    };
    pub const TREE03: TreeSet = TreeSet {
        tree02: false,
        tree03: true,
        i22: false,
        i23: false,
    };
    pub const NONE: TreeSet = TreeSet {
        tree02: false,
        tree03: false,
        i22: false,
        i23: false,
    };
}

/// Step weights of the exponential integrator for each mode.
#[derive(Clone, Debug)]
pub struct ExpWeights {
    pub decay: Vec<f64>,
    /// Weight of the source at the start of the step.
    pub left: Vec<f64>,
    /// Weight of the source at the end of the step.
    pub right: Vec<f64>,
}

impl ExpWeights {
    pub fn new(omega: &[f64], dt: f64, rule: SourceRule) -> Self {
        let mut decay = Vec::with_capacity(omega.len());
        let mut left = Vec::with_capacity(omega.len());
        let mut right = Vec::with_capacity(omega.len());
        for &w in omega {
            let x = dt * w;
            let e1 = -(-x).exp_m1() / w;
            decay.push((-x).exp());
            match rule {
                SourceRule::Left => {
                    left.push(e1);
                    right.push(0.0);
                }
                SourceRule::Trapezoid => {
                    let r = (x + (-x).exp_m1()) / (dt * w * w);
                    left.push(e1 - r);
                    right.push(r);
                }
            }
        }
        Self { decay, left, right }
    }
}

/// Wick fields at one time.
#[derive(Clone, Debug)]
pub struct WickBundle {
    pub t: f64,
    pub z: RealField,
    pub z1: RealField,
    pub z2: RealField,
    pub z3: RealField,
    pub tree02: Option<RealField>,
    pub tree03: Option<RealField>,
    pub tree22: Option<RealField>,
}

#[derive(Clone, Debug)]
struct Sources {
    /// `P*_{M,N} Z2`, `P*_{M,N} Z3`, `P_N^2 Z2`, `P_N^2 Z3` spectra.
    s02: Vec<Complex64>,
    s03: Vec<Complex64>,
    s22: Vec<Complex64>,
    s23: Vec<Complex64>,
}

/// Stationary OU path together with its Wick powers and tree integrals.
#[derive(Clone, Debug)]
pub struct WickEvolver {
    cut: CutoffPair,
    c1: f64,
    ff: FreeField,
    prop: OuPropagator,
    weights: ExpWeights,
    trees: TreeSet,
    ou: OuState,
    /// `P_N Z` on the grid at the current time.
    pn_z: RealField,
    sources: Sources,
    tree02: SpectralField,
    tree03: SpectralField,
    i22: SpectralField,
    i23: SpectralField,
    burned: f64,
}

/// Burn-in below this multiple of `1/m0^2` is flagged.
pub const MIN_BURN_IN: f64 = 5.0;
pub const DEFAULT_BURN_IN: f64 = 10.0;

impl WickEvolver {
    /// Starts from `Z_0 ~ mu_0` with all tree integrals at zero.
    pub fn new<R: Rng>(
        params: &ModelParams,
        cut: &CutoffPair,
        c1: f64,
        dt: f64,
        rule: SourceRule,
        trees: TreeSet,
        stream: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let grid = *cut.grid();
        let ff = FreeField::new(grid, params.m0sq);
        let ou = OuState::stationary(&ff, stream, rng);
        Self::from_state(params, cut, c1, dt, rule, trees, ou)
    }

    pub fn from_state(
        params: &ModelParams,
        cut: &CutoffPair,
        c1: f64,
        dt: f64,
        rule: SourceRule,
        trees: TreeSet,
        ou: OuState,
    ) -> Result<Self> {
        let grid = *cut.grid();
        let ff = FreeField::new(grid, params.m0sq);
        let prop = ff.propagator(dt)?;
        let weights = ExpWeights::new(ff.omega().values(), dt, rule);
        let zero = SpectralField::zeros(grid);
        let mut out = Self {
            cut: cut.clone(),
            c1,
            ff,
            prop,
            weights,
            trees,
            ou,
            pn_z: RealField::zeros(grid),
            sources: Sources {
                s02: Vec::new(),
                s03: Vec::new(),
                s22: Vec::new(),
                s23: Vec::new(),
            },
            tree02: zero.clone(),
            tree03: zero.clone(),
            i22: zero.clone(),
            i23: zero,
            burned: 0.0,
        };
        out.refresh();
        Ok(out)
    }

    fn refresh(&mut self) {
        let grid = *self.cut.grid();
        let mut y = self.ou.z.clone();
        y.multiply(self.cut.psi_n());
        self.pn_z = y.to_real_unchecked();
        self.sources = self.compute_sources();
        let _ = grid;
    }

    fn compute_sources(&self) -> Sources {
        let grid = *self.cut.grid();
        let t = self.trees;
        if !(t.tree02 || t.tree03 || t.i22 || t.i23) {
            return Sources {
                s02: Vec::new(),
                s03: Vec::new(),
                s22: Vec::new(),
                s23: Vec::new(),
            };
        }
        let c1 = self.c1;
        let rho = self.cut.rho_m().values();
        let len = grid.len();
        let mut z2 = vec![0.0; len];
        let mut z3 = vec![0.0; len];
        for i in 0..len {
            let r = rho[i];
            let y = r * self.pn_z.values()[i];
            z2[i] = y * y - r * r * c1;
            z3[i] = y * y * y - 3.0 * r * r * c1 * y;
        }
        let psi = self.cut.psi_n().values();
        let psi2 = self.cut.psi_n_sq().values();
        let mut out = Sources {
            s02: Vec::new(),
            s03: Vec::new(),
            s22: Vec::new(),
            s23: Vec::new(),
        };
        if t.tree02 || t.tree03 {
            let rz2: Vec<f64> = z2.iter().zip(rho).map(|(a, r)| a * r).collect();
            let rz3: Vec<f64> = z3.iter().zip(rho).map(|(a, r)| a * r).collect();
            let (mut a, mut b) = forward_pair(&rz2, &rz3, grid);
            for ((x, y), p) in a.iter_mut().zip(b.iter_mut()).zip(psi) {
                *x *= *p;
                *y *= *p;
            }
            out.s02 = a;
            out.s03 = b;
        }
        if t.i22 || t.i23 {
            let (mut a, mut b) = forward_pair(&z2, &z3, grid);
            for ((x, y), p) in a.iter_mut().zip(b.iter_mut()).zip(psi2) {
                *x *= *p;
                *y *= *p;
            }
            out.s22 = a;
            out.s23 = b;
        }
        out
    }

    /// One step: exact OU update, then the tree integrals with the chosen source rule.
    pub fn step<R: Rng>(&mut self, rng: &mut R) {
        self.prop.step(&mut self.ou.z, self.ff.noise(), rng);
        self.ou.t += self.prop.dt();
        self.burned += self.prop.dt();
        let mut y = self.ou.z.clone();
        y.multiply(self.cut.psi_n());
        self.pn_z = y.to_real_unchecked();
        let new = self.compute_sources();
        let w = &self.weights;
        let advance = |acc: &mut SpectralField, old: &[Complex64], new: &[Complex64]| {
            for (i, c) in acc.coeffs_mut().iter_mut().enumerate() {
                *c = *c * w.decay[i] + old[i] * w.left[i] + new[i] * w.right[i];
            }
        };
        if self.trees.tree02 {
            advance(&mut self.tree02, &self.sources.s02, &new.s02);
        }
        if self.trees.tree03 {
            advance(&mut self.tree03, &self.sources.s03, &new.s03);
        }
        if self.trees.i22 {
            advance(&mut self.i22, &self.sources.s22, &new.s22);
        }
        if self.trees.i23 {
            advance(&mut self.i23, &self.sources.s23, &new.s23);
        }
        self.sources = new;
    }

    /// Runs for `duration` (rounded to whole steps) to forget the zero start.
    pub fn burn_in<R: Rng>(&mut self, duration: f64, rng: &mut R) -> BurnInStatus {
        let steps = (duration / self.prop.dt()).round() as usize;
        for _ in 0..steps {
            self.step(rng);
        }
        burn_in_status(duration, self.ff.m0sq())
    }

    pub fn time(&self) -> f64 {
        self.ou.t
    }

    pub fn dt(&self) -> f64 {
        self.prop.dt()
    }

    pub fn burned(&self) -> f64 {
        self.burned
    }

    pub fn ou(&self) -> &OuState {
        &self.ou
    }

    pub fn free_field(&self) -> &FreeField {
        &self.ff
    }

    pub fn propagator(&self) -> &OuPropagator {
        &self.prop
    }

    pub fn cut(&self) -> &CutoffPair {
        &self.cut
    }

    /// `P_N Z_t` on the grid.
    pub fn pn_z(&self) -> &RealField {
        &self.pn_z
    }

    /// `Z1 = rho P_N Z`.
    pub fn z1(&self) -> RealField {
        self.pn_z.mul(self.cut.rho_m())
    }

    /// Localized second Wick power.
    pub fn z2(&self) -> RealField {
        let c1 = self.c1;
        self.pn_z
            .zip_map(self.cut.rho_m(), |y, r| r * r * (y * y - c1))
    }

    pub fn z3(&self) -> RealField {
        let c1 = self.c1;
        self.pn_z
            .zip_map(self.cut.rho_m(), |y, r| r * r * r * (y * y * y - 3.0 * c1 * y))
    }

    pub fn tree02_spectral(&self) -> &SpectralField {
        &self.tree02
    }

    pub fn tree03_spectral(&self) -> &SpectralField {
        &self.tree03
    }

    pub fn tree02(&self) -> RealField {
        self.tree02.to_real_unchecked()
    }

    pub fn tree03(&self) -> RealField {
        self.tree03.to_real_unchecked()
    }

    /// `int e^{(t-s)L} P_N^2 Z2_s ds`.
    pub fn i22(&self) -> RealField {
        self.i22.to_real_unchecked()
    }

    pub fn i23(&self) -> RealField {
        self.i23.to_real_unchecked()
    }

    /// `Z2 ⊘= I22` before subtracting `C_2`.
    pub fn resonant_raw(&self, partition: &DyadicPartition) -> Result<RealField> {
        resonant(&self.z2(), &self.i22(), partition)
    }

    /// Seeds the tree integrals directly, e.g. from a stored state.
    pub fn set_tree03(&mut self, tree03: SpectralField) {
        self.tree03 = tree03;
    }

    /// All Wick fields at the current time.
    pub fn bundle(&self, constants: &RenormConstants, partition: &DyadicPartition) -> Result<WickBundle> {
        let tree22 = if self.trees.i22 {
            Some(resonant_tree_from(&self.resonant_raw(partition)?, constants))
        } else {
            None
        };
        Ok(WickBundle {
            t: self.ou.t,
            z: self.ou.field(),
            z1: self.z1(),
            z2: self.z2(),
            z3: self.z3(),
            tree02: self.trees.tree02.then(|| self.tree02()),
            tree03: self.trees.tree03.then(|| self.tree03()),
            tree22,
        })
    }
}

/// `Z22 = raw - C_2` with the interpolated `C_2` field.
pub fn resonant_tree_from(raw: &RealField, constants: &RenormConstants) -> RealField {
    raw.sub(constants.c2_field())
}

/// `resonant_tree`: the renormalized resonant product at the evolver's current time.
pub fn resonant_tree(evolver: &WickEvolver, constants: &RenormConstants, partition: &DyadicPartition) -> Result<RealField> {
    if !evolver.trees.i22 {
        return Err(Error::InvalidParameter(
            "resonant tree needs the P_N^2 Z2 integral to be tracked".into(),
        ));
    }
    Ok(resonant_tree_from(&evolver.resonant_raw(partition)?, constants))
}

/// `Z23 = Z2 ⊘= I23 - 3 C_2 Z1`.
pub fn tree23(evolver: &WickEvolver, constants: &RenormConstants, partition: &DyadicPartition) -> Result<RealField> {
    let r = resonant(&evolver.z2(), &evolver.i23(), partition)?;
    Ok(r.sub(&constants.c2_field().mul(&evolver.z1()).scaled(3.0)))
}

/// Hat variant `Z2 ⊘= (P_{M,N} Z03) - 3 C_2 rho^2 Z1`.
pub fn tree23_hat(evolver: &WickEvolver, constants: &RenormConstants, partition: &DyadicPartition) -> Result<RealField> {
    let pt = crate::cutoff::p_mn(&evolver.tree03(), evolver.cut(), false)?;
    let r = resonant(&evolver.z2(), &pt, partition)?;
    let rho = evolver.cut().rho_m();
    let corr = constants.c2_field().mul(rho).mul(rho).mul(&evolver.z1()).scaled(3.0);
    Ok(r.sub(&corr))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurnInStatus {
    Ok,
    /// Burn-in shorter than `5 / m0^2`: the zero start is not yet forgotten.
    TooShort,
}

pub fn burn_in_status(duration: f64, m0sq: f64) -> BurnInStatus {
    if duration * m0sq < MIN_BURN_IN {
        log::warn!(
            "burn-in {duration} is below {MIN_BURN_IN}/m0^2; tree integrals still remember their start"
        );
        BurnInStatus::TooShort
    } else {
        BurnInStatus::Ok
    }
}

/// `Z03` path driven by an arbitrary source history (for the homogeneous-decay check).
pub fn tree_integrate(
    initial: &SpectralField,
    sources: &[SpectralField],
    omega: &SymbolTable,
    dt: f64,
    rule: SourceRule,
) -> SpectralField {
    let w = ExpWeights::new(omega.values(), dt, rule);
    let mut acc = initial.clone();
    for pair in sources.windows(2) {
        let (old, new) = (pair[0].coeffs(), pair[1].coeffs());
        for (i, c) in acc.coeffs_mut().iter_mut().enumerate() {
            *c = *c * w.decay[i] + old[i] * w.left[i] + new[i] * w.right[i];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::rng_stream;
    use crate::stats::{batch_means, mean_and_error, z_score};

    fn setup(n: usize, l: f64, m: u32, nn: u32) -> (GridSpec, ModelParams, CutoffPair) {
        let g = GridSpec::new(n, l).unwrap();
        let p = ModelParams::new(5.0, 0.5, 3.1, 1.0).unwrap();
        let cut = CutoffPair::unweighted(g, m, nn).unwrap();
        (g, p, cut)
    }

    #[test]
    fn c1_grid_plateau_is_free_variance() {
        let (g, p, cut) = setup(8, 2.0, 1, 6);
        assert!(cut.momentum_cutoff_inactive());
        let c1 = compute_c1(&p, &cut, C1Mode::GridExact).unwrap();
        let full = SymbolTable::resolvent(g, p.m0sq).kernel_at_origin();
        assert!((c1 - full).abs() < 1e-15 * full);
    }

    #[test]
    fn c1_continuum_against_closed_form() {
        // with psi replaced by the indicator of the unit ball the integral is elementary:
        // int_0^1 r^2/(2r^2+e) dr = 1/2 - sqrt(e/2)/2 atan(sqrt(2/e))
        let (_, p, cut) = setup(8, 2.0, 1, 3);
        let e = 2f64.powi(1 - 6) * p.m0sq;
        let inner = 0.5 - (e / 2.0).sqrt() / 2.0 * (2.0 / e).sqrt().atan();
        let lower = 8.0 * 4.0 * std::f64::consts::PI * inner / (2.0 * std::f64::consts::PI).powi(3);
        let c1 = compute_c1(&p, &cut, C1Mode::Continuum).unwrap();
        // psi >= indicator of the unit ball, and psi <= indicator of radius 2
        assert!(c1 > lower && c1 < 2.5 * lower, "{c1} {lower}");
    }

    #[test]
    fn c1_continuum_scaling() {
        let (_, p, _) = setup(8, 2.0, 1, 1);
        let psi = crate::profile::unit_cutoff(crate::profile::StepKind::Mollified);
        let r: Vec<f64> = (2..=6)
            .map(|n| c1_continuum(p.m0sq, n, &psi).unwrap() / 2f64.powi(n as i32))
            .collect();
        for w in r.windows(2) {
            assert!(w[1] > w[0]);
        }
        // the correction is O(2^{-N}): successive gaps halve
        let q = (r[4] - r[3]) / (r[3] - r[2]);
        assert!((q - 0.5).abs() < 0.05, "{q}");
    }

    #[test]
    fn probe_lattice_layout() {
        let g = GridSpec::new(32, 8.0).unwrap();
        let lat = ProbeLattice::default_for(g, 2);
        assert_eq!(lat.steps, 2);
        let idx = lat.indices(g);
        assert_eq!(idx.len(), 27);
        assert_eq!(idx[13], g.origin());
        for &i in &idx {
            let x = g.point(i);
            assert!((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn c2_map_interpolates_linear_data_exactly() {
        let g = GridSpec::new(32, 8.0).unwrap();
        let lattice = ProbeLattice::default_for(g, 2);
        let f = |x: [f64; 3]| 1.0 + 0.5 * x[0] - 0.25 * x[1] + 0.125 * x[2];
        let values = lattice.indices(g).iter().map(|&i| f(g.point(i))).collect();
        let map = C2Map {
            lattice,
            spacing: g.spacing(),
            values,
        };
        for x in [[0.3, -0.2, 0.9], [-1.0, 1.0, 0.0], [0.5, 0.5, -0.5]] {
            assert!((map.interpolate(x) - f(x)).abs() < 1e-14);
        }
        // clamped outside the probe box
        assert!((map.interpolate([3.0, 0.0, 0.0]) - f([1.0, 0.0, 0.0])).abs() < 1e-14);
    }

    #[test]
    fn c2_expectation_matches_direct_double_sum() {
        // brute-force oracle on a tiny grid: build a_i, b_j, G^2 in real space
        let (g, p, cut) = setup(8, 4.0, 1, 1);
        let part = DyadicPartition::new(g).unwrap();
        let x = g.index(4, 4, 5);
        let t = 0.07;
        let ctx = ExpectationC2::new(&p, &cut, &part, &[x]);
        let got = ctx.integrand(t)[0];
        let h3 = g.cell_volume();
        let vn = crate::gff::v_n_symbol(&cut, p.m0sq, t).unwrap();
        let rho2 = cut.rho_m().map(|r| r * r);
        let delta = crate::grid::delta_at(g, x);
        let nb = part.len() as i32;
        let mut expect = 0.0;
        for i in -1..nb - 1 {
            for j in -1..nb - 1 {
                if (i - j).abs() > 1 {
                    continue;
                }
                let a = part.block(&delta, i).unwrap().mul(&rho2);
                let hb = crate::grid::apply_table(&delta, &SymbolTable::heat(g, p.m0sq, t).product(cut.psi_n_sq())).unwrap();
                let b = part.block(&hb, j).unwrap().mul(&rho2);
                for y in 0..g.len() {
                    let gy = crate::grid::apply_table(&crate::grid::delta_at(g, y), &vn).unwrap();
                    for w in 0..g.len() {
                        let k = gy.at(w);
                        expect += h3 * h3 * a.at(y) * b.at(w) * k * k;
                    }
                }
            }
        }
        expect *= 2.0;
        assert!((got - expect).abs() < 1e-10 * expect.abs().max(1e-12), "{got} vs {expect}");
    }

    #[test]
    fn c2_rotation_invariance() {
        let (g, p, cut) = setup(16, 4.0, 1, 1);
        let part = DyadicPartition::new(g).unwrap();
        let c = 8;
        let pts = [g.index(c + 1, c, c), g.index(c, c + 1, c), g.index(c, c, c - 1), g.index(c - 1, c, c)];
        let spec = QuadratureSpec::default();
        let (v, _) = compute_c2_probes(&p, &cut, &part, &pts, &spec, C2Formula::Expectation).unwrap();
        for w in &v[1..] {
            assert!((w - v[0]).abs() < 1e-9 * v[0].abs(), "{v:?}");
        }
    }

    #[test]
    fn literal_formula_runs() {
        let (g, p, cut) = setup(8, 2.0, 1, 1);
        let part = DyadicPartition::new(g).unwrap();
        let spec = QuadratureSpec {
            tol: 1e-4,
            ..Default::default()
        };
        let (v, _) = compute_c2(&p, &cut, &part, g.origin(), &spec, C2Formula::Literal).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn wick_power_rejects_bad_order() {
        let (g, p, cut) = setup(8, 2.0, 1, 1);
        let k = RenormConstants::without_c2(&p, &cut).unwrap();
        assert!(wick_power(&RealField::zeros(g), 4, &cut, &k, false).is_err());
    }

    #[test]
    fn wick_centering_and_pairing() {
        let (g, p, cut) = setup(8, 2.0, 1, 1);
        let k = RenormConstants::without_c2(&p, &cut).unwrap();
        let ff = FreeField::new(g, p.m0sq);
        let mut rng = rng_stream(5, 0);
        let x = g.origin();
        let y = g.index(4, 4, 5);
        let (mut w2, mut w3y, mut w22) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..20_000 {
            let z = ff.sample_spectral(&mut rng).to_real_unchecked();
            let a = wick_power(&z, 2, &cut, &k, false).unwrap();
            let b = wick_power(&z, 3, &cut, &k, false).unwrap();
            let pz = crate::cutoff::p_n(&z, &cut).unwrap();
            w2.push(a.at(x));
            w3y.push(b.at(x) * pz.at(x));
            w22.push(a.at(x) * a.at(y));
        }
        let (m, e) = mean_and_error(&w2);
        assert!(m.abs() < 4.0 * e);
        let (m, e) = mean_and_error(&w3y);
        assert!(m.abs() < 4.0 * e);
        let cov = crate::grid::apply_table(&crate::grid::delta_at(g, y), &crate::gff::v_n_symbol(&cut, p.m0sq, 0.0).unwrap())
            .unwrap()
            .at(x);
        let (m, e) = mean_and_error(&w22);
        assert!(z_score(m, e, 2.0 * cov * cov, 0.0) < 4.0, "{m} +- {e} vs {}", 2.0 * cov * cov);
    }

    #[test]
    fn exp_weights_integrate_linear_sources_exactly() {
        let omega = [5.0, 40.0];
        let dt = 0.05;
        let w = ExpWeights::new(&omega, dt, SourceRule::Trapezoid);
        for (k, &om) in omega.iter().enumerate() {
            // source s(t) = 1 + 3t on [0, dt], exact int e^{-(dt-s)om} s ds
            let e = (-om * dt).exp();
            let exact = (1.0 - e) / om + 3.0 * (dt / om - (1.0 - e) / (om * om));
            let got = w.left[k] * 1.0 + w.right[k] * (1.0 + 3.0 * dt);
            assert!((got - exact).abs() < 1e-14, "{got} {exact}");
        }
    }

    #[test]
    fn homogeneous_decay() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let omega = SymbolTable::dispersion(g, 5.0);
        let init = RealField::constant(g, 1.0).to_spectral();
        let zeros = vec![SpectralField::zeros(g); 11];
        let out = tree_integrate(&init, &zeros, &omega, 0.1, SourceRule::Trapezoid);
        let v = out.to_real_unchecked();
        let expect = (-5.0f64).exp();
        assert!(v.values().iter().all(|x| (x - expect).abs() < 1e-14));
    }

    #[test]
    fn tree03_is_centered_and_stationary() {
        let (g, p, cut) = setup(8, 2.0, 1, 1);
        let c1 = compute_c1(&p, &cut, C1Mode::GridExact).unwrap();
        let mut rng = rng_stream(6, 0);
        let mut ev = WickEvolver::new(&p, &cut, c1, 0.01, SourceRule::Trapezoid, TreeSet::TREE03, 0, &mut rng).unwrap();
        assert_eq!(ev.burn_in(2.0, &mut rng), BurnInStatus::Ok);
        let x = g.origin();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for _ in 0..4000 {
            for _ in 0..10 {
                ev.step(&mut rng);
            }
            let v = ev.tree03_spectral().eval_at(x);
            if first.len() < 2000 {
                first.push(v);
            } else {
                second.push(v);
            }
        }
        let all: Vec<f64> = first.iter().chain(&second).copied().collect();
        let (m, e) = batch_means(&all, 40).unwrap();
        assert!(m.abs() < 4.0 * e, "{m} +- {e}");
        let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
        let (a, ea) = batch_means(&sq(&first), 20).unwrap();
        let (b, eb) = batch_means(&sq(&second), 20).unwrap();
        assert!(z_score(a, ea, b, eb) < 4.0);
    }

    #[test]
    fn short_burn_in_flagged() {
        assert_eq!(burn_in_status(0.5, 5.0), BurnInStatus::TooShort);
        assert_eq!(burn_in_status(2.0, 5.0), BurnInStatus::Ok);
    }
}
