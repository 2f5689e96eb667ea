//! Estimators for the finite-level properties of the measure: cumulants,
//! octahedral symmetry, reflection positivity, Besov-norm support and the
//! non-Gaussianity tree moment.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffPair;
use crate::error::{Error, Result};
use crate::gff::ModelParams;
use crate::grid::{delta_spectrum, inverse_pair, GridSpec, RealField, SpectralField, SymbolTable};
use crate::lp::{besov_norm, BesovParams, DyadicPartition, Weight};
use crate::mcmc::{normalized_weights, WeightedSample};
use crate::quadrature::{integrate_vec, QuadratureInfo, QuadratureSpec};
use crate::stats::{batch_means, jackknife, mean_and_error, PowerSums};
use crate::wick::{SourceRule, TreeSet, WickEvolver};
use crate::Complex64;

/// A scalar function of a field sample.
#[derive(Clone, Debug)]
pub struct Observable {
    pub id: String,
    pub kind: ObservableKind,
}

#[derive(Clone, Debug)]
pub enum ObservableKind {
    /// `<f, phi>` under the grid pairing.
    Smeared { f: RealField, spectrum: SpectralField },
    /// `phi(x)` at one grid index.
    Point(usize),
    /// `|phi|_{L^2}`.
    L2Norm,
}

impl Observable {
    pub fn smeared(id: impl Into<String>, f: RealField) -> Self {
        let spectrum = f.to_spectral();
        Self {
            id: id.into(),
            kind: ObservableKind::Smeared { f, spectrum },
        }
    }

    pub fn point(id: impl Into<String>, idx: usize) -> Self {
        Self {
            id: id.into(),
            kind: ObservableKind::Point(idx),
        }
    }

    pub fn l2_norm(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: ObservableKind::L2Norm,
        }
    }

    /// Test function of a smeared observable.
    pub fn test_function(&self) -> Option<&RealField> {
        match &self.kind {
            ObservableKind::Smeared { f, .. } => Some(f),
            _ => None,
        }
    }

    pub fn eval(&self, phi: &RealField) -> f64 {
        match &self.kind {
            ObservableKind::Smeared { f, .. } => f.inner(phi),
            ObservableKind::Point(i) => phi.at(*i),
            ObservableKind::L2Norm => phi.norm_l2(),
        }
    }

    pub fn eval_spectral(&self, phi: &SpectralField) -> f64 {
        match &self.kind {
            ObservableKind::Smeared { spectrum, .. } => spectrum.pairing(phi),
            ObservableKind::Point(i) => phi.eval_at(*i),
            ObservableKind::L2Norm => phi.pairing(phi).max(0.0).sqrt(),
        }
    }
}

/// `exp(-|x - c|^2 / (2 w^2))`.
pub fn gaussian_bump(grid: GridSpec, center: [f64; 3], width: f64) -> RealField {
    RealField::from_fn(grid, |x| {
        let r2: f64 = (0..3).map(|k| (x[k] - center[k]).powi(2)).sum();
        (-r2 / (2.0 * width * width)).exp()
    })
}

/// Bumps at 5 positions and 3 widths.
pub fn default_family(grid: GridSpec) -> Vec<Observable> {
    let centers = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, 1.0, 0.0],
        [-0.5, 0.5, 1.0],
        [1.0, -1.0, 0.5],
    ];
    let mut out = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        for w in [0.5, 1.0, 1.5] {
            out.push(Observable::smeared(format!("bump{i}_w{w}"), gaussian_bump(grid, *c, w)));
        }
    }
    out
}

/// `Δ_j δ_y`.
pub fn block_probe(partition: &DyadicPartition, j: i32, y: usize) -> Result<RealField> {
    let grid = *partition.grid();
    let mut s = delta_spectrum(grid, y);
    s.multiply(partition.symbol(j)?);
    Ok(s.to_real_unchecked())
}

/// Observable values per sample, one row per sample.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SampleTable {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn new(observables: &[Observable]) -> Self {
        Self {
            ids: observables.iter().map(|o| o.id.clone()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_spectral(&mut self, observables: &[Observable], phi: &SpectralField) {
        self.rows.push(observables.iter().map(|o| o.eval_spectral(phi)).collect());
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn column_by_id(&self, id: &str) -> Option<Vec<f64>> {
        self.ids.iter().position(|x| x == id).map(|i| self.column(i))
    }

    /// Appends the rows of `other` (same columns).
    pub fn extend(&mut self, other: SampleTable) {
        debug_assert_eq!(self.ids, other.ids);
        self.rows.extend(other.rows);
    }
}

/// Value with a one-sigma error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn z(&self, reference: f64) -> f64 {
        crate::stats::z_score(self.value, self.error, reference, 0.0)
    }
}

const JACKKNIFE_BLOCKS: usize = 20;

/// `k`-statistic of order `order` with a blocked-jackknife error.
pub fn cumulant(xs: &[f64], order: usize) -> Result<Estimate> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidParameter(format!("cumulant order {order} not in 1..=4")));
    }
    if xs.len() < 100 {
        return Err(Error::InsufficientData(format!("{} samples; need at least 100", xs.len())));
    }
    let (value, error) = jackknife(xs.len(), JACKKNIFE_BLOCKS, |keep| {
        let mut ps = PowerSums::default();
        for (i, &x) in xs.iter().enumerate() {
            if keep(i) {
                ps.push(x);
            }
        }
        ps.k_stat(order)
    })?;
    Ok(Estimate { value, error })
}

/// `cumulants`: orders `1..=max_order`.
pub fn cumulants(xs: &[f64], max_order: usize) -> Result<Vec<Estimate>> {
    (1..=max_order).map(|k| cumulant(xs, k)).collect()
}

/// Fourth cumulant under the importance weights, minus the unweighted one.
///
/// The unweighted `k_4` of the Gaussian proposal has mean zero, so the
/// difference is an estimate of the target's `kappa_4` with the shared
/// Gaussian fluctuation removed.
pub fn kappa4_importance(samples: &[WeightedSample], column: usize) -> Result<Estimate> {
    if samples.len() < 100 {
        return Err(Error::InsufficientData(format!("{} samples; need at least 100", samples.len())));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.values[column]).collect();
    let stat = |keep: &dyn Fn(usize) -> bool| {
        let idx: Vec<usize> = (0..samples.len()).filter(|&i| keep(i)).collect();
        let sub: Vec<WeightedSample> = idx.iter().map(|&i| samples[i].clone()).collect();
        let w = normalized_weights(&sub);
        let x: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let kw = crate::stats::weighted_cumulant(&x, &w, 4);
        let ku = crate::stats::weighted_cumulant(&x, &vec![1.0; x.len()], 4);
        kw - ku
    };
    let (value, error) = jackknife(samples.len(), JACKKNIFE_BLOCKS, stat)?;
    Ok(Estimate { value, error })
}

/// Element of the octahedral group: `(θx)_k = s_k x_{perm[k]}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Octa {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

impl Octa {
    pub const IDENTITY: Octa = Octa {
        perm: [0, 1, 2],
        flip: [false; 3],
    };

    /// `x_1 -> -x_1`.
    pub const REFLECT_X1: Octa = Octa {
        perm: [0, 1, 2],
        flip: [true, false, false],
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    fn map_index(&self, grid: &GridSpec, idx: usize) -> usize {
        let n = grid.n();
        let a = grid.unravel(idx);
        let mut b = [0usize; 3];
        for k in 0..3 {
            let v = a[self.perm[k]];
            b[k] = if self.flip[k] { (n - v) % n } else { v };
        }
        grid.index(b[0], b[1], b[2])
    }

    /// `(θf)(x) = f(θx)`, exact on the grid.
    pub fn apply(&self, f: &RealField) -> RealField {
        let grid = *f.grid();
        let vals = (0..grid.len()).map(|i| f.at(self.map_index(&grid, i))).collect();
        RealField::from_values(grid, vals).expect("grid-sized")
    }
}

/// All 48 rotations and reflections of the cube, identity first.
pub fn octahedral_group() -> Vec<Octa> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(48);
    for perm in perms {
        for bits in 0..8u8 {
            out.push(Octa {
                perm,
                flip: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0],
            });
        }
    }
    out
}

/// Test functions and their images under a set of group elements.
#[derive(Clone, Debug)]
pub struct SymmetryProbe {
    pub base: Vec<Observable>,
    pub group: Vec<Octa>,
}

impl SymmetryProbe {
    pub fn new(base: Vec<Observable>, group: Vec<Octa>) -> Result<Self> {
        if base.iter().any(|o| o.test_function().is_none()) {
            return Err(Error::InvalidParameter("symmetry probes need smeared observables".into()));
        }
        if group.first() != Some(&Octa::IDENTITY) {
            return Err(Error::InvalidParameter("group list must start with the identity".into()));
        }
        Ok(Self { base, group })
    }

    /// `<f_i ∘ θ_g, phi>` observables, ordered `[i][g]`.
    pub fn observables(&self) -> Vec<Observable> {
        let mut out = Vec::new();
        for o in &self.base {
            let f = o.test_function().expect("checked");
            for (g, th) in self.group.iter().enumerate() {
                out.push(Observable::smeared(format!("{}@g{g}", o.id), th.apply(f)));
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetryEntry {
    pub observable: String,
    pub element: Octa,
    pub order: u32,
    pub difference: f64,
    pub error: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub entries: Vec<SymmetryEntry>,
    pub max_z: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// `symmetry_test`: paired moment differences `E[X_θ^k] - E[X^k]`, `k = 1..=4`.
///
/// `table` must hold the columns of [`SymmetryProbe::observables`] in order.
pub fn symmetry_test(probe: &SymmetryProbe, table: &SampleTable, batches: usize, threshold: f64) -> Result<SymmetryReport> {
    let ng = probe.group.len();
    if table.ids.len() != probe.base.len() * ng {
        return Err(Error::DimensionMismatch {
            expected: probe.base.len() * ng,
            got: table.ids.len(),
        });
    }
    let mut entries = Vec::new();
    for (i, o) in probe.base.iter().enumerate() {
        let base = table.column(i * ng);
        for (g, th) in probe.group.iter().enumerate().skip(1) {
            let x = table.column(i * ng + g);
            for order in 1..=4u32 {
                let d: Vec<f64> = x
                    .iter()
                    .zip(&base)
                    .map(|(a, b)| a.powi(order as i32) - b.powi(order as i32))
                    .collect();
                let (m, e) = batch_means(&d, batches)?;
                let z = if e > 0.0 { m.abs() / e } else if m == 0.0 { 0.0 } else { f64::INFINITY };
                entries.push(SymmetryEntry {
                    observable: o.id.clone(),
                    element: *th,
                    order,
                    difference: m,
                    error: e,
                    z,
                });
            }
        }
    }
    let max_z = entries.iter().fold(0.0f64, |m, e| m.max(e.z));
    Ok(SymmetryReport {
        entries,
        max_z,
        threshold,
        pass: max_z <= threshold,
    })
}

/// Observables for the reflection-positivity Gram matrix: `(θf_j, f_j)` pairs.
///
/// Every `f_j` must vanish on `x_1 <= 0`.
pub fn rp_observables(fs: &[RealField]) -> Result<(Vec<Observable>, Vec<Observable>)> {
    let mut reflected = Vec::new();
    let mut plain = Vec::new();
    for (j, f) in fs.iter().enumerate() {
        let grid = *f.grid();
        for i in 0..grid.len() {
            if grid.point(i)[0] <= 0.0 && f.at(i) != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "test function {j} does not vanish on x1 <= 0"
                )));
            }
        }
        reflected.push(Observable::smeared(format!("rp{j}_theta"), Octa::REFLECT_X1.apply(f)));
        plain.push(Observable::smeared(format!("rp{j}"), f.clone()));
    }
    Ok((reflected, plain))
}

/// `f` times a smooth factor vanishing on `x_1 <= 0`.
pub fn restrict_to_positive_half(f: &RealField) -> RealField {
    let grid = *f.grid();
    let mut out = f.clone();
    for i in 0..grid.len() {
        let x1 = grid.point(i)[0];
        out.values_mut()[i] *= if x1 <= 0.0 { 0.0 } else { 1.0 - (-x1 * x1 * 4.0).exp() };
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RpReport {
    /// Row-major `(re, im)` entries of the Hermitized matrix.
    pub matrix: Vec<Vec<(f64, f64)>>,
    pub min_eigenvalue: f64,
    pub error: f64,
    /// Largest entry-wise z-score against the Gaussian closed form, when supplied.
    pub gaussian_max_z: Option<f64>,
}

fn hermitized_min_eig(m: &DMatrix<Complex64>) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn gram_matrix(p: &[Vec<f64>], q: &[Vec<f64>], keep: &dyn Fn(usize) -> bool) -> DMatrix<Complex64> {
    let n = p.len();
    let samples = p[0].len();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    let mut count = 0usize;
    for s in 0..samples {
        if !keep(s) {
            continue;
        }
        count += 1;
        for j in 0..n {
            for k in 0..n {
                let a = p[j][s] - q[k][s];
                m[(j, k)] += Complex64::new(a.cos(), a.sin());
            }
        }
    }
    m / Complex64::new(count as f64, 0.0)
}

/// `rp_gram`: `M_jk = E exp(i <θf_j - f_k, phi>)` from the two column sets.
pub fn rp_gram(reflected: &[Vec<f64>], plain: &[Vec<f64>], gaussian: Option<&DMatrix<Complex64>>) -> Result<RpReport> {
    if reflected.len() != plain.len() || reflected.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: reflected.len(),
            got: plain.len(),
        });
    }
    let n = reflected[0].len();
    let full = gram_matrix(reflected, plain, &|_| true);
    let (min_eigenvalue, error) = jackknife(n, JACKKNIFE_BLOCKS, |keep| {
        hermitized_min_eig(&gram_matrix(reflected, plain, keep))
    })?;
    let gaussian_max_z = match gaussian {
        None => None,
        Some(g) => {
            let mut zmax = 0.0f64;
            let d = reflected.len();
            for j in 0..d {
                for k in 0..d {
                    for part in 0..2 {
                        let (v, e) = jackknife(n, JACKKNIFE_BLOCKS, |keep| {
                            let mut acc = 0.0;
                            let mut c = 0.0;
                            for s in 0..n {
                                if keep(s) {
                                    let a = reflected[j][s] - plain[k][s];
                                    acc += if part == 0 { a.cos() } else { a.sin() };
                                    c += 1.0;
                                }
                            }
                            acc / c
                        })?;
                        let target = if part == 0 { g[(j, k)].re } else { g[(j, k)].im };
                        zmax = zmax.max(crate::stats::z_score(v, e, target, 0.0));
                    }
                }
            }
            Some(zmax)
        }
    };
    let h = (&full + full.adjoint()) * Complex64::new(0.5, 0.0);
    let matrix = (0..h.nrows())
        .map(|j| (0..h.ncols()).map(|k| (h[(j, k)].re, h[(j, k)].im)).collect())
        .collect();
    Ok(RpReport {
        matrix,
        min_eigenvalue,
        error,
        gaussian_max_z,
    })
}

/// Closed-form Gram matrix for the free field: `exp(-<g, C g>/2)`, `g = θf_j - f_k`.
pub fn gaussian_rp_matrix(fs: &[RealField], m0sq: f64) -> DMatrix<Complex64> {
    let n = fs.len();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    if n == 0 {
        return m;
    }
    let cov = SymbolTable::resolvent(*fs[0].grid(), m0sq);
    for j in 0..n {
        let tf = Octa::REFLECT_X1.apply(&fs[j]);
        for k in 0..n {
            let g = tf.sub(&fs[k]);
            let cg = crate::grid::apply_table(&g, &cov).expect("same grid");
            m[(j, k)] = Complex64::new((-0.5 * g.inner(&cg)).exp(), 0.0);
        }
    }
    m
}

/// `|phi|^2` in `B^{-1/2-eps}_{p,p}(nu^{p/2})`.
pub fn besov_sq_norm(phi: &RealField, partition: &DyadicPartition, weight: &Weight, eps: f64, p: f64) -> Result<f64> {
    let params = BesovParams::new(-0.5 - eps, p, p, weight.powered(p / 2.0))?;
    let v = besov_norm(phi, partition, &params)?;
    Ok(v * v)
}

/// `besov_support_estimate`: mean of squared norms with a batch-means error.
pub fn besov_support_estimate(norms_sq: &[f64], batches: usize) -> Result<Estimate> {
    if norms_sq.is_empty() {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    if norms_sq.iter().all(|&v| v == 0.0) {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let (value, error) = if norms_sq.len() >= 2 * batches {
        batch_means(norms_sq, batches)?
    } else {
        mean_and_error(norms_sq)
    };
    Ok(Estimate { value, error })
}

/// Deterministic tree moment for one test function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeMoment {
    /// `E[<f, P_N Z>^3 <f, P_{M,N} Z03>]` at the cut-off level.
    pub finite: f64,
    /// `int int (e^{sL} R f)^3 (e^{sL} f)` without cutoffs (the limit integral).
    pub limit: f64,
    pub quadrature: QuadratureInfo,
}

/// Deterministic branch of `nongauss_tree_check`.
///
/// At the cut-off level the pairing expansion gives
/// `6 int_0^inf ds int rho^3 (rho P_N e^{sL} P_N(rho f)) (V_N(s) f)^3 dx`.
pub fn tree_moment(params: &ModelParams, cut: &CutoffPair, f: &RealField, quad: &QuadratureSpec) -> Result<TreeMoment> {
    let grid = *cut.grid();
    grid.check_same(f.grid())?;
    let fh = f.to_spectral();
    let rf = f.mul(cut.rho_m()).to_spectral();
    let omega = SymbolTable::dispersion(grid, params.m0sq);
    let psi2 = cut.psi_n_sq().values();
    let rho = cut.rho_m().values();
    let h3 = grid.cell_volume();
    let integrand = |s: f64| -> Vec<f64> {
        let len = grid.len();
        let mut a = vec![Complex64::new(0.0, 0.0); len];
        let mut b = vec![Complex64::new(0.0, 0.0); len];
        let mut al = vec![Complex64::new(0.0, 0.0); len];
        let mut bl = vec![Complex64::new(0.0, 0.0); len];
        for i in 0..len {
            let w = omega.values()[i];
            let e = (-s * w).exp();
            a[i] = fh.coeffs()[i] * (psi2[i] * e / (2.0 * w));
            b[i] = rf.coeffs()[i] * (psi2[i] * e);
            al[i] = fh.coeffs()[i] * (e / (2.0 * w));
            bl[i] = fh.coeffs()[i] * e;
        }
        let (ra, rb) = inverse_pair(&a, &b, grid);
        let (la, lb) = inverse_pair(&al, &bl, grid);
        let finite: f64 = (0..len)
            .map(|i| rho[i].powi(4) * rb[i] * ra[i].powi(3))
            .sum::<f64>()
            * 6.0
            * h3;
        let limit: f64 = (0..len).map(|i| la[i].powi(3) * lb[i]).sum::<f64>() * h3;
        vec![finite, limit]
    };
    let (v, info) = integrate_vec(integrand, quad.resolved_t_max(params.m0sq), quad)?;
    Ok(TreeMoment {
        finite: v[0],
        limit: v[1],
        quadrature: info,
    })
}

/// Limit integral of the tree moment for `f = Δ_j δ_y`, for each `j` in `js`.
pub fn block_tree_integrals(
    params: &ModelParams,
    partition: &DyadicPartition,
    js: &[i32],
    y: usize,
    quad: &QuadratureSpec,
) -> Result<(Vec<f64>, QuadratureInfo)> {
    let grid = *partition.grid();
    let omega = SymbolTable::dispersion(grid, params.m0sq);
    let delta = delta_spectrum(grid, y);
    let probes: Vec<Vec<Complex64>> = js
        .iter()
        .map(|&j| {
            let sym = partition.symbol(j)?;
            Ok(delta.coeffs().iter().zip(sym.values()).map(|(c, s)| c * s).collect())
        })
        .collect::<Result<_>>()?;
    let h3 = grid.cell_volume();
    let integrand = |s: f64| -> Vec<f64> {
        probes
            .iter()
            .map(|p| {
                let mut a = p.clone();
                let mut b = p.clone();
                for i in 0..p.len() {
                    let w = omega.values()[i];
                    let e = (-s * w).exp();
                    a[i] *= e / (2.0 * w);
                    b[i] *= e;
                }
                let (ra, rb) = inverse_pair(&a, &b, grid);
                ra.iter().zip(&rb).map(|(x, y)| x.powi(3) * y).sum::<f64>() * h3
            })
            .collect()
    };
    integrate_vec(integrand, quad.resolved_t_max(params.m0sq), quad)
}

/// Least-squares slope of `log2 |v_j|` against `j`.
pub fn log2_slope(js: &[i32], values: &[f64]) -> f64 {
    let n = js.len() as f64;
    let x: Vec<f64> = js.iter().map(|&j| j as f64).collect();
    let y: Vec<f64> = values.iter().map(|v| v.abs().log2()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Monte Carlo branch of `nongauss_tree_check`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TreeMcSpec {
    pub dt: f64,
    pub burn_in: f64,
    /// Time between recorded samples.
    pub spacing: f64,
    pub samples: usize,
}

/// Sample mean of `<f, P_N Z>^3 <f, P_{M,N} Z03>` along a stationary path.
pub fn tree_moment_mc<R: Rng>(
    params: &ModelParams,
    cut: &CutoffPair,
    f: &RealField,
    spec: &TreeMcSpec,
    stream: u64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let c1 = crate::wick::compute_c1(params, cut, crate::wick::C1Mode::GridExact)?;
    let mut ev = WickEvolver::new(params, cut, c1, spec.dt, SourceRule::Trapezoid, TreeSet::TREE03, stream, rng)?;
    ev.burn_in(spec.burn_in, rng);
    // <f, P_N Z> and <f, P_{M,N} T> = <P_N(rho f), T> as spectral pairings
    let mut pf = f.to_spectral();
    pf.multiply(cut.psi_n());
    let mut prf = f.mul(cut.rho_m()).to_spectral();
    prf.multiply(cut.psi_n());
    let every = ((spec.spacing / spec.dt).round() as usize).max(1);
    let mut out = Vec::with_capacity(spec.samples);
    while out.len() < spec.samples {
        for _ in 0..every {
            ev.step(rng);
        }
        let a = pf.pairing(&ev.ou().z);
        let b = prf.pairing(ev.tree03_spectral());
        out.push(a * a * a * b);
    }
    Ok(out)
}
