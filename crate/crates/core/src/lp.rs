//! Littlewood–Paley blocks, weighted Besov norms and Bony paraproducts.


use crate::error::{Error, Result};
use crate::grid::{GridSpec, RealField, SymbolTable};
use crate::profile::{chi, dyadic_phi, StepKind};

/// Dyadic partition of unity tabulated on a grid's momentum lattice.
///
/// Blocks run over `j = -1..=j_max`. The last block carries the whole
/// spectral tail `1 - chi(2^{-j_max}|k|)`, so the blocks sum to one exactly.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: GridSpec,
    step: StepKind,
    j_max: i32,
    symbols: Vec<SymbolTable>,
}

impl DyadicPartition {
    pub fn new(grid: GridSpec) -> Result<Self> {
        Self::with_step(grid, StepKind::Mollified)
    }

    pub fn with_step(grid: GridSpec, step: StepKind) -> Result<Self> {
        let kmax = grid.max_momentum();
        if 0.75 >= kmax {
            return Err(Error::InvalidGrid(
                "momentum lattice does not reach the j = 0 block".into(),
            ));
        }
        // largest j whose block support starts below |k|_max
        let mut j_max = 0;
        while 0.75 * 2f64.powi(j_max + 1) < kmax {
            j_max += 1;
        }
        let c = chi(step);
        let mut symbols = Vec::with_capacity(j_max as usize + 2);
        symbols.push(SymbolTable::radial(grid, |r| c.eval(r)));
        for j in 0..j_max {
            let s = 2f64.powi(-j);
            symbols.push(SymbolTable::radial(grid, |r| dyadic_phi(step, s * r)));
        }
        let s = 2f64.powi(-j_max);
        symbols.push(SymbolTable::radial(grid, |r| 1.0 - c.eval(s * r)));
        Ok(Self {
            grid,
            step,
            j_max,
            symbols,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn step(&self) -> StepKind {
        self.step
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Number of blocks, `j_max + 2`.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, j: i32) -> Result<&SymbolTable> {
        if j < -1 || j > self.j_max {
            return Err(Error::BlockOutOfRange {
                index: j,
                max: self.j_max,
            });
        }
        Ok(&self.symbols[(j + 1) as usize])
    }

    /// `Δ_j f`.
    pub fn block(&self, f: &RealField, j: i32) -> Result<RealField> {
        self.grid.check_same(f.grid())?;
        let mut s = f.to_spectral();
        s.multiply(self.symbol(j)?);
        Ok(s.to_real_unchecked())
    }

    /// All blocks `[Δ_{-1} f, .., Δ_{j_max} f]` from a single forward transform.
    pub fn blocks(&self, f: &RealField) -> Result<Vec<RealField>> {
        self.grid.check_same(f.grid())?;
        let base = f.to_spectral();
        Ok(self
            .symbols
            .iter()
            .map(|m| {
                let mut s = base.clone();
                s.multiply(m);
                s.to_real_unchecked()
            })
            .collect())
    }
}

/// Polynomial weight `nu(x) = (1 + a|x|^2)^{-sigma/2}` on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    pub sigma: f64,
    pub a: f64,
    values: Vec<f64>,
}

impl Weight {
    pub fn new(grid: GridSpec, sigma: f64, a: f64) -> Result<Self> {
        if !(sigma >= 0.0 && a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight needs sigma >= 0 and a > 0 (sigma={sigma}, a={a})"
            )));
        }
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                (1.0 + a * r2).powf(-sigma / 2.0)
            })
            .collect();
        Ok(Self { sigma, a, values })
    }

    /// The constant weight `nu = 1`.
    pub fn unit(grid: GridSpec) -> Self {
        Self {
            sigma: 0.0,
            a: 1.0,
            values: vec![1.0; grid.len()],
        }
    }

    /// `nu^q` as a weight (exponent `q sigma`).
    pub fn powered(&self, q: f64) -> Self {
        Self {
            sigma: self.sigma * q,
            a: self.a,
            values: self.values.iter().map(|v| v.powf(q)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `||f||_{L^p(nu)}` with the grid measure `nu(x) h^3`; `p = inf` is the plain grid max.
pub fn lp_norm(f: &RealField, p: f64, weight: &Weight) -> f64 {
    if p.is_infinite() {
        return f.max_abs();
    }
    let h3 = f.grid().cell_volume();
    let s: f64 = f
        .values()
        .iter()
        .zip(weight.values())
        .map(|(v, w)| v.abs().powf(p) * w)
        .sum();
    (s * h3).powf(1.0 / p)
}

/// Parameters of `B^s_{p,r}(nu)`.
#[derive(Clone, Debug)]
pub struct BesovParams {
    pub s: f64,
    pub p: f64,
    pub r: f64,
    pub weight: Weight,
}

impl BesovParams {
    pub fn new(s: f64, p: f64, r: f64, weight: Weight) -> Result<Self> {
        if !(p >= 1.0) || !(r >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Besov integrability indices must lie in [1, inf] (p={p}, r={r})"
            )));
        }
        Ok(Self { s, p, r, weight })
    }
}

/// Per-block values `2^{js} ||Δ_j f||_{L^p(nu)}` for `j = -1..=j_max`.
pub fn besov_profile(blocks: &[RealField], params: &BesovParams) -> Vec<f64> {
    blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let j = i as i32 - 1;
            2f64.powf(j as f64 * params.s) * lp_norm(b, params.p, &params.weight)
        })
        .collect()
}

/// `||f||_{B^s_{p,r}(nu)}` over the grid-resolvable blocks.
pub fn besov_norm(f: &RealField, partition: &DyadicPartition, params: &BesovParams) -> Result<f64> {
    let blocks = partition.blocks(f)?;
    Ok(combine_r(&besov_profile(&blocks, params), params.r))
}

fn combine_r(terms: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        terms.iter().fold(0.0, |m, &t| m.max(t))
    } else {
        terms.iter().map(|t| t.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// Bony decomposition `f g = lt + res + gt`.
#[derive(Clone, Debug)]
pub struct Paraproducts {
    pub lt: RealField,
    pub res: RealField,
    pub gt: RealField,
}

/// `f ⊘< g = sum_{j>=0} S_j f Δ_{j+1} g` from precomputed blocks.
fn low_high(fb: &[RealField], gb: &[RealField]) -> RealField {
    let grid = *fb[0].grid();
    let mut out = RealField::zeros(grid);
    let mut partial = RealField::zeros(grid);
    // block vectors are offset by one: index i holds Δ_{i-1}
    for i in 1..gb.len() {
        partial.axpy(1.0, &fb[i - 1]);
        if i + 1 < gb.len() {
            let prod = partial.mul(&gb[i + 1]);
            out.axpy(1.0, &prod);
        }
    }
    out
}

/// `f ⊘= g = sum_j Δ_j f (Δ_{j-1} + Δ_j + Δ_{j+1}) g` from precomputed blocks.
pub fn resonant_from_blocks(fb: &[RealField], gb: &[RealField]) -> RealField {
    let grid = *fb[0].grid();
    let nb = fb.len();
    let mut out = RealField::zeros(grid);
    for i in 0..nb {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(nb - 1);
        let mut near = gb[lo].clone();
        for g in &gb[lo + 1..=hi] {
            near.axpy(1.0, g);
        }
        let fv = fb[i].values();
        for (o, (a, b)) in out.values_mut().iter_mut().zip(fv.iter().zip(near.values())) {
            *o += a * b;
        }
    }
    out
}

pub fn paraproduct(
    f: &RealField,
    g: &RealField,
    partition: &DyadicPartition,
) -> Result<Paraproducts> {
    f.grid().check_same(g.grid())?;
    let fb = partition.blocks(f)?;
    let gb = partition.blocks(g)?;
    Ok(Paraproducts {
        lt: low_high(&fb, &gb),
        res: resonant_from_blocks(&fb, &gb),
        gt: low_high(&gb, &fb),
    })
}

/// Resonant product alone.
pub fn resonant(f: &RealField, g: &RealField, partition: &DyadicPartition) -> Result<RealField> {
    f.grid().check_same(g.grid())?;
    Ok(resonant_from_blocks(&partition.blocks(f)?, &partition.blocks(g)?))
}
