//! Momentum cutoff `P_N`, space cutoff `rho_M` and their composites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, RealField, SymbolTable};
use crate::lp::Weight;
use crate::profile::{unit_cutoff, RadialProfile, StepKind};

/// Fraction of the half box that `2M` may occupy.
pub const WRAP_MARGIN: f64 = 0.0;

/// Smoothness choice for the `psi` and `rho` profiles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default)]
    pub step: StepKind,
}

/// Base profiles `(psi, rho)`: both 1 on the unit ball and 0 outside radius 2.
pub fn build_profiles(config: ProfileConfig) -> (RadialProfile, RadialProfile) {
    (unit_cutoff(config.step), unit_cutoff(config.step))
}

/// `psi_N` on the momentum lattice and `rho_M` on the grid, plus the weight `nu`.
#[derive(Clone, Debug)]
pub struct CutoffPair {
    m: u32,
    n: u32,
    psi: RadialProfile,
    rho: RadialProfile,
    psi_n: SymbolTable,
    psi_n_sq: SymbolTable,
    rho_m: RealField,
    weight: Weight,
}

impl CutoffPair {
    pub fn new(grid: GridSpec, m: u32, n: u32, profiles: ProfileConfig, weight: Weight) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("space cutoff M must be positive".into()));
        }
        if 2.0 * m as f64 > grid.half_length() * (1.0 - WRAP_MARGIN) {
            return Err(Error::InvalidParameter(format!(
                "space cutoff needs 2M <= L so the interaction never wraps (M={m}, L={})",
                grid.half_length()
            )));
        }
        let (psi, rho) = build_profiles(profiles);
        let scale = 2f64.powi(-(n as i32));
        let psi_n = SymbolTable::radial(grid, |r| psi.eval(scale * r));
        let psi_n_sq = psi_n.map(|v| v * v);
        let inv_m = 1.0 / m as f64;
        let rho_m = RealField::from_fn(grid, |x| {
            rho.eval(inv_m * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
        });
        Ok(Self {
            m,
            n,
            psi,
            rho,
            psi_n,
            psi_n_sq,
            rho_m,
            weight,
        })
    }

    /// Unit weight (`sigma = 0`), for callers that never take weighted norms.
    pub fn unweighted(grid: GridSpec, m: u32, n: u32) -> Result<Self> {
        Self::new(grid, m, n, ProfileConfig::default(), Weight::unit(grid))
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn grid(&self) -> &GridSpec {
        self.rho_m.grid()
    }

    pub fn psi(&self) -> &RadialProfile {
        &self.psi
    }

    pub fn rho(&self) -> &RadialProfile {
        &self.rho
    }

    pub fn psi_n(&self) -> &SymbolTable {
        &self.psi_n
    }

    pub fn psi_n_sq(&self) -> &SymbolTable {
        &self.psi_n_sq
    }

    pub fn rho_m(&self) -> &RealField {
        &self.rho_m
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    /// True when `psi_N = 1` at every lattice momentum.
    pub fn momentum_cutoff_inactive(&self) -> bool {
        self.psi_n.values().iter().all(|&v| v == 1.0)
    }
}

/// `P_N f`.
pub fn p_n(f: &RealField, cut: &CutoffPair) -> Result<RealField> {
    crate::grid::apply_table(f, cut.psi_n())
}

/// `P_{M,N} f = rho_M P_N f`, or its adjoint `P_N(rho_M f)`.
pub fn p_mn(f: &RealField, cut: &CutoffPair, adjoint: bool) -> Result<RealField> {
    if adjoint {
        p_n(&f.mul(cut.rho_m()), cut)
    } else {
        Ok(p_n(f, cut)?.mul(cut.rho_m()))
    }
}

/// Default `(M, N)` schedule `M_N = ceil(sqrt(N))`.
pub fn default_schedule(n: u32) -> u32 {
    ((n as f64).sqrt().ceil() as u32).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::DyadicPartition;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::new(32, 8.0).unwrap()
    }

    fn random_field(g: GridSpec, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealField::from_fn(g, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn rejects_wrapping_cutoff() {
        let g = GridSpec::new(16, 3.0).unwrap();
        assert!(CutoffPair::unweighted(g, 2, 1).is_err());
        assert!(CutoffPair::unweighted(g, 1, 1).is_ok());
    }

    #[test]
    fn profile_examples() {
        let (psi, rho) = build_profiles(ProfileConfig::default());
        assert_eq!(psi.eval(0.5), 1.0);
        assert_eq!(psi.eval(2.5), 0.0);
        assert_eq!(rho.eval(1.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let xi: f64 = rng.gen_range(-3.0..3.0);
            assert_eq!(psi.eval(xi), psi.eval(-xi));
        }
    }

    #[test]
    fn p_n_plateau_and_support() {
        let g = grid();
        let cut = CutoffPair::unweighted(g, 2, 1).unwrap();
        let u = g.momentum_unit();
        // |k| = 4u = 1.57 <= 2 stays; |k| = 11u = 4.32 >= 4 dies
        let low = RealField::from_fn(g, |x| (4.0 * u * x[1]).cos());
        let high = RealField::from_fn(g, |x| (11.0 * u * x[2]).sin());
        assert!(p_n(&low, &cut).unwrap().sub(&low).max_abs() < 1e-13);
        assert!(p_n(&high, &cut).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn block_annihilation() {
        let g = grid();
        let part = DyadicPartition::new(g).unwrap();
        let f = random_field(g, 2);
        for n in 0..=2u32 {
            let cut = CutoffPair::unweighted(g, 2, n).unwrap();
            let pf = p_n(&f, &cut).unwrap();
            for j in 0..=part.j_max() {
                if 2f64.powi(n as i32) <= 3f64.sqrt() / 8.0 * 2f64.powi(j) {
                    assert!(part.block(&pf, j).unwrap().max_abs() < 1e-12 * f.max_abs());
                }
            }
        }
    }

    #[test]
    fn duality() {
        let g = grid();
        let cut = CutoffPair::unweighted(g, 2, 2).unwrap();
        for seed in 0..50 {
            let f = random_field(g, 10 + seed);
            let h = random_field(g, 100 + seed);
            let lhs = p_mn(&f, &cut, false).unwrap().inner(&h);
            let rhs = f.inner(&p_mn(&h, &cut, true).unwrap());
            let scale = f.norm_l2() * h.norm_l2();
            assert!((lhs - rhs).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn localization() {
        let g = grid();
        let cut = CutoffPair::unweighted(g, 2, 5).unwrap();
        assert!(cut.momentum_cutoff_inactive());
        let c = RealField::constant(g, 1.3);
        let out = p_mn(&c, &cut, false).unwrap();
        assert!(out.sub(&cut.rho_m().scaled(1.3)).max_abs() < 1e-13);
        for i in 0..g.len() {
            let x = g.point(i);
            if (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() >= 4.0 {
                assert_eq!(out.at(i), 0.0);
            }
        }
    }

    #[test]
    fn exhaustion() {
        let g = GridSpec::new(16, 4.0).unwrap();
        let f = random_field(g, 3);
        let mut last = f64::INFINITY;
        for n in 0..6u32 {
            let cut = CutoffPair::unweighted(g, 1, n).unwrap();
            let err = p_n(&f, &cut).unwrap().sub(&f).norm_l2();
            assert!(err <= last + 1e-14);
            last = err;
            if 2f64.powi(n as i32) >= g.max_momentum() {
                assert!(err < 1e-13);
            }
        }
    }

    #[test]
    fn schedule() {
        assert_eq!(default_schedule(1), 1);
        assert_eq!(default_schedule(2), 2);
        assert_eq!(default_schedule(4), 2);
        assert_eq!(default_schedule(5), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn nested_cutoffs_agree_on_plateau(n1 in 0u32..4, n2 in 0u32..4, seed in 0u64..100) {
            let g = GridSpec::new(16, 4.0).unwrap();
            let a = CutoffPair::unweighted(g, 1, n1).unwrap();
            let b = CutoffPair::unweighted(g, 1, n2).unwrap();
            let lo = n1.min(n2) as i32;
            let prod = a.psi_n().product(b.psi_n());
            let min = if n1 <= n2 { a.psi_n() } else { b.psi_n() };
            for i in 0..g.len() {
                if g.momentum_norm(i) <= 2f64.powi(lo) {
                    prop_assert!((prod.values()[i] - min.values()[i]).abs() < 1e-15);
                }
            }
            let f = random_field(g, seed);
            let h = random_field(g, seed + 1000);
            let self_adj = p_n(&f, &a).unwrap().inner(&h) - f.inner(&p_n(&h, &a).unwrap());
            prop_assert!(self_adj.abs() < 1e-12);
        }
    }
}
