//! Radial cutoff profiles built from a smooth step.
//!
//! The default step is the normalized primitive of the bump
//! `exp(-1/(t(1-t)))`, tabulated once and evaluated by cubic Hermite
//! interpolation (the exact derivative is available, so the interpolant is
//! C¹ and accurate to ~1e-15).

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

const PANELS: usize = 4096;

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

struct StepTable {
    /// Cumulative integral of the bump at panel edges, normalized to 1 at t = 1.
    cumulative: Vec<f64>,
    norm: f64,
}

fn step_table() -> &'static StepTable {
    static TABLE: OnceLock<StepTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let rule = GaussLegendre::new(10).expect("degree >= 2");
        let h = 1.0 / PANELS as f64;
        let mut cumulative = Vec::with_capacity(PANELS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for p in 0..PANELS {
            let a = p as f64 * h;
            acc += rule.integrate(a, a + h, bump);
            cumulative.push(acc);
        }
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        StepTable {
            cumulative,
            norm: acc,
        }
    })
}

/// C^∞ step: 0 for `t <= 0`, 1 for `t >= 1`, strictly increasing between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let table = step_table();
    let h = 1.0 / PANELS as f64;
    let p = ((t / h) as usize).min(PANELS - 1);
    let a = p as f64 * h;
    let u = (t - a) / h;
    let (y0, y1) = (table.cumulative[p], table.cumulative[p + 1]);
    let d0 = bump(a) / table.norm * h;
    let d1 = bump(a + h) / table.norm * h;
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * d0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * d1
}

/// Polynomial smoothstep of class C^order (degree `2 order + 1`).
pub fn polynomial_step(t: f64, order: u32) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let k = order as i64;
    let mut acc = 0.0;
    for j in 0..=k {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom(k + j, j) * binom(2 * k + 1, k - j) * t.powi((k + j + 1) as i32);
    }
    acc
}

fn binom(n: i64, k: i64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smoothness class of the step used in every profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepKind {
    /// Bump-integral step, C^∞.
    #[default]
    Mollified,
    /// Finite-order polynomial step.
    Polynomial { order: u32 },
}

impl StepKind {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            StepKind::Mollified => smooth_step(t),
            StepKind::Polynomial { order } => polynomial_step(t, order),
        }
    }
}

/// Radial profile equal to 1 on `[0, inner]` and 0 on `[outer, inf)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialProfile {
    pub inner: f64,
    pub outer: f64,
    pub step: StepKind,
}

impl RadialProfile {
    pub fn new(inner: f64, outer: f64, step: StepKind) -> Self {
        assert!(0.0 <= inner && inner < outer, "profile needs inner < outer");
        Self { inner, outer, step }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        1.0 - self.step.eval((r - self.inner) / (self.outer - self.inner))
    }
}

/// `chi`: 1 on `[0, 3/4]`, 0 beyond `4/3`.
pub fn chi(step: StepKind) -> RadialProfile {
    RadialProfile::new(0.75, 4.0 / 3.0, step)
}

/// `phi(r) = chi(r/2) - chi(r)`, supported in `[3/4, 8/3]`.
pub fn dyadic_phi(step: StepKind, r: f64) -> f64 {
    let c = chi(step);
    c.eval(r / 2.0) - c.eval(r)
}

/// Unit cutoff (`psi` and `rho`): 1 on `[0, 1]`, 0 beyond 2.
pub fn unit_cutoff(step: StepKind) -> RadialProfile {
    RadialProfile::new(1.0, 2.0, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_endpoints_and_symmetry() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(1.2), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-14);
        for &t in &[0.1, 0.23, 0.377, 0.49] {
            assert!((smooth_step(t) + smooth_step(1.0 - t) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn step_matches_direct_quadrature() {
        let rule = GaussLegendre::new(40).unwrap();
        let total = {
            let mut s = 0.0;
            for p in 0..64 {
                let a = p as f64 / 64.0;
                s += rule.integrate(a, a + 1.0 / 64.0, bump);
            }
            s
        };
        for &t in &[0.2, 0.3141, 0.7] {
            let mut s = 0.0;
            let panels = 64;
            for p in 0..panels {
                let a = t * p as f64 / panels as f64;
                s += rule.integrate(a, a + t / panels as f64, bump);
            }
            assert!((smooth_step(t) - s / total).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_step_endpoints() {
        for order in 1..5 {
            assert!(polynomial_step(0.0, order).abs() < 1e-15);
            assert!((polynomial_step(1.0 - 1e-12, order) - 1.0).abs() < 1e-9);
            assert!((polynomial_step(0.5, order) - 0.5).abs() < 1e-12);
        }
        // order 1 is the classic 3t^2 - 2t^3
        assert!((polynomial_step(0.3, 1) - (3.0 * 0.09 - 2.0 * 0.027)).abs() < 1e-15);
    }

    #[test]
    fn profile_plateaus() {
        let psi = unit_cutoff(StepKind::Mollified);
        assert_eq!(psi.eval(0.5), 1.0);
        assert_eq!(psi.eval(2.5), 0.0);
        assert_eq!(psi.eval(-0.7), psi.eval(0.7));
        let c = chi(StepKind::Mollified);
        assert_eq!(c.eval(0.75), 1.0);
        assert_eq!(c.eval(4.0 / 3.0), 0.0);
    }

    proptest! {
        #[test]
        fn step_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(smooth_step(lo) <= smooth_step(hi) + 1e-15);
        }

        #[test]
        fn phi_support(r in 0.0f64..6.0) {
            let v = dyadic_phi(StepKind::Mollified, r);
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&v));
            if !(0.75..=8.0 / 3.0).contains(&r) {
                prop_assert!(v.abs() < 1e-15);
            }
        }

        #[test]
        fn non_adjacent_phi_disjoint(r in 0.01f64..100.0, i in 0i32..6, gap in 2i32..5) {
            let j = i + gap;
            let a = dyadic_phi(StepKind::Mollified, r * 2f64.powi(-i));
            let b = dyadic_phi(StepKind::Mollified, r * 2f64.powi(-j));
            prop_assert!((a * b).abs() < 1e-15);
        }
    }
}
