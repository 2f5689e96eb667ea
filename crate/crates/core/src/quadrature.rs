//! Time quadrature on `[0, t_max]` with geometrically graded panels.
//!
//! Integrands here are smooth but vary on the fast scale `1/|k|_max^2` near
//! `t = 0` and decay like `exp(-c m0^2 t)` afterwards, so the panels halve in
//! width towards the origin. Convergence is checked by doubling the per-panel
//! node count until the relative change falls below the tolerance.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    #[default]
    Legendre,
    Simpson,
}

/// Quadrature configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Relative tolerance on the doubling estimate.
    pub tol: f64,
    /// Upper limit; `None` means `20 / m0^2`.
    pub t_max: Option<f64>,
    /// Number of geometric panels (the first has width `t_max 2^{-panels+1}`).
    pub panels: u32,
    pub initial_nodes: usize,
    pub max_nodes: usize,
    pub rule: Rule,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            t_max: None,
            panels: 14,
            initial_nodes: 4,
            max_nodes: 64,
            rule: Rule::Legendre,
        }
    }
}

impl QuadratureSpec {
    pub fn resolved_t_max(&self, m0sq: f64) -> f64 {
        self.t_max.unwrap_or(20.0 / m0sq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.panels == 0 || self.initial_nodes < 2 {
            return Err(Error::InvalidParameter(
                "quadrature needs tol > 0, panels >= 1, initial_nodes >= 2".into(),
            ));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("t_max must be positive ({t})")));
            }
        }
        Ok(())
    }
}

/// Metadata of a converged quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureInfo {
    pub t_max: f64,
    pub nodes: usize,
    pub nodes_per_panel: usize,
    pub tol: f64,
    pub achieved: f64,
    pub rule: Rule,
}

fn legendre(deg: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().expect("quadrature cache poisoned");
    g.entry(deg)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(deg).expect("degree >= 2");
            Arc::new(rule.as_node_weight_pairs().to_vec())
        })
        .clone()
}

/// Geometric panel edges `0, t_max 2^{-P+1}, .., t_max/2, t_max`.
pub fn panel_edges(t_max: f64, panels: u32) -> Vec<f64> {
    let mut edges = vec![0.0];
    for p in (0..panels).rev() {
        edges.push(t_max * 2f64.powi(-(p as i32)));
    }
    edges
}

/// Nodes and weights of the composite rule with `m` points per panel.
pub fn composite_nodes(edges: &[f64], m: usize, rule: Rule) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        match rule {
            Rule::Legendre => {
                for &(x, wt) in legendre(m).iter() {
                    out.push((0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * wt));
                }
            }
            Rule::Simpson => {
                let intervals = 2 * m.div_ceil(2);
                let h = (b - a) / intervals as f64;
                for i in 0..=intervals {
                    let c = if i == 0 || i == intervals {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    out.push((a + i as f64 * h, c * h / 3.0));
                }
            }
        }
    }
    out
}

/// Integrates a vector-valued `f` over `[0, t_max]` to `spec.tol`.
pub fn integrate_vec<F>(mut f: F, t_max: f64, spec: &QuadratureSpec) -> Result<(Vec<f64>, QuadratureInfo)>
where
    F: FnMut(f64) -> Vec<f64>,
{
    spec.validate()?;
    let edges = panel_edges(t_max, spec.panels);
    let eval = |m: usize, f: &mut F| -> (Vec<f64>, usize) {
        let nodes = composite_nodes(&edges, m, spec.rule);
        let mut acc: Vec<f64> = Vec::new();
        for &(t, w) in &nodes {
            let v = f(t);
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += w * x;
            }
        }
        (acc, nodes.len())
    };
    let mut m = spec.initial_nodes;
    let (mut prev, mut total_nodes) = eval(m, &mut f);
    let mut change = f64::INFINITY;
    while 2 * m <= spec.max_nodes {
        m *= 2;
        let (cur, n) = eval(m, &mut f);
        total_nodes += n;
        change = relative_change(&cur, &prev);
        if change <= spec.tol {
            let info = QuadratureInfo {
                t_max,
                nodes: total_nodes,
                nodes_per_panel: m,
                tol: spec.tol,
                achieved: change,
                rule: spec.rule,
            };
            return Ok((cur, info));
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged {
        tol: spec.tol,
        estimate: change,
    })
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, t_max: f64, spec: &QuadratureSpec) -> Result<(f64, QuadratureInfo)>
where
    F: FnMut(f64) -> f64,
{
    let (v, info) = integrate_vec(|t| vec![f(t)], t_max, spec)?;
    Ok((v[0], info))
}

/// Largest change relative to the largest magnitude in `cur`.
fn relative_change(cur: &[f64], prev: &[f64]) -> f64 {
    let scale = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = cur
        .iter()
        .zip(prev)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Radial integral `int_0^R g(r) dr` by composite Gauss–Legendre on `panels` equal panels.
pub fn radial(g: impl Fn(f64) -> f64, r_max: f64, panels: usize, nodes: usize) -> f64 {
    let rule = legendre(nodes);
    let h = r_max / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let a = p as f64 * h;
        for &(x, w) in rule.iter() {
            s += 0.5 * h * w * g(a + 0.5 * h * (x + 1.0));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_integral() {
        let spec = QuadratureSpec::default();
        let (v, info) = integrate(|t| (-5.0 * t).exp(), 4.0, &spec).unwrap();
        let exact = (1.0 - (-20.0f64).exp()) / 5.0;
        assert!((v - exact).abs() < 1e-10, "{v} {exact}");
        assert!(info.achieved <= 1e-6);
    }

    #[test]
    fn fast_transient_near_zero() {
        let spec = QuadratureSpec::default();
        let (v, _) = integrate(|t| (-300.0 * t).exp() + (-2.0 * t).exp(), 10.0, &spec).unwrap();
        let exact = 1.0 / 300.0 + (1.0 - (-20.0f64).exp()) / 2.0;
        assert!((v - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn simpson_and_legendre_agree() {
        let f = |t: f64| (-3.0 * t).exp() * (1.0 + t).sqrt();
        let a = integrate(f, 6.0, &QuadratureSpec::default()).unwrap().0;
        let spec = QuadratureSpec {
            rule: Rule::Simpson,
            max_nodes: 1024,
            tol: 1e-9,
            ..Default::default()
        };
        let b = integrate(f, 6.0, &spec).unwrap().0;
        assert!((a - b).abs() < 1e-7 * a.abs());
    }

    #[test]
    fn non_convergence_reported() {
        let spec = QuadratureSpec {
            tol: 1e-15,
            max_nodes: 8,
            ..Default::default()
        };
        let r = integrate(|t| (50.0 * t).sin().abs(), 3.0, &spec);
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }

    #[test]
    fn vector_integrand() {
        let (v, _) = integrate_vec(|t| vec![1.0, t, t * t], 2.0, &QuadratureSpec::default()).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert!((v[1] - 2.0).abs() < 1e-12);
        assert!((v[2] - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn radial_gaussian() {
        let v = radial(|r| (-r * r).exp(), 8.0, 16, 16);
        assert!((v - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
    }
}
