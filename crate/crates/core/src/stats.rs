//! Small statistics toolkit: means with errors, batch means, jackknife, k-statistics.

use crate::error::{Error, Result};

/// Sample mean and its standard error (iid assumption).
pub fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::INFINITY);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Mean and error from `batches` contiguous batch means (handles autocorrelation).
pub fn batch_means(xs: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < 2 || xs.len() < batches {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot form {batches} batches",
            xs.len()
        )));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    Ok(mean_and_error(&means))
}

/// Delete-one-block jackknife of a statistic over `blocks` contiguous blocks.
///
/// `stat` receives the retained sample indices' block mask and must return
/// the statistic computed on them. Returns `(full estimate, error)`.
pub fn jackknife<F>(n: usize, blocks: usize, stat: F) -> Result<(f64, f64)>
where
    F: Fn(&dyn Fn(usize) -> bool) -> f64,
{
    if blocks < 2 || n < blocks {
        return Err(Error::InsufficientData(format!(
            "{n} samples cannot form {blocks} jackknife blocks"
        )));
    }
    let size = n / blocks;
    let full = stat(&|_| true);
    let partial: Vec<f64> = (0..blocks)
        .map(|b| {
            let lo = b * size;
            let hi = if b + 1 == blocks { n } else { (b + 1) * size };
            stat(&|i| i < lo || i >= hi)
        })
        .collect();
    let k = blocks as f64;
    let mean = partial.iter().sum::<f64>() / k;
    let var = partial.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() * (k - 1.0) / k;
    Ok((full, var.sqrt()))
}

/// Jackknife over a vector-valued sample via a function of per-sample rows.
pub fn jackknife_rows<T, F>(rows: &[T], blocks: usize, stat: F) -> Result<(f64, f64)>
where
    F: Fn(&mut dyn Iterator<Item = &T>) -> f64,
{
    jackknife(rows.len(), blocks, |keep| {
        let mut it = rows.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, r)| r);
        stat(&mut it)
    })
}

/// Power sums `S_r = sum x^r` for `r = 1..=4`, optionally weighted.
#[derive(Clone, Copy, Debug, Default)]
pub struct PowerSums {
    pub n: f64,
    pub s: [f64; 4],
}

impl PowerSums {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let mut p = 1.0;
        for s in self.s.iter_mut() {
            p *= x;
            *s += p;
        }
    }

    /// Unbiased k-statistic `k_order`, `order` in 1..=4.
    pub fn k_stat(&self, order: usize) -> f64 {
        let n = self.n;
        let [s1, s2, s3, s4] = self.s;
        match order {
            1 => s1 / n,
            2 => (n * s2 - s1 * s1) / (n * (n - 1.0)),
            3 => {
                (2.0 * s1.powi(3) - 3.0 * n * s1 * s2 + n * n * s3)
                    / (n * (n - 1.0) * (n - 2.0))
            }
            4 => {
                (-6.0 * s1.powi(4) + 12.0 * n * s1 * s1 * s2 - 3.0 * n * (n - 1.0) * s2 * s2
                    - 4.0 * n * (n + 1.0) * s1 * s3
                    + n * n * (n + 1.0) * s4)
                    / (n * (n - 1.0) * (n - 2.0) * (n - 3.0))
            }
            _ => f64::NAN,
        }
    }
}

/// Weighted central-moment cumulants (plug-in), `order` in 1..=4.
pub fn weighted_cumulant(xs: &[f64], ws: &[f64], order: usize) -> f64 {
    let wsum: f64 = ws.iter().sum();
    let m = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let cm = |r: i32| xs.iter().zip(ws).map(|(x, w)| w * (x - m).powi(r)).sum::<f64>() / wsum;
    match order {
        1 => m,
        2 => cm(2),
        3 => cm(3),
        4 => {
            let m2 = cm(2);
            cm(4) - 3.0 * m2 * m2
        }
        _ => f64::NAN,
    }
}

/// Integrated autocorrelation time with the automatic window `W >= c tau`.
pub fn integrated_autocorr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 0.5;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for lag in 1..n / 2 {
        let c = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum::<f64>()
            / (n - lag) as f64;
        tau += c / c0;
        if lag as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// `|a - b| / sqrt(ea^2 + eb^2)`.
pub fn z_score(a: f64, ea: f64, b: f64, eb: f64) -> f64 {
    let e = (ea * ea + eb * eb).sqrt();
    if e == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{ChiSquared, Distribution};

    #[test]
    fn mean_error_basic() {
        let (m, e) = mean_and_error(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((e - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn batch_means_needs_data() {
        assert!(batch_means(&[1.0], 2).is_err());
        let (m, _) = batch_means(&[1.0, 3.0, 1.0, 3.0], 2).unwrap();
        assert_eq!(m, 2.0);
    }

    #[test]
    fn k_stats_of_small_sample() {
        // oracle values computed by hand from the standard formulas
        let mut ps = PowerSums::default();
        for x in [1.0, 2.0, 4.0, 7.0, 11.0] {
            ps.push(x);
        }
        assert!((ps.k_stat(1) - 5.0).abs() < 1e-12);
        assert!((ps.k_stat(2) - 16.5).abs() < 1e-12);
        // central moment m3 = 26.4; k3 = n^2 m3 / ((n-1)(n-2))
        assert!((ps.k_stat(3) - 55.0).abs() < 1e-10);
    }

    #[test]
    fn chi_squared_cumulants() {
        // chi^2_k has cumulants kappa_r = 2^{r-1} (r-1)! k
        let dof = 3.0;
        let dist = ChiSquared::new(dof).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..200_000).map(|_| dist.sample(&mut rng)).collect();
        let expect = [dof, 2.0 * dof, 8.0 * dof, 48.0 * dof];
        for order in 1..=4 {
            let (est, err) = jackknife(xs.len(), 20, |keep| {
                let mut ps = PowerSums::default();
                for (i, &x) in xs.iter().enumerate() {
                    if keep(i) {
                        ps.push(x);
                    }
                }
                ps.k_stat(order)
            })
            .unwrap();
            assert!(z_score(est, err, expect[order - 1], 0.0) < 4.0, "order {order}: {est} +- {err}");
        }
    }

    #[test]
    fn weighted_cumulant_matches_unweighted_with_unit_weights() {
        let xs = [0.3, -1.2, 2.2, 0.7, 1.1];
        let ws = [1.0; 5];
        let m = xs.iter().sum::<f64>() / 5.0;
        let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 5.0;
        assert!((weighted_cumulant(&xs, &ws, 2) - m2).abs() < 1e-14);
    }

    #[test]
    fn autocorr_of_iid_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..5000)
            .map(|_| rand_distr::StandardNormal.sample(&mut rng))
            .collect();
        let tau = integrated_autocorr(&xs);
        assert!(tau < 0.7, "{tau}");
    }
}
