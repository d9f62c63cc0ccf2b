//! Empirical checks of two-sided sub-exponential tail bounds.

use serde::Serialize;

use crate::error::{precondition, Result};
use crate::models::SubExpParams;

/// Thresholds tested per `(ν, β)`, evenly spaced up to the largest deviation.
pub const THRESHOLDS: usize = 200;
/// Geometric steps per halving on the `(ν, β)` grid.
const STEPS_PER_OCTAVE: i32 = 4;
const GRID_LEN: i32 = 48;

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub pass: bool,
    pub degenerate: bool,
    /// Largest `empirical − (bound + 3σ)` over the thresholds.
    pub worst_excess: f64,
    pub worst_threshold: f64,
    /// Grid pair with the smallest `ν + β` that passes, if any.
    pub fitted: Option<SubExpParams>,
    pub cap: f64,
}

/// Sorted absolute deviations from the sample mean.
#[derive(Debug, Clone)]
pub struct Deviations {
    abs: Vec<f64>,
}

impl Deviations {
    pub fn new(samples: &[f64]) -> Self {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let mut abs: Vec<f64> = samples.iter().map(|x| (x - mean).abs()).collect();
        abs.sort_by(f64::total_cmp);
        Self { abs }
    }

    pub fn max(&self) -> f64 {
        self.abs.last().copied().unwrap_or(0.0)
    }

    /// Empirical `P[|X − mean| ≥ t]`.
    pub fn tail(&self, t: f64) -> f64 {
        let below = self.abs.partition_point(|&d| d < t);
        (self.abs.len() - below) as f64 / self.abs.len() as f64
    }

    /// `(worst excess, threshold)` for the bound `(ν, β)` with `3σ` slack.
    pub fn excess(&self, p: &SubExpParams) -> (f64, f64) {
        let n = self.abs.len() as f64;
        let top = self.max();
        let mut worst = (f64::NEG_INFINITY, 0.0);
        for j in 1..=THRESHOLDS {
            let t = top * j as f64 / THRESHOLDS as f64;
            let bound = p.tail_bound(t);
            let pb = bound.min(1.0);
            let ex = self.tail(t) - bound - 3.0 * (pb * (1.0 - pb) / n).sqrt();
            if ex > worst.0 {
                worst = (ex, t);
            }
        }
        worst
    }

    /// Robust scale: `IQR / 1.349`, falling back to the standard deviation.
    pub fn robust_scale(samples: &[f64]) -> f64 {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
        let iqr = (q(0.75) - q(0.25)) / 1.349;
        if iqr > 0.0 {
            return iqr;
        }
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
    }
}

/// Grid `cap · 2^{−j/4}`, `j = 0..48`, descending.
pub fn param_grid(cap: f64) -> Vec<f64> {
    (0..GRID_LEN).map(|j| cap * 2f64.powf(-j as f64 / STEPS_PER_OCTAVE as f64)).collect()
}

/// Smallest `ν + β` on the grid (with `β ∈ {0} ∪ grid`) passing every threshold.
pub fn fit_params(dev: &Deviations, cap: f64) -> Option<SubExpParams> {
    let grid = param_grid(cap);
    let betas: Vec<f64> = std::iter::once(0.0).chain(grid.iter().copied()).collect();
    let mut best: Option<SubExpParams> = None;
    for &beta in &betas {
        // Passing is monotone in ν for fixed β: scan from the top until it fails.
        let mut last_pass = None;
        for &nu in &grid {
            let p = SubExpParams { nu, beta };
            if dev.excess(&p).0 <= 0.0 {
                last_pass = Some(p);
            } else {
                break;
            }
        }
        if let Some(p) = last_pass {
            if best.is_none_or(|b| p.nu + p.beta < b.nu + b.beta) {
                best = Some(p);
            }
        }
    }
    best
}

/// Checks `P[|X−mean| ≥ t] ≤ 2e^{−t²/2ν²}` (`t ≤ ν²/β`) or `2e^{−t/2β}`
/// (`t > ν²/β`) on a threshold grid, with `3σ` slack, and fits the smallest
/// passing grid pair below `cap` (default: ten robust scales).
pub fn subexp_tail_check_with(samples: &[f64], nu: f64, beta: f64, cap: Option<f64>) -> Result<TailReport> {
    if samples.len() < 1000 {
        return Err(precondition(format!("tail check needs ≥ 1000 samples, got {}", samples.len())));
    }
    let params = SubExpParams::new(nu, beta)?;
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(crate::Error::NonFinite("tail-check sample".into()));
    }
    let dev = Deviations::new(samples);
    let cap = cap.unwrap_or_else(|| 10.0 * Deviations::robust_scale(samples));
    if dev.max() == 0.0 {
        return Ok(TailReport {
            pass: true,
            degenerate: true,
            worst_excess: 0.0,
            worst_threshold: 0.0,
            fitted: None,
            cap,
        });
    }
    let (worst_excess, worst_threshold) = dev.excess(&params);
    Ok(TailReport {
        pass: worst_excess <= 0.0,
        degenerate: false,
        worst_excess,
        worst_threshold,
        fitted: if cap > 0.0 { fit_params(&dev, cap) } else { None },
        cap,
    })
}

pub fn subexp_tail_check(samples: &[f64], nu: f64, beta: f64) -> Result<TailReport> {
    subexp_tail_check_with(samples, nu, beta, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn normal_passes_unit_params() {
        let mut rng = stream(1, &[]);
        let xs: Vec<f64> = (0..20_000).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let r = subexp_tail_check(&xs, 1.0, 0.0).unwrap();
        assert!(r.pass, "{r:?}");
        let fit = r.fitted.unwrap();
        assert!(fit.nu + fit.beta <= 1.5);
    }

    #[test]
    fn bounded_passes_hoeffding() {
        let mut rng = stream(2, &[]);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random_range(-3.0..5.0)).collect();
        assert!(subexp_tail_check(&xs, 4.0, 0.0).unwrap().pass);
    }

    #[test]
    fn pareto_fails_whole_grid() {
        let mut rng = stream(3, &[]);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>().powf(-1.0 / 1.5)).collect();
        let r = subexp_tail_check(&xs, 1.0, 1.0).unwrap();
        assert!(!r.pass);
        assert!(r.fitted.is_none(), "{:?}", r.fitted);
    }

    #[test]
    fn degenerate_passes() {
        let r = subexp_tail_check(&[2.0; 1000], 1.0, 0.0).unwrap();
        assert!(r.pass && r.degenerate);
    }

    #[test]
    fn too_few_samples() {
        assert!(subexp_tail_check(&[0.0; 10], 1.0, 0.0).is_err());
        assert!(subexp_tail_check(&[0.0; 1000], 0.0, 0.0).is_err());
    }
}
