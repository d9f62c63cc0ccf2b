//! Occupancy of `k` bins after throwing `n` balls.

use rand::Rng;
use serde::Serialize;

use crate::error::{precondition, Result};

#[derive(Debug, Clone, Serialize)]
pub struct OccupancyCheck {
    /// `"k>=n"` for the `c+1` form, `"n>=k"` for the `cn/k` form.
    pub regime: &'static str,
    pub c: f64,
    /// Occupancy level whose exceedance is counted.
    pub threshold: f64,
    pub bound: f64,
    pub empirical: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BallsBinsReport {
    pub n: u64,
    pub k: u64,
    pub trials: u64,
    pub mean_max: f64,
    /// Mean load of bin 1, with its standard error.
    pub bin_mean: f64,
    pub bin_mean_se: f64,
    pub bin_mean_pass: bool,
    /// `max_hist[v]` = trials whose maximum load was `v`.
    pub max_hist: Vec<u64>,
    pub checks: Vec<OccupancyCheck>,
}

impl BallsBinsReport {
    pub fn pass(&self) -> bool {
        self.bin_mean_pass && self.checks.iter().all(|c| c.pass)
    }

    fn tail(&self, level: f64) -> f64 {
        let hits: u64 = self.max_hist.iter().enumerate().filter(|(v, _)| *v as f64 >= level).map(|(_, c)| c).sum();
        hits as f64 / self.trials as f64
    }
}

/// Simulates `trials` throws and checks, for each `c`, the applicable bounds
/// `P[max ≥ c+1] ≤ k e^{−c/2}` (`k ≥ n`) and `P[max ≥ cn/k] ≤ k e^{−cn/(8k)}`
/// (`n ≥ k`) with `3` binomial standard errors of slack.
pub fn balls_bins_sim<R: Rng + ?Sized>(n: u64, k: u64, trials: u64, cs: &[f64], rng: &mut R) -> Result<BallsBinsReport> {
    if n == 0 || k == 0 || trials == 0 {
        return Err(precondition("balls and bins needs n, k, trials ≥ 1"));
    }
    let mut max_hist = vec![0u64; n as usize + 1];
    let mut bin1 = Vec::with_capacity(trials as usize);
    let mut loads = vec![0u64; k as usize];
    let mut max_sum = 0.0;
    for _ in 0..trials {
        loads.iter_mut().for_each(|v| *v = 0);
        for _ in 0..n {
            loads[rng.random_range(0..k as usize)] += 1;
        }
        let mx = *loads.iter().max().unwrap();
        max_hist[mx as usize] += 1;
        max_sum += mx as f64;
        bin1.push(loads[0] as f64);
    }
    let t = trials as f64;
    let bin_mean = bin1.iter().sum::<f64>() / t;
    let p = 1.0 / k as f64;
    let bin_mean_se = (n as f64 * p * (1.0 - p) / t).sqrt();
    let mut report = BallsBinsReport {
        n,
        k,
        trials,
        mean_max: max_sum / t,
        bin_mean,
        bin_mean_se,
        bin_mean_pass: (bin_mean - n as f64 * p).abs() <= 4.0 * bin_mean_se + 1e-12,
        max_hist,
        checks: Vec::new(),
    };
    let (nf, kf) = (n as f64, k as f64);
    for &c in cs {
        let mut forms = Vec::new();
        if k >= n {
            forms.push(("k>=n", c + 1.0, kf * (-c / 2.0).exp()));
        }
        if n >= k {
            forms.push(("n>=k", c * nf / kf, kf * (-c * nf / (8.0 * kf)).exp()));
        }
        for (regime, threshold, bound) in forms {
            let empirical = report.tail(threshold);
            let pb = bound.min(1.0);
            let slack = 3.0 * (pb * (1.0 - pb) / t).sqrt();
            report.checks.push(OccupancyCheck {
                regime,
                c,
                threshold,
                bound,
                empirical,
                slack,
                pass: empirical <= bound + slack,
            });
        }
    }
    Ok(report)
}
