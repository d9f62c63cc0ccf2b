//! Monte-Carlo verification of the estimator, marginal and likelihood-ratio
//! assumptions for each model on sieve truths.

use serde::Serialize;

use crate::error::{precondition, Result};
use crate::harness::mean_se;
use crate::harness::tails::{fit_params, Deviations};
use crate::models::{self, default_c0, eps_max, ModelKind, SieveFunction, SubExpParams};
use crate::rng::{stream, TAG_TRUTH};
use crate::wavelet::cell_index;

/// Fitted tail constants above this (in standardized units) count as a failure.
pub const TAIL_CAP: f64 = 20.0;
/// Allowed spread of `|mean L| k^{2r}` across the grid.
pub const SCALING_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub k: Option<usize>,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub model: ModelKind,
    pub r: f64,
    pub checks: Vec<Check>,
    /// `|mean L| k^{2r}` per grid point.
    pub scaled_mean_loglr: Vec<(usize, f64)>,
    /// Common `(ν, β)` for `L k^r / ε`.
    pub loglr_tail: Option<SubExpParams>,
    /// Common `(ν, β)` for `f̂_{Hs} / √K`.
    pub estimator_tail: Option<SubExpParams>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AssumptionOptions {
    /// Overrides `eps_max` for the truth.
    pub eps: Option<f64>,
    pub c0: Option<f64>,
}

struct PerK {
    k: usize,
    eps: f64,
    loglr: Vec<f64>,
    estimator: Vec<f64>,
}

/// Runs all checks for `model` at every `k` in `k_grid` with
/// `samples_per_k` draws each. Truth signs come from `(seed, TRUTH, k)`.
pub fn verify_assumptions(
    model: ModelKind,
    r: f64,
    k_grid: &[usize],
    samples_per_k: usize,
    seed: u64,
    opts: &AssumptionOptions,
) -> Result<AssumptionReport> {
    if k_grid.is_empty() || samples_per_k < 1000 {
        return Err(precondition("need a non-empty k grid and ≥ 1000 samples per k"));
    }
    let mut checks = Vec::new();
    let mut per_k = Vec::new();
    let c0 = opts.c0.unwrap_or_else(|| default_c0(model));
    for &k in k_grid {
        let eps = match opts.eps {
            Some(e) => e,
            None => eps_max(model, k, c0, r)?,
        };
        let truth = SieveFunction::random(k, c0, eps, r, &mut stream(seed, &[TAG_TRUTH, k as u64]))?;
        truth.validate_for(model)?;
        let mut rng = stream(seed, &[k as u64]);
        let batch = models::sample_batch(model, &truth, samples_per_k, &mut rng);

        // Estimator at the level resolving the half-cells.
        let h = k.trailing_zeros() + 1;
        let big_k = 1usize << h;
        let exact = truth.coeffs(h);
        // Column s holds f̂_{Hs}(x) for every sample, zero outside cell s.
        let mut sum = vec![0.0; big_k];
        let mut sum_sq = vec![0.0; big_k];
        let mut estimator = Vec::with_capacity(batch.len());
        for x in &batch {
            let s = cell_index(big_k, x.t);
            let v = models::samplewise_estimator(model, h, s, x)?;
            sum[s - 1] += v;
            sum_sq[s - 1] += v * v;
            estimator.push(v / (big_k as f64).sqrt());
        }
        let n = samples_per_k as f64;
        let mut worst_z: f64 = 0.0;
        for sp in 0..big_k {
            let mean = sum[sp] / n;
            let se = ((sum_sq[sp] / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
            let z = if se > 0.0 { (mean - exact.get(sp + 1)).abs() / se } else { 0.0 };
            worst_z = worst_z.max(z);
        }
        checks.push(Check { name: "estimator_unbiased_z".into(), k: Some(k), value: worst_z, limit: 4.0, pass: worst_z <= 4.0 });

        let mut counts = vec![0usize; k];
        for x in &batch {
            counts[cell_index(k, x.t) - 1] += 1;
        }
        let p = 1.0 / k as f64;
        let sd = (p * (1.0 - p) / samples_per_k as f64).sqrt();
        let worst_cell = counts.iter().map(|&c| (c as f64 / samples_per_k as f64 - p).abs() / sd).fold(0.0, f64::max);
        checks.push(Check { name: "cell_marginal_z".into(), k: Some(k), value: worst_cell, limit: 4.0, pass: worst_cell <= 4.0 });

        let loglr = batch
            .iter()
            .map(|x| {
                let s = cell_index(k, x.t);
                models::samplewise_loglr(model, &truth, s, truth.sign(s), x)
            })
            .collect::<Result<Vec<_>>>()?;
        per_k.push(PerK { k, eps, loglr, estimator });
    }

    let scaled: Vec<(usize, f64)> = per_k
        .iter()
        .map(|pk| (pk.k, mean_se(&pk.loglr).0.abs() * (pk.k as f64).powf(2.0 * r)))
        .collect();
    let hi = scaled.iter().map(|s| s.1).fold(0.0, f64::max);
    let lo = scaled.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    checks.push(Check {
        name: "loglr_mean_scaling_ratio".into(),
        k: None,
        value: ratio,
        limit: SCALING_RATIO,
        pass: ratio <= SCALING_RATIO,
    });

    let loglr_tail = common_tail(&mut checks, "loglr_tail", &per_k, |pk| {
        let scale = if pk.eps > 0.0 { (pk.k as f64).powf(r) / pk.eps } else { 0.0 };
        pk.loglr.iter().map(|v| v * scale).collect()
    });
    let estimator_tail = common_tail(&mut checks, "estimator_tail", &per_k, |pk| pk.estimator.clone());

    Ok(AssumptionReport { model, r, checks, scaled_mean_loglr: scaled, loglr_tail, estimator_tail })
}

/// Fits `(ν, β)` per grid point on standardized samples, takes the largest,
/// and re-checks every grid point at that common pair.
fn common_tail<F>(checks: &mut Vec<Check>, name: &str, per_k: &[PerK], standardize: F) -> Option<SubExpParams>
where
    F: Fn(&PerK) -> Vec<f64>,
{
    let devs: Vec<(usize, Deviations)> = per_k.iter().map(|pk| (pk.k, Deviations::new(&standardize(pk)))).collect();
    if devs.iter().all(|(_, d)| d.max() == 0.0) {
        checks.push(Check { name: name.into(), k: None, value: 0.0, limit: TAIL_CAP, pass: true });
        return None;
    }
    let mut common = SubExpParams { nu: f64::MIN_POSITIVE, beta: 0.0 };
    for (k, d) in &devs {
        match fit_params(d, TAIL_CAP) {
            Some(p) => {
                common.nu = common.nu.max(p.nu);
                common.beta = common.beta.max(p.beta);
            }
            None => {
                checks.push(Check { name: name.into(), k: Some(*k), value: f64::INFINITY, limit: TAIL_CAP, pass: false });
                return None;
            }
        }
    }
    for (k, d) in &devs {
        let ex = d.excess(&common).0;
        checks.push(Check { name: name.into(), k: Some(*k), value: ex, limit: 0.0, pass: ex <= 0.0 });
    }
    Some(common)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_truth_passes_trivially() {
        let opts = AssumptionOptions { eps: Some(0.0), c0: None };
        let rep = verify_assumptions(ModelKind::Density, 0.8, &[4, 8], 5000, 1, &opts).unwrap();
        assert!(rep.pass(), "{:?}", rep.checks);
        assert!(rep.scaled_mean_loglr.iter().all(|s| s.1 == 0.0));
    }

    #[test]
    fn gaussian_mean_loglr_is_minus_two_eps_squared() {
        let rep = verify_assumptions(ModelKind::GaussianRegression, 0.8, &[8, 16], 100_000, 2, &AssumptionOptions::default())
            .unwrap();
        for (_, v) in &rep.scaled_mean_loglr {
            assert!((v - 2.0).abs() < 0.3, "{v}");
        }
    }
}
