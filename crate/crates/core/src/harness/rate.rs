//! Log-log regression of mean MSE on the effective sample size.

use serde::Serialize;

use crate::error::{precondition, Result};
use crate::regimes::{RegimeCase, RegimeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub params: RegimeParams<f64>,
    pub n_ess: f64,
    pub mean_mse: f64,
    pub stderr: f64,
    pub case_id: RegimeCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
}

/// Least squares of `ln(mean_mse)` on `ln(n_ess)`. With `weighted`, each
/// point gets weight `(mean/stderr)²`, the inverse delta-method variance of
/// `ln(mean)`.
pub fn rate_fit(points: &[RatePoint], weighted: bool) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(precondition(format!("rate fit needs ≥ 4 points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.mean_mse > 0.0 && p.n_ess > 0.0)) {
        return Err(precondition("rate points need positive mse and n_ess"));
    }
    let lo = points.iter().map(|p| p.n_ess).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.n_ess).fold(0.0, f64::max);
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(precondition(format!("n_ess spans [{lo}, {hi}], less than one decade")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n_ess.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_mse.ln()).collect();
    let ws: Vec<f64> = points
        .iter()
        .map(|p| if weighted && p.stderr > 0.0 { (p.mean_mse / p.stderr).powi(2) } else { 1.0 })
        .collect();
    Ok(weighted_ols(&xs, &ys, &ws))
}

pub fn weighted_ols(xs: &[f64], ys: &[f64], ws: &[f64]) -> RateFit {
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx).powi(2);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my).powi(2);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).zip(ws).map(|((x, y), w)| w * (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let dof = xs.len().saturating_sub(2).max(1) as f64;
    RateFit { slope, intercept, r2, slope_se: (sse / dof / sxx).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn pt(n_ess: f64, mse: f64) -> RatePoint {
        RatePoint {
            params: RegimeParams::unchecked(1, 1, 4, 0.8),
            n_ess,
            mean_mse: mse,
            stderr: 0.05 * mse,
            case_id: RegimeCase::Case5,
        }
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<RatePoint> = (0..8).map(|i| 2f64.powi(i + 4)).map(|n| pt(n, 3.0 * n.powf(-0.6))).collect();
        for weighted in [false, true] {
            let fit = rate_fit(&pts, weighted).unwrap();
            assert!((fit.slope + 0.6).abs() < 1e-9);
            assert!((fit.intercept - 3f64.ln()).abs() < 1e-9);
            assert!((fit.r2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = stream(7, &[]);
        for _ in 0..20 {
            let pts: Vec<RatePoint> = (0..13)
                .map(|i| 2f64.powf(4.0 + i as f64 * 0.5))
                .map(|n| pt(n, n.powf(-0.6) * (1.0 + 0.1 * rng.random_range(-1.0..1.0))))
                .collect();
            let fit = rate_fit(&pts, false).unwrap();
            assert!((fit.slope + 0.6).abs() < 0.05, "{}", fit.slope);
        }
    }

    #[test]
    fn preconditions() {
        let few: Vec<RatePoint> = (0..3).map(|i| pt(10f64.powi(i), 1.0)).collect();
        assert!(rate_fit(&few, false).is_err());
        let narrow: Vec<RatePoint> = (0..5).map(|i| pt(10.0 + i as f64, 1.0)).collect();
        assert!(rate_fit(&narrow, false).is_err());
    }
}
