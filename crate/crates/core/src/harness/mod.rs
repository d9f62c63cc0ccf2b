//! Experiment orchestration and numerical verifiers.

pub mod assumptions;
pub mod balls_bins;
pub mod config;
pub mod plot;
pub mod rate;
pub mod sweep;
pub mod tails;

pub use assumptions::{verify_assumptions, AssumptionReport};
pub use balls_bins::{balls_bins_sim, BallsBinsReport};
pub use config::ExperimentConfig;
pub use rate::{rate_fit, RateFit, RatePoint};
pub use sweep::{run_sweep, SweepRow};
pub use tails::{subexp_tail_check, TailReport};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
