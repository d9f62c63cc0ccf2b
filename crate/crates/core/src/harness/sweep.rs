//! Cartesian sweeps writing one CSV row per `(m, n, l)` tuple.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::rate::RatePoint;
use crate::models::{default_c0, eps_max};
use crate::protocol::{self, MseSummary, OuterConfig};
use crate::regimes::{RegimeCase, RegimeParams};
use crate::rng::{derive_seed, TAG_TUPLE};
use crate::wavelet::ceil_log2;

/// Fixed CSV column set.
pub const COLUMNS: [&str; 13] =
    ["m", "n", "l", "r", "case", "n_ess", "K", "K0", "inner_variant", "trials", "mean_mse", "stderr", "seed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: u64,
    pub n: u64,
    pub l: u32,
    pub r: f64,
    pub case: String,
    pub n_ess: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "K0")]
    pub k0: f64,
    pub inner_variant: String,
    pub trials: usize,
    pub mean_mse: f64,
    pub stderr: f64,
    pub seed: u64,
}

impl SweepRow {
    pub fn case_id(&self) -> Result<RegimeCase> {
        RegimeCase::ALL
            .into_iter()
            .find(|c| c.to_string() == self.case)
            .ok_or_else(|| Error::Parse(format!("unknown case `{}`", self.case)))
    }

    pub fn rate_point(&self) -> Result<RatePoint> {
        Ok(RatePoint {
            params: RegimeParams::unchecked(self.m, self.n, self.l, self.r),
            n_ess: self.n_ess,
            mean_mse: self.mean_mse,
            stderr: self.stderr,
            case_id: self.case_id()?,
        })
    }
}

/// Truth size used when `k = "auto"`: the smallest power of two at least
/// `N_ess^{1/(2r+1)}`, the sieve scale at which bias and variance balance.
pub fn auto_truth_k(n_ess: f64, r: f64) -> usize {
    let target = (n_ess.powf(1.0 / (2.0 * r + 1.0)) - 1e-9).ceil().max(1.0) as u64;
    1usize << ceil_log2(target)
}

/// Runs one tuple: `trials` trials, escalated to `max_trials` when the
/// relative standard error exceeds the configured threshold.
pub fn run_tuple(cfg: &ExperimentConfig, m: u64, n: u64, l: u32) -> Result<(SweepRow, MseSummary)> {
    let params = RegimeParams::new(m, n, l, cfg.r)?;
    let ov = cfg.overrides()?;
    let outer = OuterConfig::prepare(&params, cfg.model, &ov)?;
    let k = cfg.sieve.k.or_else(|| auto_truth_k(outer.plan.n_ess, cfg.r));
    let c0 = cfg.sieve.c0.or_else(|| default_c0(cfg.model));
    let eps = match cfg.sieve.eps {
        crate::harness::config::Auto::Value(e) => e,
        crate::harness::config::Auto::Auto => eps_max(cfg.model, k, c0, cfg.r)?,
    };
    let truth = protocol::truth_for(cfg.model, k, c0, eps, cfg.r, cfg.seed, 0)?;
    let seed = derive_seed(cfg.seed, &[TAG_TUPLE, m, n, l as u64]);
    let mut summary = protocol::mse_trials_with(&params, &outer, &truth, ov.project_simplex, 0..cfg.trials, seed)?;
    if cfg.max_trials > cfg.trials && summary.stderr > cfg.escalate_rel_stderr * summary.mean {
        let extra =
            protocol::mse_trials_with(&params, &outer, &truth, ov.project_simplex, cfg.trials..cfg.max_trials, seed)?;
        let mut errors = summary.errors;
        errors.extend(extra.errors);
        let total = cfg.max_trials as f64;
        let rate = (summary.truncation_rate * cfg.trials as f64
            + extra.truncation_rate * (cfg.max_trials - cfg.trials) as f64)
            / total;
        summary = MseSummary::from_errors(errors, rate)?;
    }
    let row = SweepRow {
        m,
        n,
        l,
        r: cfg.r,
        case: outer.plan.case_id.to_string(),
        n_ess: outer.plan.n_ess,
        k: outer.plan.k,
        k0: outer.k0,
        inner_variant: outer.inner.name(),
        trials: summary.trials,
        mean_mse: summary.mean,
        stderr: summary.stderr,
        seed: cfg.seed,
    };
    Ok((row, summary))
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub skipped: usize,
    /// The sweep visits more than one regime case.
    pub cross_case: bool,
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(Error::Parse(format!("{} does not have the sweep column set", path.display())));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Runs every tuple not already present in `out`, appending rows as they
/// complete. Tuples run in axis order; trials within a tuple run in parallel.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepOutcome> {
    let existing = if out.exists() && std::fs::metadata(out)?.len() > 0 { read_rows(out)? } else { Vec::new() };
    let done: HashSet<(u64, u64, u32)> = existing.iter().map(|r| (r.m, r.n, r.l)).collect();
    let file = OpenOptions::new().create(true).append(true).open(out)?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if existing.is_empty() {
        wtr.write_record(COLUMNS)?;
        wtr.flush()?;
    }
    let mut rows = existing;
    let mut skipped = 0;
    for (m, n, l) in cfg.tuples() {
        if done.contains(&(m, n, l)) {
            skipped += 1;
            continue;
        }
        let (row, _) = run_tuple(cfg, m, n, l)
            .map_err(|e| Error::InvalidConfig(format!("tuple (m={m}, n={n}, l={l}): {e}")))?;
        wtr.serialize(&row)?;
        wtr.flush()?;
        rows.push(row);
    }
    let cases: HashSet<&str> = rows.iter().map(|r| r.case.as_str()).collect();
    Ok(SweepOutcome { cross_case: cases.len() > 1, rows, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
model = "gaussian"
r = 0.7
seed = 5
trials = 4
max_trials = 4
output = "{}"
[axes]
m = [8, 16]
n = [4]
l = [8]
"#,
            dir.join("x.csv").display()
        ))
        .unwrap()
    }

    #[test]
    fn auto_truth_size() {
        assert_eq!(auto_truth_k(1.0, 0.8), 1);
        assert_eq!(auto_truth_k(2f64.powf(2.6 * 3.0), 0.8), 8);
        assert_eq!(auto_truth_k(2f64.powf(2.6 * 3.0) + 1.0, 0.8), 16);
    }

    #[test]
    fn sweep_is_deterministic_and_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path());
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let out = run_sweep(&c, &a).unwrap();
        assert_eq!(out.rows.len(), 2);
        run_sweep(&c, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let again = run_sweep(&c, &a).unwrap();
        assert_eq!(again.skipped, 2);
        assert_eq!(read_rows(&a).unwrap().len(), 2);
        let text = std::fs::read_to_string(&a).unwrap();
        assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    }

    #[test]
    fn single_tuple_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.axes.m = vec![8];
        let out = run_sweep(&c, &dir.path().join("one.csv")).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(!out.cross_case);
    }
}
