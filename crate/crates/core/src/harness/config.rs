//! Declarative experiment configuration (TOML).
//!
//! ```toml
//! model = "density"
//! r = 0.8
//! seed = 7
//! trials = 100
//! output = "rate.csv"
//!
//! [sieve]
//! k = "auto"      # or a power of two
//! c0 = "auto"     # model default
//! eps = "auto"    # eps_max
//!
//! [axes]
//! m = [64, 128, 256]
//! n = [16]
//! l = [8]
//!
//! [inner]
//! variant = "auto"          # count_frames | quantized_frames_b3 | random_partition | idealized
//! theory_constants = false
//! c_inner = 1.0
//! c3 = 4.0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::inner::ProtocolVariant;
use crate::models::ModelKind;
use crate::protocol::Overrides;
use crate::regimes::{PlanOptions, DEFAULT_C3};

/// Either the literal `"auto"` or a value.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(untagged)]
pub enum Auto<T> {
    #[default]
    #[serde(deserialize_with = "auto_literal")]
    Auto,
    Value(T),
}

fn auto_literal<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<(), D::Error> {
    let s = String::deserialize(d)?;
    if s.eq_ignore_ascii_case("auto") {
        Ok(())
    } else {
        Err(serde::de::Error::custom(format!("expected \"auto\", found \"{s}\"")))
    }
}

impl<T: Copy> Auto<T> {
    pub fn or_else(self, f: impl FnOnce() -> T) -> T {
        match self {
            Auto::Auto => f(),
            Auto::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SieveConfig {
    #[serde(default)]
    pub k: Auto<usize>,
    #[serde(default)]
    pub c0: Auto<f64>,
    #[serde(default)]
    pub eps: Auto<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub m: Vec<u64>,
    pub n: Vec<u64>,
    pub l: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerConfig {
    #[serde(default = "auto_string")]
    pub variant: String,
    #[serde(default)]
    pub theory_constants: bool,
    #[serde(default = "one")]
    pub c_inner: f64,
    #[serde(default = "default_c3")]
    pub c3: f64,
    #[serde(default)]
    pub project_simplex: bool,
    pub h: Option<u32>,
    pub k0: Option<f64>,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            variant: auto_string(),
            theory_constants: false,
            c_inner: 1.0,
            c3: DEFAULT_C3,
            project_simplex: false,
            h: None,
            k0: None,
        }
    }
}

fn auto_string() -> String {
    "auto".into()
}

fn one() -> f64 {
    1.0
}

fn default_c3() -> f64 {
    DEFAULT_C3
}

fn default_trials() -> usize {
    100
}

fn default_max_trials() -> usize {
    400
}

fn default_rel() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub r: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Trial count after escalation.
    #[serde(default = "default_max_trials")]
    pub max_trials: usize,
    /// Escalate when `stderr / mean` exceeds this.
    #[serde(default = "default_rel")]
    pub escalate_rel_stderr: f64,
    /// Additional random truths for the worst-of-G report; 0 disables it.
    #[serde(default)]
    pub worst_of: usize,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sieve: SieveConfig,
    pub axes: Axes,
    #[serde(default)]
    pub inner: InnerConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.axes.m.is_empty() || self.axes.n.is_empty() || self.axes.l.is_empty() {
            return bad("every sweep axis needs at least one value".into());
        }
        if self.axes.m.contains(&0) || self.axes.n.contains(&0) || self.axes.l.contains(&0) {
            return bad("axis values must be positive".into());
        }
        if self.trials < 2 || self.max_trials < self.trials {
            return bad(format!("trials = {}, max_trials = {}", self.trials, self.max_trials));
        }
        if !(self.r > 0.5 && self.r < 1.0) {
            return bad(format!("r = {} outside (1/2, 1)", self.r));
        }
        self.inner_variant()?;
        Ok(())
    }

    pub fn inner_variant(&self) -> Result<Option<ProtocolVariant>> {
        if self.inner.variant.eq_ignore_ascii_case("auto") {
            Ok(None)
        } else {
            self.inner.variant.parse().map(Some)
        }
    }

    pub fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            plan: PlanOptions {
                theory_constants: self.inner.theory_constants,
                c_inner: self.inner.c_inner,
                c3: self.inner.c3,
                ..PlanOptions::default()
            },
            inner: self.inner_variant()?,
            h: self.inner.h,
            k0: self.inner.k0,
            project_simplex: self.inner.project_simplex,
        })
    }

    /// `(m, n, l)` tuples in row-major axis order.
    pub fn tuples(&self) -> Vec<(u64, u64, u32)> {
        let mut out = Vec::new();
        for &m in &self.axes.m {
            for &n in &self.axes.n {
                for &l in &self.axes.l {
                    out.push((m, n, l));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
model = "density"
r = 0.8
seed = 3
trials = 50
[sieve]
k = 16
eps = "auto"
[axes]
m = [64, 128]
n = [16]
l = [8, 12]
[inner]
variant = "quantized_frames_b3"
c3 = 2.0
"#;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_toml(FULL).unwrap();
        assert_eq!(cfg.model, ModelKind::Density);
        assert_eq!(cfg.sieve.k, Auto::Value(16));
        assert_eq!(cfg.sieve.eps, Auto::Auto);
        assert_eq!(cfg.sieve.c0, Auto::Auto);
        assert_eq!(cfg.tuples(), vec![(64, 16, 8), (64, 16, 12), (128, 16, 8), (128, 16, 12)]);
        assert_eq!(cfg.inner_variant().unwrap(), Some(ProtocolVariant::QuantizedFrames { bits: 3 }));
        assert_eq!(cfg.overrides().unwrap().plan.c3, 2.0);
        assert_eq!(cfg.max_trials, 400);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml(&FULL.replace("trials = 50", "trials = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&FULL.replace("m = [64, 128]", "m = []")).is_err());
        assert!(ExperimentConfig::from_toml(&FULL.replace("k = 16", "k = \"big\"")).is_err());
        assert!(ExperimentConfig::from_toml(&FULL.replace("variant = \"quantized_frames_b3\"", "variant = \"x\"")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{FULL}\nbogus = 1")).is_err());
    }
}
