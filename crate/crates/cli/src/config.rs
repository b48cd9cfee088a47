//! Experiment configuration files.
//!
//! A config is a TOML document with flat top-level keys and optional
//! `[shattering]` and `[mogp]` sections:
//!
//! ```toml
//! n = 16
//! p = 3
//! mode = "rem-limit"
//! seeds = { start = 0, count = 20 }
//! beta = [0.9, 1.1]
//! epsilon = 0.3
//! kappa = 0.12
//! nu1 = 0.2
//! nu2 = 0.45
//! out = "scan-out"
//! workers = 4
//!
//! [shattering]
//! c = 0.1
//! cprime = 0.1
//! ```

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};

use pspin::disorder::MAX_SPINS;
use pspin::{BuildLimits, Mode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Seeds as an explicit list or a half-open range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, count } => (*start..start.saturating_add(*count)).collect(),
        }
    }

    /// Largest seed, without materializing a range.
    pub fn max(&self) -> Option<u64> {
        match self {
            Seeds::List(v) => v.iter().copied().max(),
            Seeds::Range { count: 0, .. } => None,
            Seeds::Range { start, count } => Some(start.saturating_add(count - 1)),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::List(Vec::new())
    }
}

/// Exponents of the shattering verdict. Distances default to `a = 2ν₁`, `b = ν₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShatteringParams {
    /// Required `log₂ L / n`.
    pub c: f64,
    /// Required decay rate of the largest cluster mass.
    pub cprime: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl Default for ShatteringParams {
    fn default() -> Self {
        Self {
            c: 0.1,
            cprime: 0.1,
            a: None,
            b: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MogpConfig {
    pub m: usize,
    pub gamma: f64,
    /// Angles for the empirical search; no search when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seeds: Seeds,
    pub beta: Vec<f64>,
    pub epsilon: f64,
    pub kappa: f64,
    pub nu1: f64,
    pub nu2: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub shattering: ShatteringParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mogp: Option<MogpConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("scan-out")
}

fn in_open_unit(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CliError::config(field, format!("{v} is not in (0, 1)")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|span| {
                    let start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
                    let line = &text[start..];
                    let line = line.split('\n').next().unwrap_or_default();
                    match line.split_once('=') {
                        Some((key, _)) => key.trim().to_string(),
                        None => line.trim().trim_matches(['[', ']']).to_string(),
                    }
                })
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "<document>".into());
            CliError::config(field, e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn mode(&self) -> Mode {
        self.mode
            .unwrap_or_else(|| BuildLimits::default().select_mode(self.n, self.p))
    }

    pub fn shatter_a(&self) -> f64 {
        self.shattering.a.unwrap_or(2.0 * self.nu1)
    }

    pub fn shatter_b(&self) -> f64 {
        self.shattering.b.unwrap_or(self.nu2)
    }

    /// Checks every field against the preconditions of the routines it feeds.
    pub fn validate(&self) -> Result<()> {
        let limits = BuildLimits::default();
        if self.n == 0 || self.n > MAX_SPINS as usize {
            return Err(CliError::config("n", format!("{} is not in 1..={MAX_SPINS}", self.n)));
        }
        let max_n = match self.mode() {
            Mode::ExactTensor => MAX_SPINS as usize,
            Mode::GramCholesky => limits.gram_max_n,
            Mode::RemLimit => limits.rem_max_n,
        };
        if self.n > max_n {
            return Err(CliError::config(
                "n",
                format!("{} exceeds {max_n} for mode {}", self.n, self.mode()),
            ));
        }
        if let Some(s) = self.seeds.max().filter(|&s| s > i64::MAX as u64) {
            return Err(CliError::config("seeds", format!("{s} exceeds {}", i64::MAX)));
        }
        if self.p < 2 {
            return Err(CliError::config("p", format!("{} is below 2", self.p)));
        }
        if self.beta.is_empty() {
            return Err(CliError::config("beta", "grid is empty"));
        }
        if let Some(b) = self.beta.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(CliError::config("beta", format!("{b} is not positive")));
        }
        in_open_unit("epsilon", self.epsilon)?;
        if !(self.kappa > 0.0 && self.kappa < FRAC_1_SQRT_2) {
            return Err(CliError::config("kappa", format!("{} is not in (0, 1/√2)", self.kappa)));
        }
        in_open_unit("nu1", self.nu1)?;
        in_open_unit("nu2", self.nu2)?;
        if self.nu1 >= self.nu2 {
            return Err(CliError::config("nu2", format!("{} is not above nu1 = {}", self.nu2, self.nu1)));
        }
        in_open_unit("shattering.a", self.shatter_a())?;
        in_open_unit("shattering.b", self.shatter_b())?;
        for (field, v) in [("shattering.c", self.shattering.c), ("shattering.cprime", self.shattering.cprime)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::config(field, format!("{v} is not a nonnegative number")));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers", "must be at least 1"));
        }
        if let Some(m) = &self.mogp {
            if m.m == 0 {
                return Err(CliError::config("mogp.m", "must be at least 1"));
            }
            if !(m.gamma > 0.0 && m.gamma * (m.m as f64).sqrt() > 1.0) {
                return Err(CliError::config(
                    "mogp.gamma",
                    format!("γ√m = {} is not above 1", m.gamma * (m.m as f64).sqrt()),
                ));
            }
            if m.angles.len() > pspin::mogp::MAX_ANGLES {
                return Err(CliError::config("mogp.angles", "too many angles"));
            }
            if let Some(a) = m.angles.iter().find(|a| pspin::EnsembleAngle::new(**a).is_err()) {
                return Err(CliError::config("mogp.angles", format!("{a} is not in [0, π/2]")));
            }
        }
        Ok(())
    }
}
