//! Runtime configuration loaded from a small TOML document:
//!
//! ```toml
//! [retrieval]
//! tau = 0.6
//! lambda = 1.0
//! suppression_alpha = 0.5
//!
//! [reasoner]
//! demos_k = 4
//! ```
//!
//! Command-line flags override file values, which override built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    /// High-confidence threshold, in (0, 1].
    pub tau: f64,
    /// Outlier cutoff width in standard deviations, > 0.
    pub lambda: f64,
    /// Multiplier applied to edited entities the sub-question does not mention, in [0, 1].
    pub suppression_alpha: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            tau: 0.6,
            lambda: 1.0,
            suppression_alpha: 0.5,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.suppression_alpha) {
            return Err(Error::Config(format!(
                "suppression_alpha must be in [0, 1], got {}",
                self.suppression_alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasonerConfig {
    /// Few-shot demonstrations retrieved per question.
    pub demos_k: usize,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self { demos_k: 4 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub retrieval: RetrievalConfig,
    pub reasoner: ReasonerConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialRetrieval {
    tau: Option<f64>,
    lambda: Option<f64>,
    suppression_alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialReasoner {
    demos_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    #[serde(default)]
    retrieval: PartialRetrieval,
    #[serde(default)]
    reasoner: PartialReasoner,
}

/// Flag-level overrides; `None` keeps the file or default value.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub suppression_alpha: Option<f64>,
    pub demos_k: Option<usize>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let partial: PartialConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let d = Config::default();
        let cfg = Config {
            retrieval: RetrievalConfig {
                tau: partial.retrieval.tau.unwrap_or(d.retrieval.tau),
                lambda: partial.retrieval.lambda.unwrap_or(d.retrieval.lambda),
                suppression_alpha: partial
                    .retrieval
                    .suppression_alpha
                    .unwrap_or(d.retrieval.suppression_alpha),
            },
            reasoner: ReasonerConfig {
                demos_k: partial.reasoner.demos_k.unwrap_or(d.reasoner.demos_k),
            },
        };
        cfg.retrieval.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn with_overrides(mut self, o: Overrides) -> Result<Self> {
        if let Some(v) = o.tau {
            self.retrieval.tau = v;
        }
        if let Some(v) = o.lambda {
            self.retrieval.lambda = v;
        }
        if let Some(v) = o.suppression_alpha {
            self.retrieval.suppression_alpha = v;
        }
        if let Some(v) = o.demos_k {
            self.reasoner.demos_k = v;
        }
        self.retrieval.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!((c.retrieval.tau, c.retrieval.lambda, c.retrieval.suppression_alpha), (0.6, 1.0, 0.5));
        assert_eq!(c.reasoner.demos_k, 4);
    }

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let file = Config::parse("[retrieval]\ntau = 0.7\nlambda = 2.0\n").unwrap();
        assert_eq!(file.retrieval.tau, 0.7);
        assert_eq!(file.retrieval.suppression_alpha, 0.5);
        let merged = file
            .with_overrides(Overrides {
                tau: Some(0.8),
                ..Default::default()
            })
            .unwrap();
        assert_eq!((merged.retrieval.tau, merged.retrieval.lambda), (0.8, 2.0));
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(Config::parse("[retrieval]\ntau = 0.0\n").is_err());
        assert!(Config::parse("[retrieval]\nlambda = -1\n").is_err());
        assert!(Config::parse("[retrieval]\nsuppression_alpha = 1.5\n").is_err());
        assert!(Config::parse("[retrieval]\ntheta = 1\n").is_err());
        assert!(Config::parse("").is_ok());
    }
}
