//! Protocol constants and their validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prevalence target for the reweighted stress test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrevalenceTarget {
    /// Keep the empirical class balance (all weights 1).
    #[serde(rename = "native", with = "native_serde")]
    Native,
    /// Reweight the unsafe class to this fraction.
    Rate(f64),
}

mod native_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str("native")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<(), D::Error> {
        let s = String::deserialize(de)?;
        if s == "native" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"native\", got \"{s}\"")))
        }
    }
}

impl std::fmt::Display for PrevalenceTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrevalenceTarget::Native => f.write_str("native"),
            PrevalenceTarget::Rate(r) => write!(f, "{r}"),
        }
    }
}

impl std::str::FromStr for PrevalenceTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "native" {
            return Ok(PrevalenceTarget::Native);
        }
        let r: f64 = s
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad prevalence target '{s}'")))?;
        Ok(PrevalenceTarget::Rate(r))
    }
}

/// All numeric constants of the evaluation protocol, with the reference
/// defaults. Every report embeds the config it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Probability clip applied inside NLL and logit transforms.
    pub epsilon: f64,
    /// Default ECE bin count (equal-width).
    pub ece_bins_default: usize,
    /// Decision threshold for binary predictions.
    pub threshold: f64,
    /// Per-side trim fraction for trimmed aggregation rules.
    pub trim_fraction: f64,
    /// Shrink coefficients swept by the bias+scale shrink rules.
    pub shrink_alphas: Vec<f64>,
    /// Coverage grid for selective prediction, descending, containing 1.0.
    pub coverage_grid: Vec<f64>,
    /// Bootstrap resample count.
    pub bootstrap_b: usize,
    /// Bootstrap master seed.
    pub bootstrap_seed: u64,
    /// Prevalence stress targets.
    pub prevalence_targets: Vec<PrevalenceTarget>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            epsilon: 1e-12,
            ece_bins_default: 15,
            threshold: 0.5,
            trim_fraction: 0.1,
            shrink_alphas: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            coverage_grid: vec![1.00, 0.95, 0.90, 0.85, 0.80, 0.70, 0.60, 0.50],
            bootstrap_b: 10_000,
            bootstrap_seed: 42,
            prevalence_targets: vec![
                PrevalenceTarget::Native,
                PrevalenceTarget::Rate(0.25),
                PrevalenceTarget::Rate(0.10),
                PrevalenceTarget::Rate(0.05),
            ],
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidInput(format!(
                "epsilon {} outside (0, 0.5)",
                self.epsilon
            )));
        }
        if self.ece_bins_default < 2 {
            return Err(Error::InvalidInput("ece_bins_default must be >= 2".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "threshold {} outside (0,1)",
                self.threshold
            )));
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(Error::InvalidInput(format!(
                "trim_fraction {} outside [0, 0.5)",
                self.trim_fraction
            )));
        }
        validate_coverage_grid(&self.coverage_grid)?;
        if self.bootstrap_b == 0 {
            return Err(Error::InvalidInput("bootstrap_b must be >= 1".into()));
        }
        for a in &self.shrink_alphas {
            if !(0.0..=1.0).contains(a) {
                return Err(Error::InvalidInput(format!("shrink alpha {a} outside [0,1]")));
            }
        }
        for t in &self.prevalence_targets {
            if let PrevalenceTarget::Rate(r) = t {
                if !(*r > 0.0 && *r < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "prevalence target {r} outside (0,1)"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Grid must sit strictly within (0,1], be sorted descending, and include
/// full coverage as its anchor point.
pub fn validate_coverage_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("coverage grid is empty".into()));
    }
    for &c in grid {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidInput(format!("coverage {c} outside (0,1]")));
        }
    }
    if grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidInput("coverage grid must be strictly descending".into()));
    }
    if grid[0] != 1.0 {
        return Err(Error::InvalidInput("coverage grid must contain 1.0".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ProtocolConfig::default().validate().unwrap();
    }

    #[test]
    fn default_values_pinned() {
        let c = ProtocolConfig::default();
        assert_eq!(c.epsilon, 1e-12);
        assert_eq!(c.ece_bins_default, 15);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.trim_fraction, 0.1);
        assert_eq!(c.shrink_alphas, vec![0.1, 0.25, 0.5, 0.75, 0.9]);
        assert_eq!(c.coverage_grid, vec![1.00, 0.95, 0.90, 0.85, 0.80, 0.70, 0.60, 0.50]);
        assert_eq!(c.bootstrap_b, 10_000);
        assert_eq!(c.bootstrap_seed, 42);
        assert_eq!(c.prevalence_targets.len(), 4);
    }

    #[test]
    fn rejects_bad_grid() {
        let no_anchor =
            ProtocolConfig { coverage_grid: vec![0.9, 0.5], ..Default::default() };
        assert!(no_anchor.validate().is_err(), "grid without 1.0 must fail");
        let repeated =
            ProtocolConfig { coverage_grid: vec![1.0, 0.5, 0.5], ..Default::default() };
        assert!(repeated.validate().is_err(), "non-strict descent must fail");
    }

    #[test]
    fn prevalence_target_serde() {
        let t: Vec<PrevalenceTarget> = serde_json::from_str(r#"["native", 0.25]"#).unwrap();
        assert_eq!(t, vec![PrevalenceTarget::Native, PrevalenceTarget::Rate(0.25)]);
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"["native",0.25]"#);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ProtocolConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        let back: ProtocolConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
    }
}
