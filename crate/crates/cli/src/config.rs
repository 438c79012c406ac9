//! Run configuration: protocol constants plus stage toggles.

use serde::{Deserialize, Serialize};

use enscore::ProtocolConfig;

fn default_true() -> bool {
    true
}

/// Which pipeline stages `run` executes. Everything defaults to on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    #[serde(default = "default_true")]
    pub select: bool,
    #[serde(default = "default_true")]
    pub aggregate: bool,
    #[serde(default = "default_true")]
    pub calibrate: bool,
    #[serde(default = "default_true")]
    pub fragility: bool,
    #[serde(default = "default_true")]
    pub sweep: bool,
    #[serde(default = "default_true")]
    pub topk: bool,
    #[serde(default = "default_true")]
    pub selective: bool,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
    #[serde(default = "default_true")]
    pub prevalence: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            select: true,
            aggregate: true,
            calibrate: true,
            fragility: true,
            sweep: true,
            topk: true,
            selective: true,
            bootstrap: true,
            prevalence: true,
        }
    }
}

/// Full configuration for a `run` invocation. JSON-serializable; the
/// emitted bundle embeds it along with its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    /// Evaluation split per input: train|test|external, or "auto" (test if
    /// present, else external, else every row).
    pub eval_split: String,
    /// Input (by file stem) whose train split locks selection/calibration
    /// for inputs that carry no train rows. Defaults to the first input
    /// that has train rows.
    pub lock_input: Option<String>,
    /// Seed of the locked random single-prompt baseline.
    pub random_baseline_seed: u64,
    pub stages: Stages,
    /// Emit reliability-diagram and coverage-curve SVGs.
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: ProtocolConfig::default(),
            eval_split: "auto".to_string(),
            lock_input: None,
            random_baseline_seed: 42,
            stages: Stages::default(),
            svg: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> enscore::Result<()> {
        self.protocol.validate()?;
        match self.eval_split.as_str() {
            "auto" | "train" | "test" | "external" => Ok(()),
            other => Err(enscore::Error::InvalidInput(format!(
                "eval_split '{other}' must be auto|train|test|external"
            ))),
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_hash_stable() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"eval_split": "test"}"#).unwrap();
        assert_eq!(c.eval_split, "test");
        assert!(c.stages.bootstrap);
        assert_eq!(c.protocol.bootstrap_b, 10_000);
    }

    #[test]
    fn stage_toggles_parse() {
        let c: RunConfig =
            serde_json::from_str(r#"{"stages": {"bootstrap": false, "prevalence": false}}"#)
                .unwrap();
        assert!(!c.stages.bootstrap);
        assert!(!c.stages.prevalence);
        assert!(c.stages.select);
    }

    #[test]
    fn different_configs_hash_differently() {
        let a = RunConfig::default();
        let b = RunConfig { random_baseline_seed: 7, ..Default::default() };
        assert_ne!(a.hash(), b.hash());
    }
}
