//! Run configuration file (TOML) and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hierdetect::corpus::Stratify;
use hierdetect::detector::FeatureConfig;
use hierdetect::eval::BaselineKind;
use hierdetect::training::TrainingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub stratify: Stratify,
    pub min_words: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.3,
            stratify: Stratify::Label,
            min_words: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub baselines: Vec<BaselineKind>,
    /// Training seeds for ablation rows (mean ± sample stdev).
    pub ablation_seeds: Vec<u64>,
    pub n_permutations: usize,
    pub robustness_rate: f64,
    pub bench_repetitions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            baselines: BaselineKind::ALL.to_vec(),
            ablation_seeds: vec![0],
            n_permutations: 20,
            robustness_rate: 0.1,
            bench_repetitions: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub features: FeatureConfig,
    pub training: TrainingConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let s = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str(&s).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.training.seed = s;
            cfg.split.seed = s;
        }
        cfg.features.validate()?;
        cfg.training.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 over the resolved configuration and command arguments.
    pub config_digest: String,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn digest<T: Serialize>(command: &str, args: &T, cfg: &RunConfig) -> Result<String> {
    let v = serde_json::json!({ "command": command, "args": args, "config": cfg });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&v)?)))
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
