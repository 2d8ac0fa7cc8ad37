//! Pinned run configuration, read from a sectioned TOML file.
//!
//! ```toml
//! seed = 7
//!
//! [features]
//! parts = "l+p"
//!
//! [train]
//! epochs = 50
//! loss_mode = "ce"
//!
//! [audit]
//! min_confidence = 0.8
//!
//! [corpus]
//! families = 20
//!
//! [bench]
//! reps = 5
//! ```
//!
//! Every section and key is optional. Command-line flags override the file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::AuditPolicy;
use crate::corpus::CorpusSpec;
use crate::error::{Error, Result};
use crate::features::FeatureParts;
use crate::learner::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub parts: FeatureParts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub reps: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { reps: 5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides the seeds of the train and corpus sections.
    pub seed: Option<u64>,
    /// Worker threads for batch stages; 0 lets the pool decide.
    pub workers: usize,
    pub features: FeatureSection,
    pub train: TrainConfig,
    pub audit: AuditPolicy,
    pub corpus: CorpusSpec,
    pub bench: BenchSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.apply_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Propagate a global seed into every seeded section.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.seed = Some(seed);
            self.train.seed = seed;
            self.corpus.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.audit.validate()?;
        self.corpus.validate()?;
        if self.bench.reps == 0 {
            return Err(Error::Config("bench.reps must be at least 1".to_string()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::LossMode;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.audit.min_confidence, 0.8);
    }

    #[test]
    fn sections_and_seed() {
        let cfg = RunConfig::from_toml(
            "seed = 9\n[features]\nparts = \"l\"\n[train]\nloss_mode = \"joint_supcon\"\nlambda = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.features.parts, FeatureParts::LOnly);
        assert_eq!(cfg.train.loss_mode, LossMode::JointSupcon);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.corpus.seed, 9);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[train]\nlambda = 2.0\n").is_err());
        assert!(RunConfig::from_toml("[train]\nunknown = 1\n").is_err());
        assert!(RunConfig::from_toml("[audit]\ntask_k = 0\n").is_err());
    }
}
