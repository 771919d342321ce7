use std::fs;
use std::path::Path;

use ntfa::inference::TrainConfig;
use ntfa::Error;
use serde::{Deserialize, Serialize};

/// Settings read from `--config`; flags given on the command line win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub train: TrainConfig,
    pub model: ModelSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub factors: usize,
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub particles: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            seed: None,
            train: TrainConfig::default(),
            model: ModelSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            factors: 3,
            embedding_dim: 2,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { particles: 100 }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: e.span().map_or(0, |s| s.start as u64),
            message: e.message().to_string(),
        })
    }

    /// Seed from the flag, else the file's top-level seed, else the
    /// training seed.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> u64 {
        let seed = flag.or(self.seed).unwrap_or(self.train.seed);
        self.seed = Some(seed);
        self.train.seed = seed;
        seed
    }
}
