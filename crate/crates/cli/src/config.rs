use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use rangeudf::dataset::QueryConfig;
use rangeudf::extraction::{DenseConfig, DEFAULT_LEVEL, DEFAULT_RESOLUTION};
use rangeudf::metrics::DEFAULT_DELTA;
use rangeudf::model::ModelConfig;
use rangeudf::training::TrainConfig;
use rangeudf::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Dense points required from the projection stage.
    pub n_min: usize,
    pub resolution: usize,
    /// Distance of the shell that marching cubes triangulates.
    pub level: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            n_min: 100_000,
            resolution: DEFAULT_RESOLUTION,
            level: DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub delta: f64,
    /// Points sampled from a ground-truth mesh for scoring.
    pub gt_points: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            delta: DEFAULT_DELTA,
            gt_points: 100_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub k_values: Vec<usize>,
    pub no_range_term: bool,
    pub sem_with_q: bool,
    pub no_uncertainty: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            k_values: vec![1, 4, 8, 16],
            no_range_term: true,
            sem_with_q: true,
            no_uncertainty: true,
        }
    }
}

/// Everything a pipeline stage can be configured with, as one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub queries: QueryConfig,
    pub dense: DenseConfig,
    pub extract: ExtractConfig,
    pub metrics: MetricsConfig,
    pub data: DataPaths,
    pub ablation: AblationConfig,
    /// Total optimizer steps; when set it replaces the epoch count.
    pub max_steps: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let config = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::format(p.display().to_string(), e.to_string()))
                    .context("invalid run configuration")?
            }
        };
        Ok(config)
    }

    pub fn validate(&self) -> rangeudf::Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.queries.validate()?;
        self.dense.validate()?;
        if self.extract.resolution < 8 {
            return Err(Error::Validation(format!(
                "mesh resolution {} is below 8",
                self.extract.resolution
            )));
        }
        if self.extract.n_min == 0 {
            return Err(Error::Validation("n_min must be at least 1".into()));
        }
        if !(self.extract.level > 0.0) || !(self.metrics.delta > 0.0) {
            return Err(Error::Validation("mesh level and metric delta must be positive".into()));
        }
        if self.metrics.gt_points == 0 {
            return Err(Error::Validation("gt_points must be positive".into()));
        }
        if self.ablation.k_values.contains(&0) {
            return Err(Error::Validation("ablation K values must be positive".into()));
        }
        Ok(())
    }

    /// Applies a global `--seed` to every seeded stage.
    pub fn reseed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.queries.seed = seed;
        self.dense.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"train": {"epochs": 3}, "model": {"k": 8}}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.lr, TrainConfig::default().lr);
        assert_eq!(c.model.k, 8);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"trian": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"epoch": 1}}"#).is_err());
    }

    #[test]
    fn roundtrip() {
        let mut c = RunConfig {
            max_steps: Some(10),
            ..RunConfig::default()
        };
        c.reseed(5);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::default();
        c.extract.resolution = 4;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.train.lr = -1.0;
        assert!(c.validate().is_err());
    }
}
