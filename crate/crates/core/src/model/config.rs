use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointnet::EncoderConfig;

/// What the per-neighbor range MLP sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RangeInput {
    /// (q − p_k) ⊕ q ⊕ p_k
    #[default]
    Full,
    /// q ⊕ p_k: the relative term dropped.
    WithoutRelative,
    /// p_k alone: nothing about the query enters the distance branch.
    NeighborOnly,
}

impl RangeInput {
    pub fn width(self) -> usize {
        match self {
            RangeInput::Full => 9,
            RangeInput::WithoutRelative => 6,
            RangeInput::NeighborOnly => 3,
        }
    }
}

pub const RANGE_WIDTH: usize = 32;
pub const UDF_HIDDEN: [usize; 3] = [512, 32, 32];
pub const SEM_HIDDEN: [usize; 2] = [64, 32];
pub const POOLED_WIDTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub encoder: EncoderConfig,
    /// Neighbors gathered per query by both heads.
    pub k: usize,
    pub classes: usize,
    #[serde(default)]
    pub range_input: RangeInput,
    /// Append the query position to each semantic-branch row.
    #[serde(default)]
    pub sem_with_q: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            k: 4,
            classes: 3,
            range_input: RangeInput::Full,
            sem_with_q: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.k == 0 {
            return Err(Error::Validation("K must be at least 1".into()));
        }
        if self.classes == 0 {
            return Err(Error::Validation("class count must be at least 1".into()));
        }
        Ok(())
    }

    /// Row width entering the semantic attention pool.
    pub fn sem_width(&self) -> usize {
        3 + self.encoder.feature_width + if self.sem_with_q { 3 } else { 0 }
    }

    /// Row width entering the distance attention pool.
    pub fn udf_width(&self) -> usize {
        RANGE_WIDTH + self.encoder.feature_width
    }
}
