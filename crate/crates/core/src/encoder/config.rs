use serde::{Deserialize, Serialize};

use crate::corpus::{DEFAULT_MAX_LENGTH, DEFAULT_VOCAB_SIZE};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub num_classes: usize,
}

impl EncoderConfig {
    pub fn new(hidden_size: usize, num_layers: usize, num_heads: usize, intermediate_size: usize) -> Self {
        Self {
            hidden_size,
            num_layers,
            num_heads,
            intermediate_size,
            vocab_size: DEFAULT_VOCAB_SIZE,
            max_positions: DEFAULT_MAX_LENGTH,
            num_classes: 4,
        }
    }

    pub fn with_vocab(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn with_max_positions(mut self, max_positions: usize) -> Self {
        self.max_positions = max_positions;
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    /// Desk-scale teacher, {H:128, L:4, A:4, I:512}.
    pub fn desk_teacher() -> Self {
        Self::new(128, 4, 4, 512)
    }

    /// Desk-scale analogue of the medium student.
    pub fn desk_medium() -> Self {
        Self::new(64, 2, 2, 256)
    }

    /// Desk-scale analogue of the small student.
    pub fn desk_small() -> Self {
        Self::new(48, 2, 2, 192)
    }

    /// Desk-scale analogue of the tiny student.
    pub fn desk_tiny() -> Self {
        Self::new(32, 1, 1, 128)
    }

    /// Full-size shapes: base teacher {768,12,12,3072} and students
    /// {512,8,8,2048}, {384,6,6,1536}, {256,4,4,1024}.
    pub fn base_teacher() -> Self {
        Self::new(768, 12, 12, 3072)
    }

    pub fn medium() -> Self {
        Self::new(512, 8, 8, 2048)
    }

    pub fn small() -> Self {
        Self::new(384, 6, 6, 1536)
    }

    pub fn tiny() -> Self {
        Self::new(256, 4, 4, 1024)
    }

    /// Named preset lookup used by the CLI.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "teacher" => Self::desk_teacher(),
            "s_m" => Self::desk_medium(),
            "s_s" => Self::desk_small(),
            "s_t" => Self::desk_tiny(),
            "base" => Self::base_teacher(),
            "medium" => Self::medium(),
            "small" => Self::small(),
            "tiny" => Self::tiny(),
            _ => return None,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.hidden_size,
            self.num_heads,
            self.intermediate_size,
            self.vocab_size,
            self.max_positions,
            self.num_classes,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        if self.intermediate_size < self.hidden_size {
            return Err(Error::InvalidConfig("intermediate size must be at least the hidden size".into()));
        }
        Ok(())
    }
}

/// Closed-form parameter count of the encoder body (no classification head):
/// token and position embeddings, the embedding layer norm, and per layer the
/// four attention projections, the two feed-forward projections and two
/// layer norms.
pub fn count_params(config: &EncoderConfig) -> usize {
    let (h, i) = (config.hidden_size, config.intermediate_size);
    let embeddings = config.vocab_size * h + config.max_positions * h + 2 * h;
    let attention = 4 * (h * h + h);
    let ffn = (h * i + i) + (i * h + h);
    let norms = 2 * 2 * h;
    embeddings + config.num_layers * (attention + ffn + norms)
}

/// Vocabulary size at which `count_params` would equal `total_params` for
/// this shape (other dimensions fixed). Useful when only a rounded total is
/// known.
pub fn implied_vocab_size(config: &EncoderConfig, total_params: usize) -> f64 {
    let without_vocab = count_params(&EncoderConfig {
        vocab_size: 0,
        ..config.clone()
    });
    (total_params as f64 - without_vocab as f64) / config.hidden_size as f64
}
