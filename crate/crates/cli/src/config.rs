use std::path::{Path, PathBuf};

use crisiskd::bench::BenchConfig;
use crisiskd::distill::{GenericDistillConfig, TaskDistillConfig};
use crisiskd::finetune::{FinetuneConfig, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub margin: Option<f64>,
    pub confidence: Option<f64>,
}

/// Contents of `--config`. Every block is optional; missing fields take the
/// module defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_length: Option<usize>,
    pub vocab_size: Option<usize>,
    pub preset: Option<String>,
    pub sampling: SamplingConfig,
    pub split: Option<SplitSpec>,
    pub finetune: Option<FinetuneConfig>,
    pub task_distill: Option<TaskDistillConfig>,
    pub generic_distill: Option<GenericDistillConfig>,
    pub bench: Option<BenchConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// `flag.or(file).unwrap_or(default)`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
