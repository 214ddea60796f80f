use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassifierHead, EncoderConfig, EncoderModel};
use crate::corpus::Tokenizer;
use crate::numcore::{checkpoint, ParamStore};
use crate::{rng, Error, Result};

/// File layout of a model directory.
pub struct ModelPaths {
    pub config: PathBuf,
    pub weights: PathBuf,
    pub manifest: PathBuf,
    pub vocab: PathBuf,
    pub merges: PathBuf,
}

impl ModelPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            config: dir.join("config.json"),
            weights: dir.join("model.bin"),
            manifest: dir.join("model.json"),
            vocab: dir.join("vocab.txt"),
            merges: dir.join("merges.txt"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StoredConfig {
    encoder: EncoderConfig,
    max_length: usize,
    has_head: bool,
}

/// Encoder, optional classification head and tokenizer, saved together.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub encoder: EncoderModel<f32>,
    pub head: Option<ClassifierHead<f32>>,
    pub tokenizer: Tokenizer,
    pub max_length: usize,
}

const HEAD_PREFIX: &str = "head.";

impl ModelBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = ModelPaths::new(dir);
        let stored = StoredConfig {
            encoder: self.encoder.config().clone(),
            max_length: self.max_length,
            has_head: self.head.is_some(),
        };
        fs::write(&paths.config, serde_json::to_string_pretty(&stored)?).map_err(|e| Error::io(&paths.config, e))?;
        let mut all = self.encoder.params().clone();
        if let Some(head) = &self.head {
            for (name, t) in head.params().iter() {
                all.insert(format!("{HEAD_PREFIX}{name}"), t.clone());
            }
        }
        checkpoint::save(&all, &paths.weights, &paths.manifest)?;
        self.tokenizer.save(&paths.vocab, &paths.merges)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let paths = ModelPaths::new(dir);
        let text = fs::read_to_string(&paths.config).map_err(|e| Error::io(&paths.config, e))?;
        let stored: StoredConfig = serde_json::from_str(&text)?;
        let tokenizer = Tokenizer::load(&paths.vocab, &paths.merges)?;
        let mut encoder = EncoderModel::<f32>::new(stored.encoder.clone(), &mut rng::stream(0, "load"))?;
        let tensors = checkpoint::load_all(&paths.weights, &paths.manifest)?;
        let mut body = ParamStore::new();
        let mut head_weight = None;
        let mut head_bias = None;
        for (name, t) in tensors {
            match name.strip_prefix(HEAD_PREFIX) {
                Some("weight") => head_weight = Some(t),
                Some("bias") => head_bias = Some(t),
                Some(other) => return Err(Error::Parse(format!("unknown head tensor {other}"))),
                None => {
                    body.insert(name, t);
                }
            }
        }
        encoder.params_mut().copy_from(&body)?;
        let head = match (stored.has_head, head_weight, head_bias) {
            (true, Some(w), Some(b)) => Some(ClassifierHead::from_parts(w, b)?),
            (false, None, None) => None,
            _ => return Err(Error::Parse("head tensors disagree with config".into())),
        };
        Ok(Self {
            encoder,
            head,
            tokenizer,
            max_length: stored.max_length,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_text, train_tokenizer};

    #[test]
    fn bundle_roundtrip() {
        let texts = [normalize_text("need water please"), normalize_text("can offer food")];
        let tokenizer = train_tokenizer(&texts, 300).unwrap();
        let cfg = EncoderConfig::new(8, 1, 2, 16).with_vocab(300).with_max_positions(16);
        let mut r = rng::stream(3, "t");
        let bundle = ModelBundle {
            encoder: EncoderModel::new(cfg, &mut r).unwrap(),
            head: Some(ClassifierHead::new(8, 4, &mut r)),
            tokenizer,
            max_length: 16,
        };
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let back = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(back.encoder, bundle.encoder);
        assert_eq!(back.head, bundle.head);
        assert_eq!(back.tokenizer, bundle.tokenizer);
        assert_eq!(back.max_length, 16);
    }
}
