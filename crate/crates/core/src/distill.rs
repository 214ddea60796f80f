//! Knowledge distillation: task-specific (soft teacher logits mixed with
//! hard labels) and generic (student sentence embeddings regressed onto a
//! learned projection of the frozen teacher's mean-pooled embeddings).

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenSequence, Tokenizer};
use crate::encoder::{DownsampleProjection, EncoderConfig, EncoderModel, PoolingMode};
use crate::finetune::{
    train_classifier, Example, FinetuneOutcome, SequenceClassifier, Splits, TeacherSignal, TrainSettings,
};
use crate::numcore::{Adam, AdamConfig, Tape};
use crate::{rng, Error, Result};

pub const EMA_DECAY: f64 = 0.98;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskDistillConfig {
    pub alpha: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for TaskDistillConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 1.0,
            learning_rate: 1e-5,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            min_improvement: 1e-4,
        }
    }
}

fn check_tokenizers(teacher: &Tokenizer, student: &Tokenizer, configs: [&EncoderConfig; 2]) -> Result<()> {
    if teacher != student || configs.iter().any(|c| c.vocab_size != teacher.vocab_size()) {
        return Err(Error::TokenizerMismatch);
    }
    Ok(())
}

/// Trains `student` on `alpha · T²·KL(teacher ‖ student) + (1 − alpha) · CE`
/// with the same class weighting and early stopping as fine-tuning. With
/// `alpha = 0` it is exactly supervised fine-tuning.
#[allow(clippy::too_many_arguments)]
pub fn distill_task<R: Rng + ?Sized>(
    teacher: &SequenceClassifier<f32>,
    teacher_tokenizer: &Tokenizer,
    student: &mut SequenceClassifier<f32>,
    student_tokenizer: &Tokenizer,
    data: &Splits<Example>,
    config: &TaskDistillConfig,
    rng: &mut R,
) -> Result<FinetuneOutcome> {
    check_tokenizers(
        teacher_tokenizer,
        student_tokenizer,
        [teacher.encoder.config(), student.encoder.config()],
    )?;
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(Error::InvalidConfig("alpha must lie in [0, 1]".into()));
    }
    if teacher.head.num_classes() != student.head.num_classes() {
        return Err(Error::ConfigMismatch("teacher and student class counts differ".into()));
    }
    let settings = TrainSettings {
        max_epochs: config.max_epochs,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        patience: config.patience,
        min_improvement: config.min_improvement,
    };
    let signal = TeacherSignal {
        teacher,
        alpha: config.alpha,
        temperature: config.temperature,
    };
    train_classifier(student, data, &settings, Some(signal), rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenericDistillConfig {
    pub pooling: PoolingMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for GenericDistillConfig {
    fn default() -> Self {
        Self {
            pooling: PoolingMode::MeanPool,
            learning_rate: 2e-4,
            batch_size: 1024,
            epochs: 1,
        }
    }
}

/// Per-step training loss of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub tag: String,
    pub points: Vec<(usize, f64)>,
}

impl LossTrace {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            points: Vec::new(),
        }
    }

    /// Exponential moving average with decay [`EMA_DECAY`], seeded with the
    /// first loss.
    pub fn smoothed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len());
        let mut ema = None;
        for &(_, loss) in &self.points {
            let next = match ema {
                None => loss,
                Some(prev) => EMA_DECAY * prev + (1.0 - EMA_DECAY) * loss,
            };
            ema = Some(next);
            out.push(next);
        }
        out
    }

    pub fn from_steps(tag: impl Into<String>, steps: &[(usize, f64)]) -> Self {
        Self {
            tag: tag.into(),
            points: steps.to_vec(),
        }
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.points.first().map(|p| p.1)
    }

    pub fn final_smoothed(&self) -> Option<f64> {
        self.smoothed().last().copied()
    }

    /// `step,loss,tag` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,tag\n");
        for &(step, loss) in &self.points {
            let _ = writeln!(out, "{step},{loss},{}", self.tag);
        }
        out
    }
}

/// Generic distillation on unlabeled text. Each step computes the frozen
/// teacher's mean-pooled embeddings, maps them through `projection` and
/// minimizes the MSE to the student's pooled embeddings; the student and
/// the projection are updated jointly. The teacher is never modified.
pub fn distill_generic<R: Rng + ?Sized>(
    teacher: &EncoderModel<f32>,
    student: &mut EncoderModel<f32>,
    projection: &mut DownsampleProjection<f32>,
    corpus: &[TokenSequence],
    config: &GenericDistillConfig,
    rng: &mut R,
) -> Result<LossTrace> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidConfig("batch size and epochs must be positive".into()));
    }
    if projection.teacher_dim() != teacher.config().hidden_size
        || projection.student_dim() != student.config().hidden_size
    {
        return Err(Error::ConfigMismatch("projection does not map teacher width to student width".into()));
    }
    if teacher.config().vocab_size != student.config().vocab_size {
        return Err(Error::TokenizerMismatch);
    }
    let adam_cfg = AdamConfig::with_lr(config.learning_rate);
    let mut student_opt = Adam::new(adam_cfg.clone(), student.params());
    let mut proj_opt = Adam::new(adam_cfg, projection.params());
    let mut trace = LossTrace::new(match config.pooling {
        PoolingMode::MeanPool => "mean_pool",
        PoolingMode::ClsToken => "cls",
    });
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&TokenSequence> = chunk.iter().map(|&i| &corpus[i]).collect();
            let batch = crate::finetune::trim_batch(&refs);
            let mask: Vec<u8> = batch.iter().flat_map(|s| s.attention_mask.iter().copied()).collect();

            let mut tape = Tape::new();
            let tv = teacher.params().bind_frozen(&mut tape);
            let t_hidden = teacher.forward(&mut tape, &tv, &batch)?;
            let t_pooled = PoolingMode::MeanPool.apply(&mut tape, t_hidden, &mask)?;
            let pv = projection.params().bind(&mut tape);
            let target = projection.forward(&mut tape, &pv, t_pooled)?;
            let sv = student.params().bind(&mut tape);
            let s_hidden = student.forward(&mut tape, &sv, &batch)?;
            let s_pooled = config.pooling.apply(&mut tape, s_hidden, &mask)?;
            let loss = tape.mse(target, s_pooled)?;
            let value = tape.scalar(loss) as f64;
            if !value.is_finite() {
                return Err(Error::Diverged);
            }
            let mut grads = tape.backward(loss);
            let sg: Vec<_> = sv.iter().map(|&v| grads.take(v)).collect();
            let pg: Vec<_> = pv.iter().map(|&v| grads.take(v)).collect();
            student_opt.step(student.params_mut(), &sg)?;
            proj_opt.step(projection.params_mut(), &pg)?;
            trace.points.push((trace.points.len(), value));
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolingComparison {
    pub mean_pool_final_loss: f64,
    pub cls_final_loss: f64,
    pub mean_pool: LossTrace,
    pub cls: LossTrace,
}

impl PoolingComparison {
    pub fn to_csv(&self) -> String {
        let cls = self.cls.to_csv();
        let body = cls.split_once('\n').map_or("", |(_, rest)| rest);
        self.mean_pool.to_csv() + body
    }
}

/// Runs generic distillation twice from the same student initialization
/// and data order, once per pooling mode, and reports both smoothed final
/// losses.
pub fn compare_pooling(
    teacher: &EncoderModel<f32>,
    student_config: &EncoderConfig,
    corpus: &[TokenSequence],
    config: &GenericDistillConfig,
    seed: u64,
) -> Result<PoolingComparison> {
    let run = |pooling: PoolingMode| -> Result<LossTrace> {
        let mut init = rng::stream(seed, "student_init");
        let mut student = EncoderModel::new(student_config.clone(), &mut init)?;
        let mut projection =
            DownsampleProjection::new(teacher.config().hidden_size, student_config.hidden_size, &mut init)?;
        let mut order = rng::stream(seed, "generic_kd_order");
        let cfg = GenericDistillConfig {
            pooling,
            ..config.clone()
        };
        distill_generic(teacher, &mut student, &mut projection, corpus, &cfg, &mut order)
    };
    let mean_pool = run(PoolingMode::MeanPool)?;
    let cls = run(PoolingMode::ClsToken)?;
    Ok(PoolingComparison {
        mean_pool_final_loss: mean_pool.final_smoothed().unwrap_or(f64::NAN),
        cls_final_loss: cls.final_smoothed().unwrap_or(f64::NAN),
        mean_pool,
        cls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ema_and_csv() {
        let mut t = LossTrace::new("x");
        t.points = vec![(0, 1.0), (1, 0.0)];
        assert_eq!(t.smoothed(), vec![1.0, 0.98]);
        assert_eq!(t.to_csv(), "step,loss,tag\n0,1,x\n1,0,x\n");
    }
}
