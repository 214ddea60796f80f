use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{class_weights, macro_f1};
use super::split::Splits;
use crate::corpus::TokenSequence;
use crate::encoder::{ClassifierHead, EncoderConfig, EncoderModel, PoolingMode};
use crate::numcore::{Adam, AdamConfig, ParamStore, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// One encoded, labeled input. `label` indexes the classifier output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub seq: TokenSequence,
    pub label: usize,
}

/// Encoder plus mean-pooled linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceClassifier<T> {
    pub encoder: EncoderModel<T>,
    pub head: ClassifierHead<T>,
}

/// Drops trailing positions that are padding in every sequence of the batch.
/// Masked keys contribute nothing, so pooled outputs are unchanged.
pub(crate) fn trim_batch(batch: &[&TokenSequence]) -> Vec<TokenSequence> {
    let keep = batch
        .iter()
        .map(|s| s.attention_mask.iter().rposition(|&m| m != 0).map_or(1, |p| p + 1))
        .max()
        .unwrap_or(0);
    batch
        .iter()
        .map(|s| TokenSequence {
            ids: s.ids[..keep.min(s.len())].to_vec(),
            attention_mask: s.attention_mask[..keep.min(s.len())].to_vec(),
        })
        .collect()
}

impl<T: Scalar> SequenceClassifier<T> {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        let classes = config.num_classes;
        let encoder = EncoderModel::new(config, rng)?;
        let head = ClassifierHead::new(encoder.config().hidden_size, classes, rng);
        Ok(Self { encoder, head })
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.head.params().num_elements()
    }

    /// Logits on `tape` given vars from binding the encoder and head stores.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        encoder_vars: &[Var],
        head_vars: &[Var],
        batch: &[TokenSequence],
    ) -> Result<Var> {
        let hidden = self.encoder.forward(tape, encoder_vars, batch)?;
        let mask: Vec<u8> = batch.iter().flat_map(|s| s.attention_mask.iter().copied()).collect();
        let pooled = PoolingMode::MeanPool.apply(tape, hidden, &mask)?;
        self.head.forward(tape, head_vars, pooled)
    }

    /// Frozen forward pass, `[batch, classes]`.
    pub fn logits(&self, batch: &[TokenSequence]) -> Result<Tensor<T>> {
        let refs: Vec<&TokenSequence> = batch.iter().collect();
        let trimmed = trim_batch(&refs);
        let mut tape = Tape::new();
        let ev = self.encoder.params().bind_frozen(&mut tape);
        let hv = self.head.params().bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &ev, &hv, &trimmed)?;
        Ok(tape.value(out).clone())
    }

    /// Arg-max class per sequence, evaluated in chunks of `batch_size`.
    pub fn predict(&self, seqs: &[TokenSequence], batch_size: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(batch_size.max(1)) {
            let logits = self.logits(chunk)?;
            for i in 0..chunk.len() {
                let row = logits.row(i);
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                out.push(best);
            }
        }
        Ok(out)
    }

    /// Macro F1 of predictions against the examples' labels.
    pub fn evaluate(&self, examples: &[Example], batch_size: usize) -> Result<f64> {
        let seqs: Vec<TokenSequence> = examples.iter().map(|e| e.seq.clone()).collect();
        let gold: Vec<usize> = examples.iter().map(|e| e.label).collect();
        macro_f1(&self.predict(&seqs, batch_size)?, &gold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Patience-based early stopping on a score to maximize. Only a gain
/// strictly larger than `min_delta` counts as improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records the score of `epoch` (1-based).
    pub fn update(&mut self, epoch: usize, score: f64) -> StopDecision {
        // float noise must not turn a gain of exactly min_delta into one
        let improved = score - self.best > self.min_delta + 1e-12;
        if improved {
            self.best = score;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            max_epochs: 30,
            learning_rate: 1e-5,
            batch_size: 32,
            patience: 5,
            min_improvement: 1e-4,
            repeats: 3,
            seed: 42,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.batch_size == 0 || self.patience >= self.max_epochs {
            return Err(Error::InvalidConfig(
                "need repeats ≥ 1, batch size ≥ 1 and patience < max epochs".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn settings(&self) -> TrainSettings {
        TrainSettings {
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            patience: self.patience,
            min_improvement: self.min_improvement,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOutcome {
    pub best_val_f1: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub epochs: Vec<EpochLog>,
    /// `(step, loss)` for every optimizer step.
    pub steps: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub(crate) struct TrainSettings {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub min_improvement: f64,
}

/// Soft targets from a frozen teacher mixed into the hard-label loss as
/// `alpha · KL + (1 − alpha) · CE`.
pub(crate) struct TeacherSignal<'a> {
    pub teacher: &'a SequenceClassifier<f32>,
    pub alpha: f64,
    pub temperature: f64,
}

fn check_labels(examples: &[Example], classes: usize) -> Result<()> {
    match examples.iter().find(|e| e.label >= classes) {
        Some(e) => Err(Error::IndexOutOfRange {
            index: e.label,
            len: classes,
        }),
        None => Ok(()),
    }
}

/// Class-weighted mini-batch training with early stopping on validation
/// macro F1; the best epoch's parameters are restored on return.
pub(crate) fn train_classifier<R: Rng + ?Sized>(
    model: &mut SequenceClassifier<f32>,
    data: &Splits<Example>,
    settings: &TrainSettings,
    teacher: Option<TeacherSignal<'_>>,
    rng: &mut R,
) -> Result<FinetuneOutcome> {
    if settings.batch_size == 0 || settings.max_epochs == 0 {
        return Err(Error::InvalidConfig("batch size and epochs must be positive".into()));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let classes = model.head.num_classes();
    check_labels(&data.train, classes)?;
    check_labels(&data.val, classes)?;
    let train_labels: Vec<usize> = data.train.iter().map(|e| e.label).collect();
    let weights = class_weights(&train_labels);

    let adam_cfg = AdamConfig::with_lr(settings.learning_rate);
    let mut enc_opt = Adam::new(adam_cfg.clone(), model.encoder.params());
    let mut head_opt = Adam::new(adam_cfg, model.head.params());
    let mut stopper = EarlyStopping::new(settings.patience, settings.min_improvement);
    let mut best: Option<(ParamStore<f32>, ParamStore<f32>)> = None;
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=settings.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(settings.batch_size) {
            let refs: Vec<&TokenSequence> = chunk.iter().map(|&i| &data.train[i].seq).collect();
            let batch = trim_batch(&refs);
            let targets: Vec<usize> = chunk.iter().map(|&i| data.train[i].label).collect();
            let sample_w: Vec<f32> = targets.iter().map(|t| weights[t] as f32).collect();

            let mut tape = Tape::new();
            let ev = model.encoder.params().bind(&mut tape);
            let hv = model.head.params().bind(&mut tape);
            let logits = model.forward(&mut tape, &ev, &hv, &batch)?;
            let ce = tape.cross_entropy(logits, &targets, &sample_w)?;
            let loss = match &teacher {
                None => ce,
                Some(sig) => {
                    let t_logits = sig.teacher.logits(&batch)?;
                    let tv = tape.constant(t_logits);
                    let kl = tape.kl_div(tv, logits, sig.temperature as f32)?;
                    let soft = tape.scale(kl, sig.alpha as f32);
                    let hard = tape.scale(ce, (1.0 - sig.alpha) as f32);
                    tape.add(soft, hard)?
                }
            };
            let value = tape.scalar(loss) as f64;
            if !value.is_finite() {
                return Err(Error::Diverged);
            }
            let mut grads = tape.backward(loss);
            let eg: Vec<Option<Vec<f32>>> = ev.iter().map(|&v| grads.take(v)).collect();
            let hg: Vec<Option<Vec<f32>>> = hv.iter().map(|&v| grads.take(v)).collect();
            enc_opt.step(model.encoder.params_mut(), &eg)?;
            head_opt.step(model.head.params_mut(), &hg)?;
            steps.push((steps.len(), value));
            epoch_loss += value;
            batches += 1;
        }
        let val_f1 = model.evaluate(&data.val, settings.batch_size.max(64))?;
        epochs.push(EpochLog {
            epoch,
            train_loss: epoch_loss / batches as f64,
            val_f1,
        });
        let decision = stopper.update(epoch, val_f1);
        if decision.improved {
            best = Some((model.encoder.params().clone(), model.head.params().clone()));
        }
        if decision.stop {
            stopped_early = epoch < settings.max_epochs;
            break;
        }
    }
    if let Some((enc, head)) = best {
        model.encoder.params_mut().copy_from(&enc)?;
        model.head.params_mut().copy_from(&head)?;
    }
    Ok(FinetuneOutcome {
        best_val_f1: stopper.best(),
        best_epoch: stopper.best_epoch(),
        stopped_early,
        epochs,
        steps,
    })
}

/// Supervised fine-tuning with class-weighted cross-entropy. Training order
/// is drawn from `rng`.
pub fn finetune_run<R: Rng + ?Sized>(
    model: &mut SequenceClassifier<f32>,
    data: &Splits<Example>,
    config: &FinetuneConfig,
    rng: &mut R,
) -> Result<FinetuneOutcome> {
    train_classifier(model, data, &config.settings(), None, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_schedule() {
        let mut s = EarlyStopping::new(5, 1e-4);
        let scores = [0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.9];
        let mut stopped_at = None;
        for (i, &f) in scores.iter().enumerate() {
            if s.update(i + 1, f).stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(7));
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn gain_of_exactly_min_delta_is_not_improvement() {
        let mut s = EarlyStopping::new(5, 1e-4);
        s.update(1, 0.5);
        assert!(!s.update(2, 0.5001).improved);
        assert!(s.update(3, 0.50011).improved);
    }

    #[test]
    fn trim_keeps_longest_real_prefix() {
        let a = TokenSequence {
            ids: vec![2, 9, 0, 0],
            attention_mask: vec![1, 1, 0, 0],
        };
        let b = TokenSequence {
            ids: vec![2, 9, 9, 0],
            attention_mask: vec![1, 1, 1, 0],
        };
        let t = trim_batch(&[&a, &b]);
        assert_eq!(t[0].ids, vec![2, 9, 0]);
        assert_eq!(t[1].attention_mask, vec![1, 1, 1]);
    }
}
