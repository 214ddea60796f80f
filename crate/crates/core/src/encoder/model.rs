use rand::Rng;

use super::{truncated_normal, EncoderConfig, INIT_STD};
use crate::corpus::TokenSequence;
use crate::numcore::{ParamId, ParamStore, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
struct LayerParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    attn_norm_g: ParamId,
    attn_norm_b: ParamId,
    w_in: ParamId,
    b_in: ParamId,
    w_out: ParamId,
    b_out: ParamId,
    ffn_norm_g: ParamId,
    ffn_norm_b: ParamId,
}

/// Encoder weights plus the ids needed to find them in the parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel<T> {
    config: EncoderConfig,
    params: ParamStore<T>,
    token: ParamId,
    position: ParamId,
    emb_norm_g: ParamId,
    emb_norm_b: ParamId,
    layers: Vec<LayerParams>,
}

/// Hidden states plus the per-layer attention probabilities
/// `[batch·heads, seq, seq]`.
pub struct EncoderOutput {
    pub hidden: Var,
    pub attention: Vec<Var>,
}

/// Flattened ids and mask of an equal-length batch.
pub(crate) struct BatchInputs {
    pub batch: usize,
    pub seq: usize,
    pub ids: Vec<usize>,
    pub mask: Vec<u8>,
}

pub(crate) fn batch_inputs(batch: &[TokenSequence], max_positions: usize) -> Result<BatchInputs> {
    let first = batch.first().ok_or(Error::EmptySequence)?;
    let seq = first.len();
    if seq > max_positions {
        return Err(Error::SequenceTooLong {
            len: seq,
            max: max_positions,
        });
    }
    let mut ids = Vec::with_capacity(batch.len() * seq);
    let mut mask = Vec::with_capacity(batch.len() * seq);
    for s in batch {
        if s.len() != seq || s.attention_mask.len() != seq {
            return Err(Error::LengthMismatch(s.len(), seq));
        }
        ids.extend(s.ids.iter().map(|&i| i as usize));
        mask.extend_from_slice(&s.attention_mask);
    }
    Ok(BatchInputs {
        batch: batch.len(),
        seq,
        ids,
        mask,
    })
}

impl<T: Scalar> EncoderModel<T> {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (h, i) = (config.hidden_size, config.intermediate_size);
        let mut p = ParamStore::new();
        let mut weight = |p: &mut ParamStore<T>, name: String, shape: &[usize]| p.insert(name, truncated_normal(shape, INIT_STD, rng));
        let token = weight(&mut p, "embeddings.token".into(), &[config.vocab_size, h]);
        let position = weight(&mut p, "embeddings.position".into(), &[config.max_positions, h]);
        let emb_norm_g = p.insert("embeddings.norm.gamma", Tensor::full(&[h], T::one()));
        let emb_norm_b = p.insert("embeddings.norm.beta", Tensor::zeros(&[h]));
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let n = |s: &str| format!("layer{l}.{s}");
            let wq = weight(&mut p, n("attn.q.weight"), &[h, h]);
            let bq = p.insert(n("attn.q.bias"), Tensor::zeros(&[h]));
            let wk = weight(&mut p, n("attn.k.weight"), &[h, h]);
            let bk = p.insert(n("attn.k.bias"), Tensor::zeros(&[h]));
            let wv = weight(&mut p, n("attn.v.weight"), &[h, h]);
            let bv = p.insert(n("attn.v.bias"), Tensor::zeros(&[h]));
            let wo = weight(&mut p, n("attn.out.weight"), &[h, h]);
            let bo = p.insert(n("attn.out.bias"), Tensor::zeros(&[h]));
            let attn_norm_g = p.insert(n("attn.norm.gamma"), Tensor::full(&[h], T::one()));
            let attn_norm_b = p.insert(n("attn.norm.beta"), Tensor::zeros(&[h]));
            let w_in = weight(&mut p, n("ffn.in.weight"), &[h, i]);
            let b_in = p.insert(n("ffn.in.bias"), Tensor::zeros(&[i]));
            let w_out = weight(&mut p, n("ffn.out.weight"), &[i, h]);
            let b_out = p.insert(n("ffn.out.bias"), Tensor::zeros(&[h]));
            let ffn_norm_g = p.insert(n("ffn.norm.gamma"), Tensor::full(&[h], T::one()));
            let ffn_norm_b = p.insert(n("ffn.norm.beta"), Tensor::zeros(&[h]));
            layers.push(LayerParams {
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                attn_norm_g,
                attn_norm_b,
                w_in,
                b_in,
                w_out,
                b_out,
                ffn_norm_g,
                ffn_norm_b,
            });
        }
        Ok(Self {
            config,
            params: p,
            token,
            position,
            emb_norm_g,
            emb_norm_b,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_elements()
    }

    pub fn cast<U: Scalar>(&self) -> EncoderModel<U> {
        EncoderModel {
            config: self.config.clone(),
            params: self.params.cast(),
            token: self.token,
            position: self.position,
            emb_norm_g: self.emb_norm_g,
            emb_norm_b: self.emb_norm_b,
            layers: self.layers.clone(),
        }
    }

    /// Token embeddings `[batch, seq, hidden]` for parameters bound on `tape`
    /// (see [`ParamStore::bind`]).
    pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], batch: &[TokenSequence]) -> Result<Var> {
        self.forward_full(tape, vars, batch).map(|o| o.hidden)
    }

    pub fn forward_full(&self, tape: &mut Tape<T>, vars: &[Var], batch: &[TokenSequence]) -> Result<EncoderOutput> {
        let inputs = batch_inputs(batch, self.config.max_positions)?;
        self.forward_inputs(tape, vars, &inputs)
    }

    pub(crate) fn forward_inputs(&self, tape: &mut Tape<T>, vars: &[Var], inputs: &BatchInputs) -> Result<EncoderOutput> {
        if vars.len() != self.params.len() {
            return Err(Error::LengthMismatch(vars.len(), self.params.len()));
        }
        let v = |id: ParamId| vars[id.index()];
        let c = &self.config;
        let (b, s) = (inputs.batch, inputs.seq);
        let key_mask: Vec<bool> = inputs.mask.iter().map(|&m| m != 0).collect();
        let eps = T::lit(LAYER_NORM_EPS);

        let x = tape.gather(v(self.token), &inputs.ids, &[b, s])?;
        let x = tape.add_positions(x, v(self.position))?;
        let mut x = tape.layer_norm(x, v(self.emb_norm_g), v(self.emb_norm_b), eps)?;

        let scale = T::one() / T::lit(c.head_dim() as f64).sqrt();
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let proj = |tape: &mut Tape<T>, w: ParamId, bias: ParamId, input: Var| -> Result<Var> {
                let y = tape.matmul(input, v(w))?;
                tape.add_bias(y, v(bias))
            };
            let q = proj(tape, layer.wq, layer.bq, x)?;
            let k = proj(tape, layer.wk, layer.bk, x)?;
            let val = proj(tape, layer.wv, layer.bv, x)?;
            let q = tape.split_heads(q, c.num_heads)?;
            let k = tape.split_heads(k, c.num_heads)?;
            let val = tape.split_heads(val, c.num_heads)?;
            let scores = tape.batch_matmul(q, k, true)?;
            let scores = tape.scale(scores, scale);
            let probs = tape.masked_softmax(scores, c.num_heads, key_mask.clone())?;
            attention.push(probs);
            let ctx = tape.batch_matmul(probs, val, false)?;
            let ctx = tape.merge_heads(ctx, c.num_heads)?;
            let attn_out = proj(tape, layer.wo, layer.bo, ctx)?;
            let res = tape.add(x, attn_out)?;
            x = tape.layer_norm(res, v(layer.attn_norm_g), v(layer.attn_norm_b), eps)?;

            let hidden = proj(tape, layer.w_in, layer.b_in, x)?;
            let hidden = tape.gelu(hidden);
            let ffn_out = proj(tape, layer.w_out, layer.b_out, hidden)?;
            let res = tape.add(x, ffn_out)?;
            x = tape.layer_norm(res, v(layer.ffn_norm_g), v(layer.ffn_norm_b), eps)?;
        }
        Ok(EncoderOutput { hidden: x, attention })
    }

    /// Frozen forward pass returning token embeddings `[batch, seq, hidden]`.
    pub fn embed(&self, batch: &[TokenSequence]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &vars, batch)?;
        Ok(tape.value(out).clone())
    }
}
