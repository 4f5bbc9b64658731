//! Forward passes, written once against [`Ops`] so the same code runs on
//! the tape for training and eagerly for decoding.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Attention, Linear, Model, Norm};
use super::{ModelError, Seq2Seq, Variant};
use crate::numerics::{Ops, Tensor};
use crate::tokenizer::{Special, TokenId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    Encoder { stack: usize },
    /// Causal self-attention (decoder or decoder-only stack).
    CausalSelf,
    Cross,
}

/// One head's attention weights, `queries × keys`.
#[derive(Clone, Debug)]
pub struct AttentionMap {
    pub kind: AttentionKind,
    pub layer: usize,
    pub head: usize,
    pub weights: Tensor,
}

/// Collects attention weights during a forward pass.
#[derive(Clone, Debug, Default)]
pub struct Probe {
    pub maps: Vec<AttentionMap>,
}

/// Encoder output prepared for cross-attention.
#[derive(Clone, Debug)]
pub struct Memory<V> {
    /// Concatenated encoder representations, `positions × d`.
    pub reps: V,
    /// Positions contributed by each input segment (0 for empty ones).
    pub lengths: Vec<usize>,
    /// True for padded key positions.
    pub pad: Vec<bool>,
    /// Cross-attention keys and values per decoder layer.
    keys: Vec<V>,
    values: Vec<V>,
}

/// Self-attention keys and values of every position processed so far.
#[derive(Clone, Debug)]
pub struct LayerCache<V> {
    pub k: V,
    pub v: V,
}

pub struct Forward<'a, O: Ops> {
    ops: &'a mut O,
    params: &'a [O::Value],
    model: &'a Model,
    dropout: Option<&'a mut ChaCha8Rng>,
    probe: Option<&'a mut Probe>,
}

impl<'a, O: Ops> Forward<'a, O> {
    /// `params` come from [`Model::bind`].
    pub fn new(model: &'a Model, ops: &'a mut O, params: &'a [O::Value]) -> Self {
        Forward {
            ops,
            params,
            model,
            dropout: None,
            probe: None,
        }
    }

    /// Enables dropout at the configured rate, drawing masks from `rng`.
    pub fn with_dropout(mut self, rng: &'a mut ChaCha8Rng) -> Self {
        self.dropout = Some(rng);
        self
    }

    pub fn with_probe(mut self, probe: &'a mut Probe) -> Self {
        self.probe = Some(probe);
        self
    }

    pub fn ops(&mut self) -> &mut O {
        self.ops
    }

    fn linear(&mut self, x: &O::Value, l: Linear) -> Result<O::Value, ModelError> {
        let y = self.ops.matmul(x, &self.params[l.weight])?;
        Ok(self.ops.add_row(&y, &self.params[l.bias])?)
    }

    fn norm(&mut self, x: &O::Value, n: Norm) -> Result<O::Value, ModelError> {
        Ok(self.ops.layer_norm(x, &self.params[n.gamma], &self.params[n.beta])?)
    }

    fn dropout(&mut self, x: O::Value) -> Result<O::Value, ModelError> {
        let rate = self.model.config.dropout;
        let Some(rng) = self.dropout.as_deref_mut() else {
            return Ok(x);
        };
        if rate == 0.0 {
            return Ok(x);
        }
        let shape = self.ops.value(&x).shape().to_vec();
        let keep = 1.0 / (1.0 - rate);
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
        let mask = self.ops.constant(Tensor::new(shape, mask)?);
        Ok(self.ops.mul(&x, &mask)?)
    }

    fn embed(&mut self, ids: &[TokenId], start: usize) -> Result<O::Value, ModelError> {
        let c = &self.model.config;
        if start + ids.len() > c.max_len {
            return Err(ModelError::TooLong {
                len: start + ids.len(),
                max: c.max_len,
            });
        }
        let mut idx = Vec::with_capacity(ids.len());
        for &id in ids {
            if id as usize >= c.vocab_size {
                return Err(ModelError::TokenOutOfRange { id, vocab: c.vocab_size });
            }
            idx.push(id as usize);
        }
        let d = c.d_model;
        let e = self.ops.embedding(&self.params[self.model.layout.embed], &idx)?;
        let mut x = self.ops.scale(&e, libm::sqrt(d as f64));
        if c.positional {
            let rows = self.model.positions[start * d..(start + ids.len()) * d].to_vec();
            let pe = self.ops.constant(Tensor::matrix(ids.len(), d, rows)?);
            x = self.ops.add(&x, &pe)?;
        }
        self.dropout(x)
    }

    /// Scaled dot-product attention over already projected `q`, `k`, `v`,
    /// followed by the output projection. `mask` is `queries × keys`, true
    /// where attention is forbidden.
    #[allow(clippy::too_many_arguments)]
    fn attend(
        &mut self,
        q: &O::Value,
        k: &O::Value,
        v: &O::Value,
        mask: Option<&[bool]>,
        out: Linear,
        kind: AttentionKind,
        layer: usize,
    ) -> Result<O::Value, ModelError> {
        let c = &self.model.config;
        let (heads, dh) = (c.heads, c.head_dim());
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut contexts = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q.clone(), k.clone(), v.clone())
            } else {
                let (s, e) = (h * dh, (h + 1) * dh);
                (
                    self.ops.slice(q, 1, s, e)?,
                    self.ops.slice(k, 1, s, e)?,
                    self.ops.slice(v, 1, s, e)?,
                )
            };
            let scores = self.ops.matmul_nt(&qh, &kh)?;
            let mut scores = self.ops.scale(&scores, scale);
            if let Some(mask) = mask {
                scores = self.ops.masked_fill(&scores, mask, f64::NEG_INFINITY)?;
            }
            let weights = self.ops.softmax(&scores, 1)?;
            if let Some(probe) = self.probe.as_deref_mut() {
                probe.maps.push(AttentionMap {
                    kind,
                    layer,
                    head: h,
                    weights: self.ops.value(&weights).clone(),
                });
            }
            contexts.push(self.ops.matmul(&weights, &vh)?);
        }
        let ctx = if heads == 1 {
            contexts.pop().expect("one head")
        } else {
            self.ops.concat(&contexts, 1)?
        };
        self.linear(&ctx, out)
    }

    fn self_attention(
        &mut self,
        h: &O::Value,
        a: Attention,
        mask: Option<&[bool]>,
        kind: AttentionKind,
        layer: usize,
    ) -> Result<O::Value, ModelError> {
        let q = self.linear(h, a.q)?;
        let k = self.linear(h, a.k)?;
        let v = self.linear(h, a.v)?;
        self.attend(&q, &k, &v, mask, a.o, kind, layer)
    }

    fn feed_forward(&mut self, x: &O::Value, ln: Norm, f: super::params::FeedForward) -> Result<O::Value, ModelError> {
        let h = self.norm(x, ln)?;
        let inner = self.linear(&h, f.inner)?;
        let act = self.ops.activation(&inner, self.model.config.activation);
        let y = self.linear(&act, f.outer)?;
        let y = self.dropout(y)?;
        Ok(self.ops.add(x, &y)?)
    }

    /// Runs encoder stack `stack` over `ids`; returns `len × d`
    /// representations. Inputs longer than `max_len` lose their tail.
    pub fn encoder_stack(&mut self, stack: usize, ids: &[TokenId], pad: Option<&[bool]>) -> Result<O::Value, ModelError> {
        let max = self.model.config.max_len;
        let ids = if ids.len() > max {
            log::warn!("encoder input of {} tokens truncated to {max}", ids.len());
            &ids[..max]
        } else {
            ids
        };
        if ids.is_empty() {
            return Err(ModelError::EmptySource);
        }
        let n = ids.len();
        let mask: Option<Vec<bool>> = pad
            .map(|p| &p[..n.min(p.len())])
            .filter(|p| p.iter().any(|&b| b))
            .map(|p| (0..n * n).map(|i| p.get(i % n).copied().unwrap_or(false)).collect());
        let stack_layout = &self.model.layout.encoders[stack];
        let layers = stack_layout.layers.clone();
        let final_norm = stack_layout.norm;
        let mut x = self.embed(ids, 0)?;
        for (l, layer) in layers.iter().enumerate() {
            let h = self.norm(&x, layer.ln1)?;
            let a = self.self_attention(&h, layer.attn, mask.as_deref(), AttentionKind::Encoder { stack }, l)?;
            let a = self.dropout(a)?;
            x = self.ops.add(&x, &a)?;
            x = self.feed_forward(&x, layer.ln2, layer.ffn)?;
        }
        self.norm(&x, final_norm)
    }

    /// Encodes the input segments: one joined sequence for the single
    /// encoder, one sequence per modality (each through its own stack,
    /// outputs concatenated by position) for the multi-encoder.
    pub fn encode<S: AsRef<[TokenId]>>(&mut self, segments: &[S]) -> Result<Memory<O::Value>, ModelError> {
        self.encode_padded(segments, &[])
    }

    /// Like [`Forward::encode`], with an optional pad mask per segment.
    pub fn encode_padded<S: AsRef<[TokenId]>>(
        &mut self,
        segments: &[S],
        pads: &[Vec<bool>],
    ) -> Result<Memory<O::Value>, ModelError> {
        let c = &self.model.config;
        if c.variant == Variant::DecoderOnly {
            return Err(ModelError::InvalidConfig("the decoder-only variant has no encoder"));
        }
        let expected = c.encoder_stacks();
        if segments.len() != expected {
            return Err(ModelError::ModalityCount {
                expected,
                found: segments.len(),
            });
        }
        let mut parts = Vec::with_capacity(segments.len());
        let mut lengths = Vec::with_capacity(segments.len());
        let mut pad = Vec::new();
        for (k, seg) in segments.iter().enumerate() {
            let ids = seg.as_ref();
            let ids = &ids[..ids.len().min(self.model.config.max_len)];
            if ids.is_empty() {
                lengths.push(0);
                continue;
            }
            let p = pads.get(k).map(Vec::as_slice);
            parts.push(self.encoder_stack(k, ids, p)?);
            lengths.push(ids.len());
            pad.extend((0..ids.len()).map(|i| p.and_then(|p| p.get(i)).copied().unwrap_or(false)));
        }
        let reps = match parts.len() {
            0 => return Err(ModelError::EmptySource),
            1 => parts.pop().expect("one part"),
            _ => self.ops.concat(&parts, 0)?,
        };
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for layer in self.model.layout.decoder.clone() {
            let (_, cross) = layer.cross.expect("encoder-decoder layers have cross-attention");
            keys.push(self.linear(&reps, cross.k)?);
            values.push(self.linear(&reps, cross.v)?);
        }
        Ok(Memory {
            reps,
            lengths,
            pad,
            keys,
            values,
        })
    }

    /// Causal stack over `ids`, which occupy positions `start..` and follow
    /// the positions held in `cache`. Returns logits for every new position
    /// (or only the last when `last_only`) and the extended cache.
    pub fn causal(
        &mut self,
        ids: &[TokenId],
        start: usize,
        cache: Option<&[LayerCache<O::Value>]>,
        memory: Option<&Memory<O::Value>>,
        last_only: bool,
    ) -> Result<(O::Value, Vec<LayerCache<O::Value>>), ModelError> {
        let t = ids.len();
        if t == 0 {
            return Err(ModelError::EmptySource);
        }
        let total = start + t;
        let self_mask: Option<Vec<bool>> = (t > 1).then(|| {
            (0..t * total)
                .map(|idx| idx % total > start + idx / total)
                .collect()
        });
        let cross_mask: Option<Vec<bool>> = memory
            .filter(|m| m.pad.iter().any(|&b| b))
            .map(|m| (0..t).flat_map(|_| m.pad.iter().copied()).collect());

        let layers = self.model.layout.decoder.clone();
        let mut x = self.embed(ids, start)?;
        let mut new_cache = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate() {
            let h = self.norm(&x, layer.ln1)?;
            let a = layer.self_attn;
            let q = self.linear(&h, a.q)?;
            let k = self.linear(&h, a.k)?;
            let v = self.linear(&h, a.v)?;
            let (k, v) = match cache {
                Some(c) => (
                    self.ops.concat(&[c[l].k.clone(), k], 0)?,
                    self.ops.concat(&[c[l].v.clone(), v], 0)?,
                ),
                None => (k, v),
            };
            let y = self.attend(&q, &k, &v, self_mask.as_deref(), a.o, AttentionKind::CausalSelf, l)?;
            let y = self.dropout(y)?;
            x = self.ops.add(&x, &y)?;
            if let Some((ln2, cross)) = layer.cross {
                let mem = memory.ok_or(ModelError::InvalidConfig("encoder-decoder decoding needs encoder memory"))?;
                let h = self.norm(&x, ln2)?;
                let q = self.linear(&h, cross.q)?;
                let y = self.attend(
                    &q,
                    &mem.keys[l],
                    &mem.values[l],
                    cross_mask.as_deref(),
                    cross.o,
                    AttentionKind::Cross,
                    l,
                )?;
                let y = self.dropout(y)?;
                x = self.ops.add(&x, &y)?;
            }
            x = self.feed_forward(&x, layer.ln3, layer.ffn)?;
            new_cache.push(LayerCache { k, v });
        }
        if last_only && t > 1 {
            x = self.ops.slice(&x, 0, t - 1, t)?;
        }
        let h = self.norm(&x, self.model.layout.decoder_norm)?;
        let logits = self.ops.matmul_nt(&h, &self.params[self.model.layout.embed])?;
        let logits = self.ops.add_row(&logits, &self.params[self.model.layout.output_bias])?;
        Ok((logits, new_cache))
    }

    /// Decoder logits (`prefix × V`) for a prefix starting with `<s>`.
    pub fn decoder_forward(&mut self, prefix: &[TokenId], memory: &Memory<O::Value>) -> Result<O::Value, ModelError> {
        if prefix.first() != Some(&Special::Bos.id()) {
            return Err(ModelError::PrefixStart);
        }
        Ok(self.causal(prefix, 0, None, Some(memory), false)?.0)
    }

    /// Logits of the decoder-only stack over `input <SEP> output-prefix`.
    pub fn decoder_only_forward(&mut self, joined: &[TokenId]) -> Result<O::Value, ModelError> {
        separator_position(joined)?;
        Ok(self.causal(joined, 0, None, None, false)?.0)
    }

    /// Teacher-forced label-smoothed loss of one pair, averaged over its
    /// supervised positions; also returns how many positions that is.
    pub fn loss(&mut self, pair: &Seq2Seq, epsilon: f64) -> Result<(O::Value, usize), ModelError> {
        let target = &pair.target;
        if target.len() < 2 || target[0] != Special::Bos.id() {
            return Err(ModelError::MalformedTarget);
        }
        let pad = Special::Pad.id() as usize;
        let (logits, labels) = if self.model.config.variant == Variant::DecoderOnly {
            if pair.segments.len() != 1 {
                return Err(ModelError::ModalityCount {
                    expected: 1,
                    found: pair.segments.len(),
                });
            }
            let joined = join_decoder_only(&pair.segments[0], target);
            let sep = separator_position(&joined)?;
            let logits = self.decoder_only_forward(&joined[..joined.len() - 1])?;
            let labels: Vec<usize> = (0..joined.len() - 1)
                .map(|i| if i > sep { joined[i + 1] as usize } else { pad })
                .collect();
            (logits, labels)
        } else {
            let memory = self.encode(&pair.segments)?;
            let logits = self.decoder_forward(&target[..target.len() - 1], &memory)?;
            (logits, target[1..].iter().map(|&t| t as usize).collect())
        };
        let supervised = target.len() - 1;
        let loss = self.ops.label_smoothed_ce(&logits, &labels, epsilon, pad)?;
        Ok((loss, supervised))
    }
}

/// `input <SEP> target`.
pub(crate) fn join_decoder_only(input: &[TokenId], target: &[TokenId]) -> Vec<TokenId> {
    let mut joined = Vec::with_capacity(input.len() + 1 + target.len());
    joined.extend_from_slice(input);
    joined.push(Special::Sep.id());
    joined.extend_from_slice(target);
    joined
}

pub(crate) fn separator_position(joined: &[TokenId]) -> Result<usize, ModelError> {
    let seps: Vec<usize> = joined
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == Special::Sep.id())
        .map(|(i, _)| i)
        .collect();
    match seps.as_slice() {
        [one] => Ok(*one),
        _ => Err(ModelError::Separator { found: seps.len() }),
    }
}
