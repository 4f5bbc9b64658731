//! Autoregressive decoding with cached self-attention keys and values.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::forward::{join_decoder_only, separator_position, Forward, LayerCache, Memory};
use super::params::{Model, ModelParameters};
use super::{ModelError, Variant};
use crate::numerics::{kernels, Eager, Tensor};
use crate::tokenizer::{Special, TokenId};

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated ids, ending in `</s>` when `finished`.
    pub tokens: Vec<TokenId>,
    /// Cumulative log-probability.
    pub log_prob: f64,
    /// `log_prob / len^α`.
    pub score: f64,
    pub finished: bool,
}

impl Hypothesis {
    fn new(tokens: Vec<TokenId>, log_prob: f64, finished: bool, length_penalty: f64) -> Self {
        let score = if tokens.is_empty() {
            log_prob
        } else {
            log_prob / libm::pow(tokens.len() as f64, length_penalty)
        };
        Hypothesis {
            tokens,
            log_prob,
            score,
            finished,
        }
    }

    /// Generated ids without the closing `</s>`.
    pub fn patch(&self) -> &[TokenId] {
        match self.tokens.split_last() {
            Some((&last, rest)) if self.finished && last == Special::Eos.id() => rest,
            _ => &self.tokens,
        }
    }
}

#[derive(Clone)]
struct State {
    cache: Vec<LayerCache<Rc<Tensor>>>,
    next_pos: usize,
    log_probs: Vec<f64>,
}

/// A model with its parameters bound once for repeated eager decoding.
pub struct Inference<'m> {
    model: &'m Model,
    params: Vec<Rc<Tensor>>,
}

impl<'m> Inference<'m> {
    pub fn new(model: &'m Model, params: &ModelParameters) -> Self {
        let params = model.bind(&mut Eager, params);
        Inference { model, params }
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    fn run<T>(&self, f: impl FnOnce(&mut Forward<'_, Eager>) -> Result<T, ModelError>) -> Result<T, ModelError> {
        let mut ops = Eager;
        let mut fwd = Forward::new(self.model, &mut ops, &self.params);
        f(&mut fwd)
    }

    fn feed(&self, ids: &[TokenId], prev: Option<&State>, memory: Option<&Memory<Rc<Tensor>>>) -> Result<State, ModelError> {
        let start = prev.map_or(0, |s| s.next_pos);
        let (logits, cache) = self.run(|f| f.causal(ids, start, prev.map(|s| s.cache.as_slice()), memory, true))?;
        Ok(State {
            cache,
            next_pos: start + ids.len(),
            log_probs: kernels::log_softmax_row(logits.data()),
        })
    }

    fn start<S: AsRef<[TokenId]>>(&self, segments: &[S]) -> Result<(Option<Memory<Rc<Tensor>>>, State), ModelError> {
        if self.model.config.variant == Variant::DecoderOnly {
            if segments.len() != 1 {
                return Err(ModelError::ModalityCount {
                    expected: 1,
                    found: segments.len(),
                });
            }
            let prompt = join_decoder_only(segments[0].as_ref(), &[Special::Bos.id()]);
            separator_position(&prompt)?;
            Ok((None, self.feed(&prompt, None, None)?))
        } else {
            let memory = self.run(|f| f.encode(segments))?;
            let state = self.feed(&[Special::Bos.id()], None, Some(&memory))?;
            Ok((Some(memory), state))
        }
    }

    fn step_limit(&self, state: &State, max_len: usize) -> usize {
        max_len.min(self.model.config.max_len + 1 - state.next_pos)
    }

    /// Most probable token at every step (lowest id on ties) until `</s>`
    /// or `max_len` tokens.
    pub fn greedy<S: AsRef<[TokenId]>>(&self, segments: &[S], max_len: usize) -> Result<Hypothesis, ModelError> {
        let (memory, mut state) = self.start(segments)?;
        let limit = self.step_limit(&state, max_len);
        let mut tokens = Vec::new();
        let mut log_prob = 0.0;
        for step in 0..limit {
            let mut best = 0;
            for (v, &lp) in state.log_probs.iter().enumerate() {
                if lp > state.log_probs[best] {
                    best = v;
                }
            }
            let token = best as TokenId;
            tokens.push(token);
            log_prob += state.log_probs[best];
            if token == Special::Eos.id() {
                return Ok(Hypothesis::new(tokens, log_prob, true, 1.0));
            }
            if step + 1 < limit {
                state = self.feed(&[token], Some(&state), memory.as_ref())?;
            }
        }
        Ok(Hypothesis::new(tokens, log_prob, false, 1.0))
    }

    /// Beam search. Each step expands every live hypothesis over the whole
    /// vocabulary and keeps the `beam` best by cumulative log-probability;
    /// those ending in `</s>` retire to the result pool. Results are ranked
    /// by `log_prob / len^length_penalty`, best first.
    pub fn beam_search<S: AsRef<[TokenId]>>(
        &self,
        segments: &[S],
        beam: usize,
        max_len: usize,
        length_penalty: f64,
    ) -> Result<Vec<Hypothesis>, ModelError> {
        if beam == 0 {
            return Err(ModelError::BeamSize);
        }
        let (memory, state) = self.start(segments)?;
        let limit = self.step_limit(&state, max_len);
        let mut live: Vec<(Vec<TokenId>, f64, State)> = vec![(Vec::new(), 0.0, state)];
        let mut pool: Vec<Hypothesis> = Vec::new();
        for step in 0..limit {
            // (cumulative, step log-prob, token, parent)
            let mut cands: Vec<(f64, f64, TokenId, usize)> = Vec::with_capacity(live.len() * self.model.config.vocab_size);
            for (p, (_, lp, st)) in live.iter().enumerate() {
                for (v, &l) in st.log_probs.iter().enumerate() {
                    cands.push((lp + l, l, v as TokenId, p));
                }
            }
            // Ties go to the earlier parent, then the larger step log-prob,
            // then the lower id; with one parent this is the greedy choice.
            cands.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then(a.3.cmp(&b.3))
                    .then(b.1.total_cmp(&a.1))
                    .then(a.2.cmp(&b.2))
            });
            cands.truncate(beam);
            let mut next = Vec::with_capacity(cands.len());
            for (lp, _, token, parent) in cands {
                let mut tokens = live[parent].0.clone();
                tokens.push(token);
                if token == Special::Eos.id() {
                    pool.push(Hypothesis::new(tokens, lp, true, length_penalty));
                } else if step + 1 == limit {
                    pool.push(Hypothesis::new(tokens, lp, false, length_penalty));
                } else {
                    let st = self.feed(&[token], Some(&live[parent].2), memory.as_ref())?;
                    next.push((tokens, lp, st));
                }
            }
            live = next;
            if live.is_empty() || self.settled(&pool, &live, beam, limit, length_penalty) {
                break;
            }
        }
        if limit == 0 {
            pool.push(Hypothesis::new(Vec::new(), 0.0, false, length_penalty));
        }
        pool.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.log_prob.total_cmp(&a.log_prob))
                .then(a.tokens.cmp(&b.tokens))
        });
        pool.truncate(beam);
        Ok(pool)
    }

    /// True once no live hypothesis can still enter the top `beam` of the
    /// pool: log-probabilities only fall as tokens are appended, so a live
    /// score can at best reach `log_prob / limit^α`.
    fn settled(&self, pool: &[Hypothesis], live: &[(Vec<TokenId>, f64, State)], beam: usize, limit: usize, alpha: f64) -> bool {
        if pool.len() < beam {
            return false;
        }
        let mut scores: Vec<f64> = pool.iter().map(|h| h.score).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        let cutoff = scores[beam - 1];
        let denom = libm::pow(limit as f64, alpha);
        live.iter().all(|(_, lp, _)| lp / denom < cutoff)
    }
}
