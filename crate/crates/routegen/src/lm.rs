//! Recurrent language model used to rank candidate surface forms by
//! perplexity, and to flag candidates whose perplexity exceeds a threshold.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Adam, Gradients, LstmStack, NodeId, OptimError, ParamStore, Tape};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bos: usize,
    pub eos: usize,
}

impl LmConfig {
    pub fn new(vocab_size: usize, bos: usize, eos: usize) -> Self {
        LmConfig {
            vocab_size,
            embed: 128,
            hidden: 128,
            layers: 2,
            bos,
            eos,
        }
    }
}

pub struct LanguageModel {
    pub store: ParamStore,
    pub config: LmConfig,
    stack: LstmStack,
}

/// Result of ranking one candidate list.
#[derive(Debug, Clone)]
pub struct RankedCandidate {
    pub index: usize,
    pub perplexity: f64,
    /// True when the perplexity exceeds the fluency threshold; the caller
    /// still receives the candidate, just marked.
    pub above_threshold: bool,
}

impl LanguageModel {
    pub fn new(config: LmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.add_matrix("embed", config.vocab_size, config.embed, &mut rng);
        let stack = LstmStack::register("lm", config.embed, config.hidden, config.layers, &mut store, &mut rng);
        store.add_matrix("out.w", config.vocab_size, config.hidden, &mut rng);
        store.add_zero_vector("out.b", config.vocab_size);
        LanguageModel { store, config, stack }
    }

    pub fn from_parts(config: LmConfig, store: ParamStore) -> Self {
        let stack = LstmStack::attach("lm", config.embed, config.hidden, config.layers);
        LanguageModel { store, config, stack }
    }

    /// Mean per-token cross entropy of a sentence, EOS step included.
    pub fn loss_on(&self, tape: &mut Tape, tokens: &[usize]) -> NodeId {
        let mut states = self.stack.zero_state(tape);
        let mut prev = self.config.bos;
        let mut nlls = Vec::with_capacity(tokens.len() + 1);
        for t in 0..=tokens.len() {
            let target = if t < tokens.len() { tokens[t] } else { self.config.eos };
            assert!(target < self.config.vocab_size);
            let x = tape.row("embed", prev);
            states = self.stack.step(tape, x, &states);
            let proj = tape.matvec("out.w", states.last().unwrap().h);
            let b = tape.param("out.b");
            let logits = tape.add(proj, b);
            nlls.push(tape.nll_from_logits(logits, target));
            prev = target;
        }
        let total = tape.sum_all(nlls);
        tape.scale_const(total, 1.0 / (tokens.len() + 1) as f64)
    }

    pub fn train(
        &mut self,
        data: &[Vec<usize>],
        epochs: usize,
        lr: f64,
        batch: usize,
        seed: u64,
    ) -> Result<Vec<f64>, OptimError> {
        assert!(!data.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut opt = Adam::new(&self.store, lr);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch.max(1)) {
                let mut acc = Gradients::zeros(&self.store);
                for &i in chunk {
                    let mut tape = Tape::new(&self.store);
                    let loss = self.loss_on(&mut tape, &data[i]);
                    epoch_loss += tape.scalar(loss);
                    acc.add_assign(&tape.backward(loss));
                }
                acc.scale(1.0 / chunk.len() as f64);
                opt.step(&mut self.store, &mut acc)?;
            }
            losses.push(epoch_loss / data.len() as f64);
        }
        Ok(losses)
    }

    /// exp of the mean per-token cross entropy (EOS included).
    pub fn perplexity(&self, tokens: &[usize]) -> f64 {
        let mut tape = Tape::new(&self.store);
        let loss = self.loss_on(&mut tape, tokens);
        tape.scalar(loss).exp()
    }

    /// Rank candidates by ascending perplexity. Stable: equal perplexities
    /// keep input order. `threshold` marks disfluent survivors.
    pub fn rank(&self, candidates: &[Vec<usize>], threshold: f64) -> Vec<RankedCandidate> {
        let mut ranked: Vec<RankedCandidate> = candidates
            .iter()
            .enumerate()
            .map(|(index, tokens)| {
                let perplexity = self.perplexity(tokens);
                RankedCandidate {
                    index,
                    perplexity,
                    above_threshold: perplexity > threshold,
                }
            })
            .collect();
        ranked.sort_by(|a, b| {
            a.perplexity
                .partial_cmp(&b.perplexity)
                .unwrap()
                .then(a.index.cmp(&b.index))
        });
        ranked
    }

    /// The best candidate under the model, or None for an empty list.
    pub fn best<'a>(&self, candidates: &'a [Vec<usize>], threshold: f64) -> Option<(&'a [usize], RankedCandidate)> {
        let ranked = self.rank(candidates, threshold);
        let top = ranked.into_iter().next()?;
        Some((&candidates[top.index], top))
    }
}

/// Join per-segment sentences into one instruction paragraph.
pub fn sequence_instruction(sentences: &[String]) -> String {
    sentences
        .iter()
        .filter(|s| !s.is_empty())
        .cloned()
        .collect::<Vec<_>>()
        .join(". ")
}
