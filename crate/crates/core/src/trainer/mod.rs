//! Cross-validated training: stratified folds, positive oversampling,
//! minibatch Adam with global-norm clipping, and per-fold scoring.

mod experiment;
mod folds;
mod optim;

pub use experiment::{run_experiment, Experiment, FoldResult, RunManifest};
pub use folds::{oversample_positives, stratified_kfold, Fold};
pub use optim::{clip_global_norm, Adam};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::codevec::{CodeVocab, EmbeddingTable, PAD};
use crate::error::{Error, Result};
use crate::records::{CohortSample, ComplicationClass};
use crate::rng::derived;
use crate::seqmodel::{backward_into, forward, trace_loss, Hyper, ModelKind, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub gap_days: u32,
    pub k_folds: usize,
    /// Target positives:negatives ratio in each training split.
    pub oversample_ratio: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// `vocab_size` is taken from the vocabulary at training time.
    pub hyper: Hyper,
    pub freeze_embeddings: bool,
    /// Stop after this many epochs without a lower mean training loss.
    pub patience: Option<usize>,
    /// When set, train a binary model for this class only: positives of the
    /// other classes are dropped from the cohort.
    pub target_class: Option<ComplicationClass>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Sa,
            gap_days: 60,
            k_folds: 5,
            oversample_ratio: 1.0,
            batch_size: 32,
            epochs: 20,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            seed: 1,
            hyper: Hyper::default(),
            freeze_embeddings: false,
            patience: None,
            target_class: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("train: {m}")));
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.oversample_ratio > 0.0 && self.oversample_ratio <= 1.0) {
            return bad(format!(
                "oversample_ratio must lie in (0, 1], got {}",
                self.oversample_ratio
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.epsilon <= 0.0 || self.clip_norm <= 0.0 {
            return bad("epsilon and clip_norm must be positive".into());
        }
        if self.patience == Some(0) {
            return bad("patience must be positive when set".into());
        }
        Ok(())
    }

    /// Model shape for a vocabulary and optional pretrained table.
    pub fn hyper_for(&self, vocab: &CodeVocab, table: Option<&EmbeddingTable>) -> Result<Hyper> {
        let mut h = self.hyper;
        h.vocab_size = vocab.len();
        if let Some(t) = table {
            if t.vocab_size() != vocab.len() || t.dim() != h.embed_dim {
                return Err(Error::Shape(format!(
                    "embedding table is {}×{}, model expects {}×{}",
                    t.vocab_size(),
                    t.dim(),
                    vocab.len(),
                    h.embed_dim
                )));
            }
        }
        h.validate()?;
        Ok(h)
    }
}

/// Applies the label mode: with a target class, positives of other classes
/// leave the cohort.
pub fn select_samples(samples: &[CohortSample], target: Option<ComplicationClass>) -> Vec<CohortSample> {
    match target {
        None => samples.to_vec(),
        Some(c) => samples
            .iter()
            .filter(|s| !s.is_positive() || s.complication_class == Some(c))
            .cloned()
            .collect(),
    }
}

pub fn encode_samples(samples: &[CohortSample], vocab: &CodeVocab) -> Vec<Vec<usize>> {
    samples.iter().map(|s| vocab.encode(&s.codes)).collect()
}

/// Probability of a complication for one encoded window.
pub fn score(params: &ModelParams, tokens: &[usize]) -> Result<f64> {
    Ok(forward(params, tokens, &vec![true; tokens.len()])?.probability)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Mean per-sample training loss of each completed epoch.
    pub loss_history: Vec<f64>,
}

/// Trains one model on the multiset `train` of sample indices.
///
/// Parameters start from `derived(seed, 0)`, epoch shuffles draw from
/// `derived(seed, 1)`. Each batch is padded to its longest window with a
/// mask; the batch loss is the mean per-sample loss.
pub fn train_model(
    config: &TrainConfig,
    samples: &[CohortSample],
    encoded: &[Vec<usize>],
    train: &[usize],
    vocab: &CodeVocab,
    table: Option<&EmbeddingTable>,
    seed: u64,
) -> Result<TrainOutput> {
    config.validate()?;
    if samples.len() != encoded.len() {
        return Err(Error::Shape("encoded windows not aligned with samples".into()));
    }
    if train.is_empty() {
        return Err(Error::Insufficient("empty training split".into()));
    }
    let hyper = config.hyper_for(vocab, table)?;
    let mut params = ModelParams::init(config.model, hyper, table, &mut derived(seed, 0))?;
    let mut shuffle_rng = derived(seed, 1);
    let mut adam = Adam::new(
        &params,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut order = train.to_vec();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut grad = params.zeros_like();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grad.blocks_mut().into_iter().for_each(|(_, m)| m.fill(0.0));
            let width = batch.iter().map(|&i| encoded[i].len()).max().unwrap_or(0);
            let weight = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let mut tokens = encoded[i].clone();
                let mut mask = vec![true; tokens.len()];
                tokens.resize(width, PAD);
                mask.resize(width, false);
                let out = forward(&params, &tokens, &mask)?;
                let label = samples[i].label;
                batch_loss += trace_loss(&out.trace, label, hyper.penalty_coeff);
                backward_into(&params, &out.trace, label, weight, &mut grad)?;
            }
            if !batch_loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {batch_loss} in epoch {epoch}, batch {b}"
                )));
            }
            if config.freeze_embeddings {
                grad.embedding.fill(0.0);
            }
            clip_global_norm(&mut grad, config.clip_norm);
            adam.step(&mut params, &grad)?;
            total += batch_loss;
        }
        let mean = total / order.len() as f64;
        history.push(mean);
        if let Some(p) = config.patience {
            if mean < best {
                best = mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= p {
                    break;
                }
            }
        }
    }
    Ok(TrainOutput {
        params,
        loss_history: history,
    })
}
