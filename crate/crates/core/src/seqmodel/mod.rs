//! The risk classifiers: BiLSTM with multi-hop self-attentive pooling and the
//! unidirectional LSTM baseline, both ending in two fully connected layers and
//! a sigmoid.

mod lstm;
mod model;
mod params;

pub use lstm::{lstm_cell, LstmParams, LstmTrace};
pub use model::{
    attention_penalty, backward, backward_into, forward, forward_baseline, forward_sa, loss, trace_loss, AttentionMap,
    Forward, ForwardTrace, SaTrace,
};
pub use params::{AttentionParams, Hyper, ModelKind, ModelParams};

use crate::codevec::CodeVocab;
use crate::error::{Error, Result};
use crate::records::{CohortSample, Day};

/// Attention of a trained model over one sample, aligned to its records
/// (oldest first, latest last).
#[derive(Debug, Clone)]
pub struct SampleAttention {
    pub individual_id: String,
    pub codes: Vec<String>,
    pub dates: Vec<Day>,
    pub probability: f64,
    pub map: AttentionMap,
}

pub fn attention_of(params: &ModelParams, vocab: &CodeVocab, sample: &CohortSample) -> Result<SampleAttention> {
    if params.kind != ModelKind::Sa {
        return Err(Error::Config("attention maps need the self-attentive model".into()));
    }
    let indices = vocab.encode(&sample.codes);
    let mask = vec![true; indices.len()];
    let out = forward_sa(params, &indices, &mask)?;
    Ok(SampleAttention {
        individual_id: sample.individual_id.clone(),
        codes: sample.codes.clone(),
        dates: sample.record_dates.clone(),
        probability: out.probability,
        map: out.attention.expect("attentive forward returns a map"),
    })
}
