//! Forward passes, loss and exact reverse-mode gradients for both classifiers.
//!
//! Masked positions are dropped before the recurrence: the LSTMs run over the
//! valid positions only and attention is normalised over them, so the content
//! of padded slots cannot reach the output.

use serde::Serialize;

use super::lstm::{self, LstmTrace};
use super::params::{ModelKind, ModelParams};
use crate::codevec::PAD;
use crate::error::{Error, Result};
use crate::matrix::{dot, log_sigmoid, sigmoid, Matrix};
use crate::records::MAX_WINDOW_RECORDS;

/// Multi-hop attention over the input positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionMap {
    /// `r × T`, rows sum to one over valid positions, masked positions 0.
    pub scores: Matrix,
    /// Column-wise mean over hops, length `T`.
    pub aggregate: Vec<f64>,
}

impl AttentionMap {
    pub fn hops(&self) -> usize {
        self.scores.rows
    }

    pub fn len(&self) -> usize {
        self.scores.cols
    }

    pub fn is_empty(&self) -> bool {
        self.scores.cols == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaTrace {
    pub bwd: LstmTrace,
    /// `T × 2u` concatenated hidden states.
    pub h: Matrix,
    /// `T × d_a`, `tanh(Ws1 hₜ)`.
    pub s: Matrix,
    /// `r × T` attention over valid positions.
    pub a: Matrix,
    /// Flattened `r × 2u` pooled matrix.
    pub m: Vec<f64>,
}

/// Everything `backward` needs; replaying it reproduces the forward outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub kind: ModelKind,
    pub padded_len: usize,
    /// Input positions that were unmasked, ascending.
    pub positions: Vec<usize>,
    /// Token indices at those positions.
    pub tokens: Vec<usize>,
    pub fwd: LstmTrace,
    pub sa: Option<SaTrace>,
    /// FC1 output after `tanh`.
    pub fc1: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub probability: f64,
    pub attention: Option<AttentionMap>,
    pub trace: ForwardTrace,
}

fn valid_tokens(params: &ModelParams, indices: &[usize], mask: &[bool]) -> Result<(Vec<usize>, Vec<usize>)> {
    if indices.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} indices but {} mask entries",
            indices.len(),
            mask.len()
        )));
    }
    let v = params.hyper.vocab_size;
    let mut positions = Vec::new();
    let mut tokens = Vec::new();
    for (t, (&i, &keep)) in indices.iter().zip(mask).enumerate() {
        if keep {
            if i >= v {
                return Err(Error::Shape(format!("token {i} outside vocabulary of {v}")));
            }
            positions.push(t);
            tokens.push(i);
        }
    }
    if tokens.is_empty() {
        return Err(Error::AllMasked);
    }
    if tokens.len() > MAX_WINDOW_RECORDS {
        return Err(Error::Shape(format!(
            "{} valid positions exceed {MAX_WINDOW_RECORDS}",
            tokens.len()
        )));
    }
    Ok((positions, tokens))
}

fn head(params: &ModelParams, input: &[f64]) -> (Vec<f64>, f64) {
    let mut a1 = params.fc1_b.data.clone();
    params.fc1_w.gemv_acc(input, &mut a1);
    a1.iter_mut().for_each(|x| *x = x.tanh());
    let logit = params.fc2_b.data[0] + dot(params.fc2_w.row(0), &a1);
    (a1, logit)
}

/// Softmax of each row in place, max-subtracted.
fn softmax_rows(m: &mut Matrix) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
}

/// BiLSTM → self-attentive pooling → FC(tanh) → FC → sigmoid.
pub fn forward_sa(params: &ModelParams, indices: &[usize], mask: &[bool]) -> Result<Forward> {
    let (bwd_p, att) = match (params.kind, &params.bwd, &params.attention) {
        (ModelKind::Sa, Some(b), Some(a)) => (b, a),
        _ => return Err(Error::Shape("forward_sa needs self-attentive parameters".into())),
    };
    let (positions, tokens) = valid_tokens(params, indices, mask)?;
    let t_len = tokens.len();
    let u = params.hyper.hidden;
    let r = params.hyper.hops;
    let da = params.hyper.attn_dim;

    let fwd = lstm::run(&params.fwd, &params.embedding, &tokens, false);
    let bwd = lstm::run(bwd_p, &params.embedding, &tokens, true);
    let mut h = Matrix::zeros(t_len, 2 * u);
    for t in 0..t_len {
        let row = h.row_mut(t);
        row[..u].copy_from_slice(fwd.h_at_position(t));
        row[u..].copy_from_slice(bwd.h_at_position(t));
    }

    let mut s = Matrix::zeros(t_len, da);
    for t in 0..t_len {
        let out = s.row_mut(t);
        att.ws1.gemv_acc(h.row(t), out);
        out.iter_mut().for_each(|x| *x = x.tanh());
    }
    let mut a = Matrix::zeros(r, t_len);
    for j in 0..r {
        let w = att.ws2.row(j);
        for t in 0..t_len {
            a.set(j, t, dot(w, s.row(t)));
        }
    }
    softmax_rows(&mut a);

    let mut m = vec![0.0; r * 2 * u];
    for j in 0..r {
        h.gemv_t_acc(a.row(j), &mut m[j * 2 * u..(j + 1) * 2 * u]);
    }
    let (fc1, logit) = head(params, &m);
    let probability = sigmoid(logit);

    let mut scores = Matrix::zeros(r, indices.len());
    for j in 0..r {
        for (k, &t) in positions.iter().enumerate() {
            scores.set(j, t, a.get(j, k));
        }
    }
    let aggregate = (0..indices.len())
        .map(|t| (0..r).map(|j| scores.get(j, t)).sum::<f64>() / r as f64)
        .collect();

    Ok(Forward {
        probability,
        attention: Some(AttentionMap { scores, aggregate }),
        trace: ForwardTrace {
            kind: ModelKind::Sa,
            padded_len: indices.len(),
            positions,
            tokens,
            fwd,
            sa: Some(SaTrace { bwd, h, s, a, m }),
            fc1,
            logit,
            probability,
        },
    })
}

/// Unidirectional LSTM → last valid hidden state → FC(tanh) → FC → sigmoid.
pub fn forward_baseline(params: &ModelParams, indices: &[usize], mask: &[bool]) -> Result<Forward> {
    if params.kind != ModelKind::Baseline {
        return Err(Error::Shape("forward_baseline needs baseline parameters".into()));
    }
    let (positions, tokens) = valid_tokens(params, indices, mask)?;
    let fwd = lstm::run(&params.fwd, &params.embedding, &tokens, false);
    let (fc1, logit) = head(params, fwd.h_at_step(tokens.len() - 1));
    let probability = sigmoid(logit);
    Ok(Forward {
        probability,
        attention: None,
        trace: ForwardTrace {
            kind: ModelKind::Baseline,
            padded_len: indices.len(),
            positions,
            tokens,
            fwd,
            sa: None,
            fc1,
            logit,
            probability,
        },
    })
}

pub fn forward(params: &ModelParams, indices: &[usize], mask: &[bool]) -> Result<Forward> {
    match params.kind {
        ModelKind::Sa => forward_sa(params, indices, mask),
        ModelKind::Baseline => forward_baseline(params, indices, mask),
    }
}

/// `‖AAᵀ − I‖²_F`.
pub fn attention_penalty(a: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows {
        for j in 0..a.rows {
            let g = dot(a.row(i), a.row(j)) - if i == j { 1.0 } else { 0.0 };
            total += g * g;
        }
    }
    total
}

/// Binary cross-entropy plus the attention penalty.
pub fn loss(probability: f64, label: u8, attention: Option<&AttentionMap>, penalty_coeff: f64) -> f64 {
    let y = f64::from(label);
    let bce = -(y * probability.ln() + (1.0 - y) * (1.0 - probability).ln());
    let penalty = attention.map_or(0.0, |a| attention_penalty(&a.scores));
    bce + penalty_coeff * penalty
}

/// The training loss of a trace, with cross-entropy taken from the logit so
/// it stays finite when the sigmoid saturates.
pub fn trace_loss(trace: &ForwardTrace, label: u8, penalty_coeff: f64) -> f64 {
    let y = f64::from(label);
    let bce = -(y * log_sigmoid(trace.logit) + (1.0 - y) * log_sigmoid(-trace.logit));
    let penalty = trace.sa.as_ref().map_or(0.0, |sa| attention_penalty(&sa.a));
    bce + penalty_coeff * penalty
}

/// Gradient of `weight · trace_loss` w.r.t. every parameter.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, label: u8, weight: f64) -> Result<ModelParams> {
    let mut grad = params.zeros_like();
    backward_into(params, trace, label, weight, &mut grad)?;
    Ok(grad)
}

/// Accumulates the gradient of `weight · trace_loss` into `grad`.
pub fn backward_into(
    params: &ModelParams,
    trace: &ForwardTrace,
    label: u8,
    weight: f64,
    grad: &mut ModelParams,
) -> Result<()> {
    if trace.kind != params.kind || grad.kind != params.kind {
        return Err(Error::Shape(
            "trace, parameters and gradient disagree on model kind".into(),
        ));
    }
    if trace.tokens.iter().any(|&t| t >= params.hyper.vocab_size) || grad.embedding.shape() != params.embedding.shape()
    {
        return Err(Error::Shape("trace does not match parameter shapes".into()));
    }
    let u = params.hyper.hidden;
    let t_len = trace.tokens.len();

    // head
    let dz2 = weight * (trace.probability - f64::from(label));
    grad.fc2_b.data[0] += dz2;
    grad.fc2_w.outer_acc(&[dz2], &trace.fc1);
    let dz1: Vec<f64> = trace
        .fc1
        .iter()
        .zip(params.fc2_w.row(0))
        .map(|(a, w)| dz2 * w * (1.0 - a * a))
        .collect();
    for (g, d) in grad.fc1_b.data.iter_mut().zip(&dz1) {
        *g += d;
    }
    let mut d_in = vec![0.0; params.fc1_w.cols];
    params.fc1_w.gemv_t_acc(&dz1, &mut d_in);

    match (&trace.sa, &params.attention, &params.bwd) {
        (Some(sa), Some(att), Some(bwd_p)) => {
            grad.fc1_w.outer_acc(&dz1, &sa.m);
            let r = params.hyper.hops;
            let da = params.hyper.attn_dim;
            let two_u = 2 * u;

            // M = A H
            let mut d_a = Matrix::zeros(r, t_len);
            let mut d_h = Matrix::zeros(t_len, two_u);
            for j in 0..r {
                let dm = &d_in[j * two_u..(j + 1) * two_u];
                for t in 0..t_len {
                    d_a.set(j, t, dot(dm, sa.h.row(t)));
                    crate::matrix::axpy(sa.a.get(j, t), dm, d_h.row_mut(t));
                }
            }
            // penalty: d‖AAᵀ−I‖² / dA = 4 (AAᵀ − I) A
            let coeff = params.hyper.penalty_coeff;
            if coeff != 0.0 {
                let mut gram = Matrix::zeros(r, r);
                for i in 0..r {
                    for j in 0..r {
                        let g = dot(sa.a.row(i), sa.a.row(j)) - if i == j { 1.0 } else { 0.0 };
                        gram.set(i, j, g);
                    }
                }
                let scale = 4.0 * coeff * weight;
                for i in 0..r {
                    for j in 0..r {
                        let g = scale * gram.get(i, j);
                        if g != 0.0 {
                            let src = sa.a.row(j).to_vec();
                            crate::matrix::axpy(g, &src, d_a.row_mut(i));
                        }
                    }
                }
            }
            // row softmax
            let mut d_logit = Matrix::zeros(r, t_len);
            for j in 0..r {
                let a_row = sa.a.row(j);
                let inner = dot(a_row, d_a.row(j));
                for (t, &a) in a_row.iter().enumerate() {
                    d_logit.set(j, t, a * (d_a.get(j, t) - inner));
                }
            }
            // logits = Ws2 Sᵀ, S = tanh(Ws1 Hᵀ)
            let grad_att = grad.attention.as_mut().expect("attentive gradient");
            let mut ds = vec![0.0; da];
            for t in 0..t_len {
                let col: Vec<f64> = (0..r).map(|j| d_logit.get(j, t)).collect();
                grad_att.ws2.outer_acc(&col, sa.s.row(t));
                ds.fill(0.0);
                att.ws2.gemv_t_acc(&col, &mut ds);
                for (d, s) in ds.iter_mut().zip(sa.s.row(t)) {
                    *d *= 1.0 - s * s;
                }
                grad_att.ws1.outer_acc(&ds, sa.h.row(t));
                att.ws1.gemv_t_acc(&ds, d_h.row_mut(t));
            }

            // split dH into per-direction, per-step gradients
            let mut dh_fwd = vec![0.0; t_len * u];
            let mut dh_bwd = vec![0.0; t_len * u];
            for t in 0..t_len {
                let row = d_h.row(t);
                dh_fwd[t * u..(t + 1) * u].copy_from_slice(&row[..u]);
                let s = t_len - 1 - t;
                dh_bwd[s * u..(s + 1) * u].copy_from_slice(&row[u..]);
            }
            lstm::backward(
                &params.fwd,
                &params.embedding,
                &trace.tokens,
                &trace.fwd,
                &dh_fwd,
                &mut grad.fwd,
                &mut grad.embedding,
            );
            let grad_bwd = grad.bwd.as_mut().expect("attentive gradient");
            lstm::backward(
                bwd_p,
                &params.embedding,
                &trace.tokens,
                &sa.bwd,
                &dh_bwd,
                grad_bwd,
                &mut grad.embedding,
            );
        }
        (None, None, None) => {
            let last = trace.fwd.h_at_step(t_len - 1);
            grad.fc1_w.outer_acc(&dz1, last);
            let mut dh = vec![0.0; t_len * u];
            dh[(t_len - 1) * u..].copy_from_slice(&d_in);
            lstm::backward(
                &params.fwd,
                &params.embedding,
                &trace.tokens,
                &trace.fwd,
                &dh,
                &mut grad.fwd,
                &mut grad.embedding,
            );
        }
        _ => return Err(Error::Shape("trace and parameters disagree on attention".into())),
    }
    grad.embedding.row_mut(PAD).fill(0.0);
    Ok(())
}
