//! LSTM cell and one-direction sequence pass with exact backpropagation
//! through time. Gate order inside the stacked weights is `i, f, g, o`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sigmoid, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `4u × d` input weights.
    pub w: Matrix,
    /// `4u × u` recurrent weights.
    pub u: Matrix,
    /// `4u × 1` bias.
    pub b: Matrix,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w: Matrix::zeros(4 * hidden, input),
            u: Matrix::zeros(4 * hidden, hidden),
            b: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols
    }

    pub fn input(&self) -> usize {
        self.w.cols
    }
}

/// Writes post-activation gates `[i, f, g, o]` into `gates` and the new
/// states into `c` and `h`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c: &mut [f64],
    tc: &mut [f64],
    h: &mut [f64],
) {
    let u = p.hidden();
    gates.copy_from_slice(&p.b.data);
    p.w.gemv_acc(x, gates);
    p.u.gemv_acc(h_prev, gates);
    for k in 0..u {
        let i = sigmoid(gates[k]);
        let f = sigmoid(gates[u + k]);
        let g = gates[2 * u + k].tanh();
        let o = sigmoid(gates[3 * u + k]);
        gates[k] = i;
        gates[u + k] = f;
        gates[2 * u + k] = g;
        gates[3 * u + k] = o;
        c[k] = f * c_prev[k] + i * g;
        tc[k] = c[k].tanh();
        h[k] = o * tc[k];
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = params.hidden();
    if x.len() != params.input() || h_prev.len() != u || c_prev.len() != u {
        return Err(Error::Shape(format!(
            "lstm_cell expects x[{}], h[{u}], c[{u}]",
            params.input()
        )));
    }
    if !x.iter().chain(h_prev).chain(c_prev).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("lstm_cell input".into()));
    }
    let mut gates = vec![0.0; 4 * u];
    let (mut c, mut tc, mut h) = (vec![0.0; u], vec![0.0; u], vec![0.0; u]);
    step(params, x, h_prev, c_prev, &mut gates, &mut c, &mut tc, &mut h);
    Ok((h, c))
}

/// Cached activations of one direction, indexed by processing step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub reverse: bool,
    pub steps: usize,
    pub hidden: usize,
    /// `steps × 4u` post-activation gates.
    pub gates: Vec<f64>,
    /// `steps × u` cell states, `tanh` of them, and hidden states.
    pub c: Vec<f64>,
    pub tc: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmTrace {
    /// Position in the input sequence handled at processing step `s`.
    pub fn position(&self, s: usize) -> usize {
        if self.reverse {
            self.steps - 1 - s
        } else {
            s
        }
    }

    pub fn h_at_step(&self, s: usize) -> &[f64] {
        &self.h[s * self.hidden..(s + 1) * self.hidden]
    }

    /// Hidden state aligned to input position `t`.
    pub fn h_at_position(&self, t: usize) -> &[f64] {
        let s = if self.reverse { self.steps - 1 - t } else { t };
        self.h_at_step(s)
    }
}

/// Runs the LSTM over `tokens` (embedding row indices), forwards or reversed,
/// from zero initial state.
pub fn run(p: &LstmParams, embedding: &Matrix, tokens: &[usize], reverse: bool) -> LstmTrace {
    let u = p.hidden();
    let n = tokens.len();
    let mut tr = LstmTrace {
        reverse,
        steps: n,
        hidden: u,
        gates: vec![0.0; n * 4 * u],
        c: vec![0.0; n * u],
        tc: vec![0.0; n * u],
        h: vec![0.0; n * u],
    };
    let zeros = vec![0.0; u];
    for s in 0..n {
        let x = embedding.row(tokens[if reverse { n - 1 - s } else { s }]);
        let (head_h, tail_h) = tr.h.split_at_mut(s * u);
        let (head_c, tail_c) = tr.c.split_at_mut(s * u);
        let h_prev = if s == 0 { &zeros[..] } else { &head_h[(s - 1) * u..] };
        let c_prev = if s == 0 { &zeros[..] } else { &head_c[(s - 1) * u..] };
        step(
            p,
            x,
            h_prev,
            c_prev,
            &mut tr.gates[s * 4 * u..(s + 1) * 4 * u],
            &mut tail_c[..u],
            &mut tr.tc[s * u..(s + 1) * u],
            &mut tail_h[..u],
        );
    }
    tr
}

/// Backpropagates through one direction. `dh` holds the loss gradient
/// w.r.t. each step's hidden output (indexed by processing step). Parameter
/// and embedding gradients are accumulated into `grad` and `d_embedding`.
pub fn backward(
    p: &LstmParams,
    embedding: &Matrix,
    tokens: &[usize],
    tr: &LstmTrace,
    dh: &[f64],
    grad: &mut LstmParams,
    d_embedding: &mut Matrix,
) {
    let u = p.hidden();
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];
    let zeros = vec![0.0; u];
    for s in (0..tr.steps).rev() {
        let gates = &tr.gates[s * 4 * u..(s + 1) * 4 * u];
        let c_prev = if s == 0 { &zeros[..] } else { &tr.c[(s - 1) * u..s * u] };
        let h_prev = if s == 0 { &zeros[..] } else { &tr.h[(s - 1) * u..s * u] };
        let tc = &tr.tc[s * u..(s + 1) * u];
        for k in 0..u {
            let (i, f, g, o) = (gates[k], gates[u + k], gates[2 * u + k], gates[3 * u + k]);
            let dhk = dh[s * u + k] + dh_next[k];
            let d_o = dhk * tc[k];
            let dc = dc_next[k] + dhk * o * (1.0 - tc[k] * tc[k]);
            dz[k] = dc * g * i * (1.0 - i);
            dz[u + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * u + k] = dc * i * (1.0 - g * g);
            dz[3 * u + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let token = tokens[tr.position(s)];
        let x = embedding.row(token);
        grad.w.outer_acc(&dz, x);
        grad.u.outer_acc(&dz, h_prev);
        for (gb, d) in grad.b.data.iter_mut().zip(&dz) {
            *gb += d;
        }
        p.w.gemv_t_acc(&dz, d_embedding.row_mut(token));
        dh_next.fill(0.0);
        p.u.gemv_t_acc(&dz, &mut dh_next);
    }
}
