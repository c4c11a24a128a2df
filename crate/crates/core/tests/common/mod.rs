//! Test-only oracles, written independently of the library's kernels.
#![allow(dead_code)]

use claimrisk::seqmodel::{forward, trace_loss, ModelKind, ModelParams};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mat(m: &claimrisk::matrix::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|r| (0..m.cols).map(|c| m.data[r * m.cols + c]).collect())
        .collect()
}

fn mv(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn lstm_seq(w: &[Vec<f64>], u: &[Vec<f64>], b: &[f64], xs: &[Vec<f64>], hidden: usize) -> Vec<Vec<f64>> {
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = Vec::new();
    for x in xs {
        let zx = mv(w, x);
        let zh = mv(u, &h);
        let z: Vec<f64> = (0..4 * hidden).map(|k| zx[k] + zh[k] + b[k]).collect();
        let mut nh = vec![0.0; hidden];
        let mut nc = vec![0.0; hidden];
        for k in 0..hidden {
            let i = sig(z[k]);
            let f = sig(z[hidden + k]);
            let g = z[2 * hidden + k].tanh();
            let o = sig(z[3 * hidden + k]);
            nc[k] = f * c[k] + i * g;
            nh[k] = o * nc[k].tanh();
        }
        h = nh;
        c = nc;
        out.push(h.clone());
    }
    out
}

/// Straight-line forward pass: returns the output probability.
pub fn oracle_probability(p: &ModelParams, indices: &[usize], mask: &[bool]) -> f64 {
    let emb = mat(&p.embedding);
    let xs: Vec<Vec<f64>> = indices
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&i, _)| emb[i].clone())
        .collect();
    let hid = p.hyper.hidden;
    let col = |m: &claimrisk::matrix::Matrix| m.data.clone();
    let hf = lstm_seq(&mat(&p.fwd.w), &mat(&p.fwd.u), &col(&p.fwd.b), &xs, hid);
    let features: Vec<f64> = match p.kind {
        ModelKind::Baseline => hf.last().unwrap().clone(),
        ModelKind::Sa => {
            let bwd = p.bwd.as_ref().unwrap();
            let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
            let mut hb = lstm_seq(&mat(&bwd.w), &mat(&bwd.u), &col(&bwd.b), &rev, hid);
            hb.reverse();
            let h: Vec<Vec<f64>> = hf
                .iter()
                .zip(&hb)
                .map(|(a, b)| a.iter().chain(b).copied().collect())
                .collect();
            let att = p.attention.as_ref().unwrap();
            let ws1 = mat(&att.ws1);
            let ws2 = mat(&att.ws2);
            let mut m = Vec::new();
            for hop in &ws2 {
                let logits: Vec<f64> = h
                    .iter()
                    .map(|ht| {
                        let s: Vec<f64> = mv(&ws1, ht).into_iter().map(f64::tanh).collect();
                        hop.iter().zip(&s).map(|(a, b)| a * b).sum()
                    })
                    .collect();
                let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                let mut pooled = vec![0.0; 2 * hid];
                for (t, ht) in h.iter().enumerate() {
                    for k in 0..2 * hid {
                        pooled[k] += e[t] / z * ht[k];
                    }
                }
                m.extend(pooled);
            }
            m
        }
    };
    let a1: Vec<f64> = mv(&mat(&p.fc1_w), &features)
        .iter()
        .zip(&p.fc1_b.data)
        .map(|(z, b)| (z + b).tanh())
        .collect();
    let z2: f64 = p.fc2_b.data[0] + a1.iter().zip(&p.fc2_w.data).map(|(a, w)| a * w).sum::<f64>();
    sig(z2)
}

pub fn loss_at(p: &ModelParams, indices: &[usize], mask: &[bool], label: u8) -> f64 {
    let out = forward(p, indices, mask).unwrap();
    trace_loss(&out.trace, label, p.hyper.penalty_coeff)
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter. The denominator is floored at `floor` so entries
/// whose true gradient is ~0 are judged on absolute error.
pub fn max_relative_fd_error(
    p: &ModelParams,
    analytic: &ModelParams,
    indices: &[usize],
    mask: &[bool],
    label: u8,
    eps: f64,
    floor: f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let names: Vec<&str> = p.blocks().iter().map(|(n, _)| *n).collect();
    let grads: Vec<Vec<f64>> = analytic.blocks().iter().map(|(_, m)| m.data.clone()).collect();
    for (b, name) in names.iter().enumerate() {
        for (i, &a) in grads[b].iter().enumerate() {
            let mut plus = p.clone();
            plus.blocks_mut()[b].1.data[i] += eps;
            let mut minus = p.clone();
            minus.blocks_mut()[b].1.data[i] -= eps;
            let numeric = (loss_at(&plus, indices, mask, label) - loss_at(&minus, indices, mask, label)) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}
