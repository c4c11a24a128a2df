use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::vocab::{CodeVocab, PAD};
use crate::error::{Error, Result};
use crate::matrix::{axpy, cosine, dot, log_sigmoid, sigmoid, Matrix};
use crate::rng::seeded;

/// Exported code vectors, one row per vocabulary slot: the sum of each
/// code's center and context vectors. Row 0 (padding) is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Matrix,
}

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.vectors.rows
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn row(&self, index: usize) -> &[f64] {
        self.vectors.row(index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Floor of the linear learning-rate decay.
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkipgramOutput {
    /// Center plus context vectors. The sum carries first-order
    /// co-occurrence (codes billed together), which center vectors alone
    /// only capture through shared neighbours.
    pub table: EmbeddingTable,
    pub center: Matrix,
    pub context: Matrix,
    /// Mean negative-sampling loss per pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// `(s[t], s[t+j])` for every in-bounds `j ∈ [-w, w] \ {0}`, `t` then `j`
/// ascending.
pub fn skipgram_pairs(sequence: &[usize], window: usize) -> Vec<(usize, usize)> {
    let n = sequence.len();
    let mut pairs = Vec::new();
    for t in 0..n {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(n.saturating_sub(1));
        for c in lo..=hi {
            if c != t {
                pairs.push((sequence[t], sequence[c]));
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsLossGrad {
    pub loss: f64,
    pub d_center: Vec<f64>,
    pub d_context: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

/// Loss `-ln σ(u_ctx·v) - Σ_k ln σ(-u_k·v)` and its gradients for one
/// training triple.
pub fn sgns_loss_grad(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsLossGrad {
    let s = dot(context, center);
    let mut loss = -log_sigmoid(s);
    let g = sigmoid(s) - 1.0;
    let mut d_center: Vec<f64> = context.iter().map(|u| g * u).collect();
    let d_context = center.iter().map(|v| g * v).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for u in negatives {
        let s = dot(u, center);
        loss -= log_sigmoid(-s);
        let g = sigmoid(s);
        axpy(g, u, &mut d_center);
        d_negatives.push(center.iter().map(|v| g * v).collect());
    }
    SgnsLossGrad {
        loss,
        d_center,
        d_context,
        d_negatives,
    }
}

/// Trains center/context vectors by plain SGD over all skipgram pairs, with
/// negatives drawn from the unigram distribution raised to 0.75 and the
/// learning rate decaying linearly to its floor.
pub fn train_skipgram(sequences: &[Vec<usize>], vocab: &CodeVocab, config: &SkipgramConfig) -> Result<SkipgramOutput> {
    if config.dim < 2 {
        return Err(Error::Config("embedding dim must be at least 2".into()));
    }
    if config.window < 1 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let v = vocab.len();
    let d = config.dim;
    let mut rng = seeded(config.seed);
    let half = 0.5 / d as f64;
    let mut center = Matrix::from_fn(v, d, |r, _| if r == PAD { 0.0 } else { rng.random_range(-half..half) });
    let mut context = Matrix::zeros(v, d);

    let weights: Vec<f64> = vocab
        .counts()
        .iter()
        .enumerate()
        .map(|(i, &c)| if i == PAD { 0.0 } else { (c as f64).powf(0.75) })
        .collect();
    let noise = WeightedIndex::new(&weights).map_err(|_| Error::EmptyCorpus)?;

    let total_pairs: usize = sequences
        .iter()
        .map(|s| pair_count(s.len(), config.window))
        .sum::<usize>()
        * config.epochs;
    let floor = config.min_learning_rate.min(config.learning_rate);
    let mut done = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut grad_center = vec![0.0; d];
    let mut negs = vec![0usize; config.negatives];

    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut n_pairs = 0usize;
        for seq in sequences {
            for (cen, ctx) in skipgram_pairs(seq, config.window) {
                let progress = done as f64 / total_pairs.max(1) as f64;
                let lr = config.learning_rate + (floor - config.learning_rate) * progress;
                done += 1;
                if cen == PAD || ctx == PAD {
                    continue;
                }
                for n in negs.iter_mut() {
                    *n = noise.sample(&mut rng);
                }
                grad_center.fill(0.0);
                let vc = center.row(cen).to_vec();

                let s = dot(context.row(ctx), &vc);
                loss_sum -= log_sigmoid(s);
                let g = sigmoid(s) - 1.0;
                axpy(g, context.row(ctx), &mut grad_center);
                axpy(-lr * g, &vc, context.row_mut(ctx));
                for &n in &negs {
                    if n == ctx {
                        continue;
                    }
                    let s = dot(context.row(n), &vc);
                    loss_sum -= log_sigmoid(-s);
                    let g = sigmoid(s);
                    axpy(g, context.row(n), &mut grad_center);
                    axpy(-lr * g, &vc, context.row_mut(n));
                }
                axpy(-lr, &grad_center, center.row_mut(cen));
                n_pairs += 1;
            }
        }
        let mean = if n_pairs > 0 { loss_sum / n_pairs as f64 } else { 0.0 };
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!(
                "skipgram loss {mean} in epoch {epoch} after {done} pairs"
            )));
        }
        epoch_losses.push(mean);
    }
    Ok(SkipgramOutput {
        table: EmbeddingTable {
            vectors: Matrix::from_fn(v, d, |r, c| center.get(r, c) + context.get(r, c)),
        },
        center,
        context,
        epoch_losses,
    })
}

fn pair_count(len: usize, window: usize) -> usize {
    (0..len).map(|t| t.min(window) + (len - 1 - t).min(window)).sum()
}

/// The `k` codes most cosine-similar to `code`, excluding the reserved slots
/// and the query itself. Ties go to the lower index.
pub fn nearest(table: &EmbeddingTable, vocab: &CodeVocab, code: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let q = vocab.get(code).ok_or_else(|| Error::UnknownCode(code.to_string()))?;
    let query = table.row(q);
    let mut scored: Vec<(usize, f64)> = (2..table.vocab_size())
        .filter(|&i| i != q)
        .map(|i| (i, cosine(query, table.row(i))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, c)| (vocab.token(i).to_string(), c))
        .collect())
}

/// Header `V d`, then one line per row: token followed by `d` floats.
pub fn save_embeddings<W: Write>(mut out: W, vocab: &CodeVocab, table: &EmbeddingTable) -> Result<()> {
    if vocab.len() != table.vocab_size() {
        return Err(Error::Shape(format!(
            "vocabulary has {} entries, table {}",
            vocab.len(),
            table.vocab_size()
        )));
    }
    writeln!(out, "{} {}", table.vocab_size(), table.dim())?;
    for (i, token) in vocab.tokens().iter().enumerate() {
        write!(out, "{token}")?;
        for x in table.row(i) {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a table written by [`save_embeddings`]; returns row tokens and table.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<(Vec<String>, EmbeddingTable)> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Malformed("empty embedding file".into()))??;
    let mut parts = header.split_whitespace().map(str::parse::<usize>);
    let (v, d) = match (parts.next(), parts.next()) {
        (Some(Ok(v)), Some(Ok(d))) => (v, d),
        _ => return Err(Error::Malformed(format!("embedding header {header:?}"))),
    };
    let mut tokens = Vec::with_capacity(v);
    let mut data = Vec::with_capacity(v * d);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default().to_string();
        let row: std::result::Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
        let row = row.map_err(|_| Error::Malformed(format!("embedding row for {token:?}")))?;
        if row.len() != d {
            return Err(Error::Malformed(format!(
                "embedding row for {token:?} has {} values",
                row.len()
            )));
        }
        tokens.push(token);
        data.extend(row);
    }
    if tokens.len() != v {
        return Err(Error::Malformed(format!("expected {v} rows, found {}", tokens.len())));
    }
    Ok((
        tokens,
        EmbeddingTable {
            vectors: Matrix::from_vec(v, d, data),
        },
    ))
}
