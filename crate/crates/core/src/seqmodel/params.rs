use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::lstm::LstmParams;
use crate::codevec::{EmbeddingTable, PAD};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// BiLSTM with self-attentive pooling.
    Sa,
    /// Unidirectional LSTM, last hidden state.
    Baseline,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sa => "sa",
            ModelKind::Baseline => "baseline",
        }
    }

    /// Column title used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Sa => "LSTM+SA",
            ModelKind::Baseline => "LSTM",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sa" => Ok(ModelKind::Sa),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// LSTM hidden size per direction.
    pub hidden: usize,
    pub attn_dim: usize,
    pub hops: usize,
    pub fc_hidden: usize,
    pub penalty_coeff: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            vocab_size: 0,
            embed_dim: 64,
            hidden: 64,
            attn_dim: 64,
            hops: 4,
            fc_hidden: 64,
            penalty_coeff: 0.1,
        }
    }
}

impl Hyper {
    /// The small configuration used for gradient checks.
    pub fn tiny() -> Self {
        Hyper {
            vocab_size: 20,
            embed_dim: 8,
            hidden: 8,
            attn_dim: 6,
            hops: 3,
            fc_hidden: 8,
            penalty_coeff: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 || [self.embed_dim, self.hidden, self.attn_dim, self.hops, self.fc_hidden].contains(&0) {
            return Err(Error::Config(format!("degenerate model shape {self:?}")));
        }
        if !(self.penalty_coeff >= 0.0 && self.penalty_coeff.is_finite()) {
            return Err(Error::Config("penalty_coeff must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// `d_a × 2u` projection.
    pub ws1: Matrix,
    /// `r × d_a` hop matrix.
    pub ws2: Matrix,
}

/// All learnable weights of one classifier. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub hyper: Hyper,
    /// `V × d`; row 0 is padding and stays zero.
    pub embedding: Matrix,
    pub fwd: LstmParams,
    /// Present for the self-attentive model only.
    pub bwd: Option<LstmParams>,
    pub attention: Option<AttentionParams>,
    /// `h_fc × (r·2u)` for the attentive model, `h_fc × u` for the baseline.
    pub fc1_w: Matrix,
    pub fc1_b: Matrix,
    /// `1 × h_fc`.
    pub fc2_w: Matrix,
    pub fc2_b: Matrix,
}

impl ModelParams {
    pub fn zeros(kind: ModelKind, hyper: Hyper) -> Result<Self> {
        hyper.validate()?;
        let Hyper {
            vocab_size: v,
            embed_dim: d,
            hidden: u,
            attn_dim: da,
            hops: r,
            fc_hidden: h,
            ..
        } = hyper;
        let (bwd, attention, head_in) = match kind {
            ModelKind::Sa => (
                Some(LstmParams::zeros(d, u)),
                Some(AttentionParams {
                    ws1: Matrix::zeros(da, 2 * u),
                    ws2: Matrix::zeros(r, da),
                }),
                r * 2 * u,
            ),
            ModelKind::Baseline => (None, None, u),
        };
        Ok(ModelParams {
            kind,
            hyper,
            embedding: Matrix::zeros(v, d),
            fwd: LstmParams::zeros(d, u),
            bwd,
            attention,
            fc1_w: Matrix::zeros(h, head_in),
            fc1_b: Matrix::zeros(h, 1),
            fc2_w: Matrix::zeros(1, h),
            fc2_b: Matrix::zeros(1, 1),
        })
    }

    /// Uniform `±1/√fan_in` initialisation for every block except the
    /// embedding, which is copied from `table` when given and otherwise drawn
    /// uniformly in `±0.5/d`.
    pub fn init(kind: ModelKind, hyper: Hyper, table: Option<&EmbeddingTable>, rng: &mut Rng) -> Result<Self> {
        let mut p = ModelParams::zeros(kind, hyper)?;
        match table {
            Some(t) => {
                if t.vectors.shape() != p.embedding.shape() {
                    return Err(Error::Shape(format!(
                        "embedding table {:?} vs model {:?}",
                        t.vectors.shape(),
                        p.embedding.shape()
                    )));
                }
                p.embedding = t.vectors.clone();
            }
            None => {
                let half = 0.5 / hyper.embed_dim as f64;
                p.embedding
                    .data
                    .iter_mut()
                    .for_each(|x| *x = rng.random_range(-half..half));
            }
        }
        p.embedding.row_mut(PAD).fill(0.0);

        let fill = |m: &mut Matrix, fan_in: usize, rng: &mut Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            m.data.iter_mut().for_each(|x| *x = rng.random_range(-bound..bound));
        };
        let u = hyper.hidden;
        for lstm in std::iter::once(&mut p.fwd).chain(p.bwd.as_mut()) {
            fill(&mut lstm.w, u, rng);
            fill(&mut lstm.u, u, rng);
            fill(&mut lstm.b, u, rng);
        }
        if let Some(att) = p.attention.as_mut() {
            fill(&mut att.ws1, 2 * u, rng);
            fill(&mut att.ws2, hyper.attn_dim, rng);
        }
        let head_in = p.fc1_w.cols;
        fill(&mut p.fc1_w, head_in, rng);
        fill(&mut p.fc1_b, head_in, rng);
        fill(&mut p.fc2_w, hyper.fc_hidden, rng);
        fill(&mut p.fc2_b, hyper.fc_hidden, rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.blocks_mut().into_iter().for_each(|(_, m)| m.fill(0.0));
        z
    }

    /// Parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![("embedding", &self.embedding)];
        out.extend([("fwd.w", &self.fwd.w), ("fwd.u", &self.fwd.u), ("fwd.b", &self.fwd.b)]);
        if let Some(b) = &self.bwd {
            out.extend([("bwd.w", &b.w), ("bwd.u", &b.u), ("bwd.b", &b.b)]);
        }
        if let Some(a) = &self.attention {
            out.extend([("attn.ws1", &a.ws1), ("attn.ws2", &a.ws2)]);
        }
        out.extend([
            ("fc1.w", &self.fc1_w),
            ("fc1.b", &self.fc1_b),
            ("fc2.w", &self.fc2_w),
            ("fc2.b", &self.fc2_b),
        ]);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = vec![("embedding", &mut self.embedding)];
        out.extend([
            ("fwd.w", &mut self.fwd.w),
            ("fwd.u", &mut self.fwd.u),
            ("fwd.b", &mut self.fwd.b),
        ]);
        if let Some(b) = &mut self.bwd {
            out.extend([("bwd.w", &mut b.w), ("bwd.u", &mut b.u), ("bwd.b", &mut b.b)]);
        }
        if let Some(a) = &mut self.attention {
            out.extend([("attn.ws1", &mut a.ws1), ("attn.ws2", &mut a.ws2)]);
        }
        out.extend([
            ("fc1.w", &mut self.fc1_w),
            ("fc1.b", &mut self.fc1_b),
            ("fc2.w", &mut self.fc2_w),
            ("fc2.b", &mut self.fc2_b),
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, m)| m.is_finite())
    }

    /// `self += scale · other`, block by block.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        let theirs = other.blocks();
        let mut mine = self.blocks_mut();
        if mine.len() != theirs.len() {
            return Err(Error::Shape("parameter sets of different kinds".into()));
        }
        for ((name, a), (_, b)) in mine.iter_mut().zip(theirs) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!("block {name}")));
            }
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks().iter().map(|(_, m)| m.sum_squares()).sum::<f64>().sqrt()
    }

    /// Text checkpoint: a header with the model kind and hyperparameters,
    /// then one `block <name> <rows> <cols>` line per block followed by its
    /// values on a single line. Floats use Rust's shortest round-trip
    /// formatting, so save→load is bit-exact.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let h = &self.hyper;
        writeln!(out, "claimrisk-checkpoint 1")?;
        writeln!(out, "kind {}", self.kind)?;
        writeln!(out, "vocab_size {}", h.vocab_size)?;
        writeln!(out, "embed_dim {}", h.embed_dim)?;
        writeln!(out, "hidden {}", h.hidden)?;
        writeln!(out, "attn_dim {}", h.attn_dim)?;
        writeln!(out, "hops {}", h.hops)?;
        writeln!(out, "fc_hidden {}", h.fc_hidden)?;
        writeln!(out, "penalty_coeff {}", h.penalty_coeff)?;
        for (name, m) in self.blocks() {
            writeln!(out, "block {name} {} {}", m.rows, m.cols)?;
            let line: Vec<String> = m.data.iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |m: String| Error::Malformed(format!("checkpoint: {m}"));
        let mut lines = reader.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file".into()))?
                .map_err(Error::from)
        };
        if next()? != "claimrisk-checkpoint 1" {
            return Err(bad("unsupported header".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = next()?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(bad(format!("expected {key}, got {line:?}"))),
            }
        };
        let kind: ModelKind = field("kind")?.parse()?;
        let num = |s: String| s.parse::<usize>().map_err(|_| bad(format!("bad integer {s:?}")));
        let hyper = Hyper {
            vocab_size: num(field("vocab_size")?)?,
            embed_dim: num(field("embed_dim")?)?,
            hidden: num(field("hidden")?)?,
            attn_dim: num(field("attn_dim")?)?,
            hops: num(field("hops")?)?,
            fc_hidden: num(field("fc_hidden")?)?,
            penalty_coeff: field("penalty_coeff")?
                .parse()
                .map_err(|_| bad("penalty_coeff".into()))?,
        };
        let mut params = ModelParams::zeros(kind, hyper)?;
        let names: Vec<(&'static str, (usize, usize))> = params.blocks().iter().map(|(n, m)| (*n, m.shape())).collect();
        let mut values = Vec::with_capacity(names.len());
        for (name, shape) in &names {
            let header = next()?;
            let expected = format!("block {name} {} {}", shape.0, shape.1);
            if header != expected {
                return Err(bad(format!("expected {expected:?}, got {header:?}")));
            }
            let data: std::result::Result<Vec<f64>, _> = next()?.split_whitespace().map(str::parse::<f64>).collect();
            let data = data.map_err(|_| bad(format!("values of {name}")))?;
            if data.len() != shape.0 * shape.1 {
                return Err(bad(format!("{name} has {} values", data.len())));
            }
            values.push(data);
        }
        if next()? != "end" {
            return Err(bad("missing end marker".into()));
        }
        for ((_, m), data) in params.blocks_mut().into_iter().zip(values) {
            m.data = data;
        }
        Ok(params)
    }
}
