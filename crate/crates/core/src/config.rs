//! Flat `key = value` run configuration shared by every pipeline stage.
//!
//! Lines are `key = value`; `#` starts a comment. Keys not listed in
//! [`RunConfig::KEYS`] are rejected. Missing keys keep their defaults, which
//! are sized for a single-core desk run rather than the full-scale model.

use std::path::PathBuf;
use std::str::FromStr;

use crate::codevec::SkipgramConfig;
use crate::error::{Error, Result};
use crate::records::{ComplicationClass, GAPS};
use crate::rng::mix;
use crate::seqmodel::{Hyper, ModelKind};
use crate::synthgen::SynthConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub gaps: Vec<u32>,
    pub models: Vec<ModelKind>,
    /// Record CSV and code-set file; empty means the output directory's own.
    pub records_path: Option<PathBuf>,
    pub codesets_path: Option<PathBuf>,
    pub synth: SynthConfig,
    pub embed: SkipgramConfig,
    pub embed_min_count: u64,
    /// Initialise classifiers from the skipgram table.
    pub pretrained: bool,
    pub train: TrainConfig,
    pub curve_grid: usize,
    pub attend_individual: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 7;
        let mut cfg = RunConfig {
            seed,
            gaps: GAPS.to_vec(),
            models: vec![ModelKind::Sa, ModelKind::Baseline],
            records_path: None,
            codesets_path: None,
            synth: SynthConfig::default(),
            embed: SkipgramConfig {
                dim: 8,
                epochs: 3,
                ..SkipgramConfig::default()
            },
            embed_min_count: 1,
            pretrained: true,
            train: TrainConfig {
                epochs: 8,
                learning_rate: 5e-3,
                hyper: Hyper {
                    vocab_size: 0,
                    embed_dim: 8,
                    hidden: 8,
                    attn_dim: 8,
                    hops: 4,
                    fc_hidden: 8,
                    penalty_coeff: 0.1,
                },
                ..TrainConfig::default()
            },
            curve_grid: 101,
            attend_individual: None,
        };
        cfg.reseed(seed);
        cfg
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "gaps",
        "models",
        "data.records",
        "data.codesets",
        "synth.n_individuals",
        "synth.vocab_size",
        "synth.complication_fraction",
        "synth.base_rate",
        "synth.risk_rate",
        "synth.n_risk_markers",
        "synth.marker_base_share",
        "synth.marker_peak_share",
        "synth.onset_min_days",
        "synth.onset_max_days",
        "synth.n_planted_pairs",
        "synth.horizon_days",
        "embed.dim",
        "embed.window",
        "embed.negatives",
        "embed.epochs",
        "embed.learning_rate",
        "embed.min_learning_rate",
        "embed.min_count",
        "embed.pretrained",
        "model.hidden",
        "model.attn_dim",
        "model.hops",
        "model.fc_hidden",
        "model.penalty_coeff",
        "train.k_folds",
        "train.oversample_ratio",
        "train.batch_size",
        "train.epochs",
        "train.learning_rate",
        "train.beta1",
        "train.beta2",
        "train.epsilon",
        "train.clip_norm",
        "train.freeze_embeddings",
        "train.patience",
        "train.target_class",
        "eval.curve_grid",
        "attend.individual",
    ];

    /// Sets the master seed and the per-stage seeds derived from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.embed.seed = mix(seed, 1);
        self.train.seed = mix(seed, 2);
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "seed" => self.reseed(parse(key, value)?),
            "gaps" => self.gaps = parse_list(key, value)?,
            "models" => self.models = parse_list(key, value)?,
            "data.records" => self.records_path = path(value),
            "data.codesets" => self.codesets_path = path(value),
            "synth.n_individuals" => self.synth.n_individuals = parse(key, value)?,
            "synth.vocab_size" => self.synth.vocab_size = parse(key, value)?,
            "synth.complication_fraction" => self.synth.complication_fraction = parse(key, value)?,
            "synth.base_rate" => self.synth.base_rate = parse(key, value)?,
            "synth.risk_rate" => self.synth.risk_rate = parse(key, value)?,
            "synth.n_risk_markers" => self.synth.n_risk_markers = parse(key, value)?,
            "synth.marker_base_share" => self.synth.marker_base_share = parse(key, value)?,
            "synth.marker_peak_share" => self.synth.marker_peak_share = parse(key, value)?,
            "synth.onset_min_days" => self.synth.onset_min_days = parse(key, value)?,
            "synth.onset_max_days" => self.synth.onset_max_days = parse(key, value)?,
            "synth.n_planted_pairs" => self.synth.n_planted_pairs = parse(key, value)?,
            "synth.horizon_days" => self.synth.horizon_days = parse(key, value)?,
            "embed.dim" => {
                self.embed.dim = parse(key, value)?;
                self.train.hyper.embed_dim = self.embed.dim;
            }
            "embed.window" => self.embed.window = parse(key, value)?,
            "embed.negatives" => self.embed.negatives = parse(key, value)?,
            "embed.epochs" => self.embed.epochs = parse(key, value)?,
            "embed.learning_rate" => self.embed.learning_rate = parse(key, value)?,
            "embed.min_learning_rate" => self.embed.min_learning_rate = parse(key, value)?,
            "embed.min_count" => self.embed_min_count = parse(key, value)?,
            "embed.pretrained" => self.pretrained = parse_bool(key, value)?,
            "model.hidden" => self.train.hyper.hidden = parse(key, value)?,
            "model.attn_dim" => self.train.hyper.attn_dim = parse(key, value)?,
            "model.hops" => self.train.hyper.hops = parse(key, value)?,
            "model.fc_hidden" => self.train.hyper.fc_hidden = parse(key, value)?,
            "model.penalty_coeff" => self.train.hyper.penalty_coeff = parse(key, value)?,
            "train.k_folds" => self.train.k_folds = parse(key, value)?,
            "train.oversample_ratio" => self.train.oversample_ratio = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, value)?,
            "train.beta1" => self.train.beta1 = parse(key, value)?,
            "train.beta2" => self.train.beta2 = parse(key, value)?,
            "train.epsilon" => self.train.epsilon = parse(key, value)?,
            "train.clip_norm" => self.train.clip_norm = parse(key, value)?,
            "train.freeze_embeddings" => self.train.freeze_embeddings = parse_bool(key, value)?,
            "train.patience" => {
                let p: usize = parse(key, value)?;
                self.train.patience = (p > 0).then_some(p);
            }
            "train.target_class" => {
                self.train.target_class = match value {
                    "any" => None,
                    v => Some(parse::<ComplicationClass>(key, v)?),
                }
            }
            "eval.curve_grid" => self.curve_grid = parse(key, value)?,
            "attend.individual" => self.attend_individual = (!value.is_empty()).then(|| value.to_string()),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        if self.gaps.iter().any(|g| !GAPS.contains(g)) {
            return Err(Error::Config(format!(
                "gaps must be drawn from {GAPS:?}, got {:?}",
                self.gaps
            )));
        }
        if self.embed.dim == 0 || self.embed.window == 0 || self.embed.negatives == 0 {
            return Err(Error::Config(
                "embed.dim, embed.window and embed.negatives must be positive".into(),
            ));
        }
        if self.curve_grid < 2 {
            return Err(Error::Config("eval.curve_grid must be at least 2".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, in [`Self::KEYS`] order. Parsing
    /// the result gives back an equal config.
    pub fn to_file_string(&self) -> String {
        let s = &self.synth;
        let e = &self.embed;
        let t = &self.train;
        let h = &t.hyper;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values: Vec<String> = vec![
            self.seed.to_string(),
            join(&self.gaps),
            join(&self.models),
            path(&self.records_path),
            path(&self.codesets_path),
            s.n_individuals.to_string(),
            s.vocab_size.to_string(),
            s.complication_fraction.to_string(),
            s.base_rate.to_string(),
            s.risk_rate.to_string(),
            s.n_risk_markers.to_string(),
            s.marker_base_share.to_string(),
            s.marker_peak_share.to_string(),
            s.onset_min_days.to_string(),
            s.onset_max_days.to_string(),
            s.n_planted_pairs.to_string(),
            s.horizon_days.to_string(),
            e.dim.to_string(),
            e.window.to_string(),
            e.negatives.to_string(),
            e.epochs.to_string(),
            e.learning_rate.to_string(),
            e.min_learning_rate.to_string(),
            self.embed_min_count.to_string(),
            self.pretrained.to_string(),
            h.hidden.to_string(),
            h.attn_dim.to_string(),
            h.hops.to_string(),
            h.fc_hidden.to_string(),
            h.penalty_coeff.to_string(),
            t.k_folds.to_string(),
            t.oversample_ratio.to_string(),
            t.batch_size.to_string(),
            t.epochs.to_string(),
            t.learning_rate.to_string(),
            t.beta1.to_string(),
            t.beta2.to_string(),
            t.epsilon.to_string(),
            t.clip_norm.to_string(),
            t.freeze_embeddings.to_string(),
            t.patience.unwrap_or(0).to_string(),
            t.target_class.map_or("any".to_string(), |c| c.to_string()),
            self.curve_grid.to_string(),
            self.attend_individual.clone().unwrap_or_default(),
        ];
        let mut out = String::from("# resolved run configuration\n");
        for (k, v) in Self::KEYS.iter().zip(values) {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}
