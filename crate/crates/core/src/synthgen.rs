//! Synthetic claims populations with a planted risk signal.
//!
//! Every individual has a stable background trajectory. A configurable
//! fraction additionally deteriorates: starting at an onset day, both the
//! monthly record rate and the share of risk-marker codes rise linearly until
//! the complication day, where a complication-class code is emitted and the
//! individual leaves the data. Everyone receives glycated-hemoglobin tests a
//! few months apart, so the whole population passes the diabetic filter.
//!
//! A set of planted code pairs is also embedded: the second code of a pair is
//! only ever emitted on the same day right after the first, which gives the
//! embedding stage a known co-occurrence structure to recover.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{first_complication, format_day, ingest_records, CodeSets, ComplicationClass, CsvFormat, Day};
use crate::rng::{derived, Rng};

pub const HBA1C_CODE: &str = "40302733";

/// First simulated day (2015-01-01).
pub const START_DAY: Day = 16436;

const BLOCK_DAYS: Day = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_individuals: usize,
    /// Distinct ordinary (non-hba1c, non-complication) codes.
    pub vocab_size: usize,
    pub complication_fraction: f64,
    /// Mean records per 30-day block in the stable state.
    pub base_rate: f64,
    /// Mean records per 30-day block on the complication day.
    pub risk_rate: f64,
    pub n_risk_markers: usize,
    /// Share of ordinary emissions drawn from the risk markers when stable.
    pub marker_base_share: f64,
    /// Share of ordinary emissions drawn from the risk markers on the
    /// complication day.
    pub marker_peak_share: f64,
    /// Deterioration lasts uniformly between these many days.
    pub onset_min_days: Day,
    pub onset_max_days: Day,
    pub n_planted_pairs: usize,
    pub horizon_days: Day,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_individuals: 2000,
            vocab_size: 400,
            complication_fraction: 0.05,
            base_rate: 8.0,
            risk_rate: 12.0,
            n_risk_markers: 10,
            marker_base_share: 0.004,
            marker_peak_share: 0.06,
            onset_min_days: 420,
            onset_max_days: 720,
            n_planted_pairs: 100,
            horizon_days: 1460,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_individuals == 0 {
            return bad("n_individuals must be positive");
        }
        if self.vocab_size < 100 {
            return bad("vocab_size must be at least 100");
        }
        if !(self.complication_fraction >= 0.0 && self.complication_fraction < 0.5) {
            return bad("complication_fraction must lie in [0, 0.5)");
        }
        if !(self.base_rate > 0.0 && self.risk_rate > 0.0) {
            return bad("rates must be positive");
        }
        if self.n_risk_markers == 0 {
            return bad("need at least one risk marker");
        }
        if 2 * self.n_planted_pairs + self.n_risk_markers + 10 > self.vocab_size {
            return bad("vocab_size too small for the planted pairs and markers");
        }
        for share in [self.marker_base_share, self.marker_peak_share] {
            if !(0.0..1.0).contains(&share) {
                return bad("marker shares must lie in [0, 1)");
            }
        }
        if self.onset_min_days <= 0 || self.onset_max_days < self.onset_min_days {
            return bad("onset range must be positive and ordered");
        }
        if self.horizon_days < 2 * 365 + 240 {
            return bad("horizon_days too short for a one-year window plus the longest gap");
        }
        Ok(())
    }
}

/// Fixed code layout of a synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub ordinary: Vec<String>,
    pub risk_markers: Vec<String>,
    /// `(leader, follower)`: the follower only appears right after its leader.
    pub planted_pairs: Vec<(String, String)>,
    pub complications: BTreeMap<ComplicationClass, Vec<String>>,
    pub descriptions: BTreeMap<String, String>,
}

impl Vocabulary {
    pub fn new(config: &SynthConfig) -> Self {
        let ordinary: Vec<String> = (0..config.vocab_size)
            .map(|i| format!("{}", 10_101_012 + 7 * i))
            .collect();
        // markers sit in the sparse tail, pairs in the middle of the frequency range
        let risk_markers = ordinary[ordinary.len() - config.n_risk_markers..].to_vec();
        let planted_pairs: Vec<(String, String)> = (0..config.n_planted_pairs)
            .map(|k| (ordinary[10 + 2 * k].clone(), ordinary[11 + 2 * k].clone()))
            .collect();
        let complications: BTreeMap<ComplicationClass, Vec<String>> = [
            (
                ComplicationClass::AmputationDebridement,
                vec!["30720010".to_string(), "30720028".to_string()],
            ),
            (
                ComplicationClass::RevascularizationAngioplasty,
                vec!["30912016".to_string(), "30912024".to_string()],
            ),
            (
                ComplicationClass::Hemodialysis,
                vec!["30909031".to_string(), "30909040".to_string()],
            ),
        ]
        .into_iter()
        .collect();

        let mut descriptions = BTreeMap::new();
        descriptions.insert(HBA1C_CODE.to_string(), "Hemoglobin A1c".to_string());
        for (i, code) in ordinary.iter().enumerate() {
            descriptions.insert(code.clone(), format!("Procedure {i}"));
        }
        for (i, code) in risk_markers.iter().enumerate() {
            descriptions.insert(code.clone(), format!("Specialised exam {i}"));
        }
        for (class, codes) in &complications {
            for code in codes {
                descriptions.insert(code.clone(), class.name().replace('_', " "));
            }
        }
        Vocabulary {
            ordinary,
            risk_markers,
            planted_pairs,
            complications,
            descriptions,
        }
    }

    pub fn code_sets(&self) -> CodeSets {
        let mut sets = CodeSets::new(
            [HBA1C_CODE],
            self.complications.iter().map(|(class, codes)| (*class, codes.clone())),
        )
        .expect("synthetic code sets are disjoint and non-empty");
        sets.risk_markers = self.risk_markers.iter().cloned().collect();
        sets
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    /// Record CSV, sorted by individual and date.
    pub csv: String,
    pub vocabulary: Vocabulary,
    /// Individuals on a deteriorating trajectory, with complication day.
    pub planted: BTreeMap<String, (Day, ComplicationClass)>,
    pub records: usize,
}

struct Sampler<'a> {
    config: &'a SynthConfig,
    vocab: &'a Vocabulary,
    background: WeightedIndex<f64>,
    background_codes: Vec<&'a str>,
    follower: BTreeMap<&'a str, &'a str>,
}

impl<'a> Sampler<'a> {
    fn new(config: &'a SynthConfig, vocab: &'a Vocabulary) -> Self {
        let excluded: BTreeSet<&str> = vocab
            .risk_markers
            .iter()
            .chain(vocab.planted_pairs.iter().map(|(_, f)| f))
            .map(String::as_str)
            .collect();
        let background_codes: Vec<&str> = vocab
            .ordinary
            .iter()
            .map(String::as_str)
            .filter(|c| !excluded.contains(c))
            .collect();
        // Zipf-like frequencies
        let weights: Vec<f64> = (0..background_codes.len()).map(|r| 1.0 / (r as f64 + 3.0)).collect();
        Sampler {
            config,
            vocab,
            background: WeightedIndex::new(weights).expect("positive weights"),
            background_codes,
            follower: vocab
                .planted_pairs
                .iter()
                .map(|(l, f)| (l.as_str(), f.as_str()))
                .collect(),
        }
    }

    /// 0 when stable, rising linearly to 1 on the complication day.
    fn severity(day: Day, trajectory: Option<(Day, Day)>) -> f64 {
        match trajectory {
            Some((onset, end)) if day >= onset => (f64::from(day - onset) / f64::from((end - onset).max(1))).min(1.0),
            _ => 0.0,
        }
    }

    fn individual(&self, rng: &mut Rng, out: &mut Vec<(Day, String)>) -> Option<(Day, ComplicationClass)> {
        let cfg = self.config;
        let start = START_DAY + rng.random_range(0..180);
        let mut end = START_DAY + cfg.horizon_days;
        let mut trajectory = None;
        let mut complication = None;
        if rng.random::<f64>() < cfg.complication_fraction {
            // leave room for a full window before the longest gap
            let earliest = start + 365 + 240 + 60;
            let day = rng.random_range(earliest..=end);
            let length = rng.random_range(cfg.onset_min_days..=cfg.onset_max_days);
            let class = ComplicationClass::ALL[rng.random_range(0..3)];
            trajectory = Some((day - length, day));
            complication = Some((day, class));
            end = day;
        }

        // glycated hemoglobin every 3-6 months
        let mut day = start + rng.random_range(0..60);
        while day < end {
            out.push((day, HBA1C_CODE.to_string()));
            day += rng.random_range(90..=180);
        }

        let mut block = start;
        while block < end {
            let len = BLOCK_DAYS.min(end - block);
            let s = Self::severity(block + len / 2, trajectory);
            let rate = (cfg.base_rate + (cfg.risk_rate - cfg.base_rate) * s) * f64::from(len) / f64::from(BLOCK_DAYS);
            let share = cfg.marker_base_share + (cfg.marker_peak_share - cfg.marker_base_share) * s;
            let count = Poisson::new(rate).expect("positive rate").sample(rng) as usize;
            for _ in 0..count {
                let d = block + rng.random_range(0..len);
                if rng.random::<f64>() < share {
                    let m = &self.vocab.risk_markers[rng.random_range(0..self.vocab.risk_markers.len())];
                    out.push((d, m.clone()));
                } else {
                    let code = self.background_codes[self.background.sample(rng)];
                    out.push((d, code.to_string()));
                    if let Some(f) = self.follower.get(code) {
                        out.push((d, f.to_string()));
                    }
                }
            }
            block += len;
        }

        if let Some((day, class)) = complication {
            let codes = &self.vocab.complications[&class];
            out.push((day, codes[rng.random_range(0..codes.len())].clone()));
        }
        // stable sort keeps same-day pairs in emission order
        out.sort_by_key(|(d, _)| *d);
        complication
    }
}

pub fn individual_id(index: usize) -> String {
    format!("P{index:06}")
}

/// Generates a population. Each individual draws from its own stream derived
/// from the seed, so output does not depend on generation order.
pub fn generate_population(config: &SynthConfig) -> Result<Population> {
    config.validate()?;
    let vocabulary = Vocabulary::new(config);
    let sampler = Sampler::new(config, &vocabulary);
    let mut csv = String::from("individual_id,service_date,code\n");
    let mut planted = BTreeMap::new();
    let mut records = 0;
    let mut buf = Vec::new();
    for index in 0..config.n_individuals {
        let id = individual_id(index);
        let mut rng = derived(config.seed, index as u64);
        buf.clear();
        if let Some(c) = sampler.individual(&mut rng, &mut buf) {
            planted.insert(id.clone(), c);
        }
        for (day, code) in &buf {
            csv.push_str(&id);
            csv.push(',');
            csv.push_str(&format_day(*day));
            csv.push(',');
            csv.push_str(code);
            csv.push('\n');
        }
        records += buf.len();
    }
    Ok(Population {
        csv,
        vocabulary,
        planted,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub individuals: usize,
    pub records: usize,
    pub rejected_lines: usize,
    pub with_complication: usize,
    pub complication_prevalence: f64,
    /// min, 25%, median, 75%, max of records per individual.
    pub records_per_individual: [usize; 5],
}

impl std::fmt::Display for PopulationSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let q = &self.records_per_individual;
        writeln!(f, "individuals:            {}", self.individuals)?;
        writeln!(f, "records:                {}", self.records)?;
        writeln!(
            f,
            "with complication:      {} ({:.4})",
            self.with_complication, self.complication_prevalence
        )?;
        write!(
            f,
            "records per individual: min {} / q25 {} / median {} / q75 {} / max {}",
            q[0], q[1], q[2], q[3], q[4]
        )
    }
}

/// Nearest-rank quantile of a sorted slice.
fn quantile(sorted: &[usize], q: f64) -> usize {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn describe_population<R: BufRead>(stream: R, code_sets: &CodeSets) -> Result<PopulationSummary> {
    let ingested = ingest_records(stream, &CsvFormat::default())?;
    let mut lengths: Vec<usize> = ingested.timelines.iter().map(|t| t.len()).collect();
    lengths.sort_unstable();
    let with_complication = ingested
        .timelines
        .iter()
        .filter(|t| first_complication(t, code_sets).is_some())
        .count();
    let individuals = ingested.timelines.len();
    Ok(PopulationSummary {
        individuals,
        records: ingested.records,
        rejected_lines: ingested.rejected_lines,
        with_complication,
        complication_prevalence: with_complication as f64 / individuals as f64,
        records_per_individual: [
            lengths[0],
            quantile(&lengths, 0.25),
            quantile(&lengths, 0.5),
            quantile(&lengths, 0.75),
            lengths[lengths.len() - 1],
        ],
    })
}
