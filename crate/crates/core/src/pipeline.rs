//! Stage drivers behind the command-line tool. Every stage reads its inputs
//! from, and writes its artifacts to, one output directory:
//!
//! ```text
//! config.resolved.cfg          resolved configuration of the last command
//! records.csv  codesets.cfg    synthetic records and code families
//! descriptions.csv             code descriptions (synthetic runs)
//! synth_meta.json              generator settings and planted individuals
//! cohort_gap<g>.jsonl          labelled windows per gap
//! cohort_gap<g>_summary.json
//! vocab.csv  embeddings.txt    code vocabulary and skipgram vectors
//! runs/<model>-gap<g>/         run.json, folds.json, aggregate.json,
//!                              fold<i>/{checkpoint,scores.csv},
//!                              roc.csv, pr.csv, eval.json
//! aggregate.json               every run's aggregate, sorted
//! report.txt  report.json      AUC table per gap and model
//! attention_<id>.csv/.svg      attention map of one held-out individual
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::codevec::{build_vocab, load_embeddings, save_embeddings, train_skipgram, CodeVocab, EmbeddingTable};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evalkit::{
    attention_csv, attention_rows, attention_svg, build_report, mean_curves, pr_curve, render_table, roc_auc,
    roc_curve, trapezoid_area, Aggregate, Curve, Report, ScoredSet,
};
use crate::files::{read_text, write_text};
use crate::records::{
    build_cohort, ingest_records, read_cohort_jsonl, write_cohort_jsonl, CodeSets, CohortSample, CohortSummary,
    ComplicationClass, CsvFormat, Day, Timeline,
};
use crate::rng::derived;
use crate::seqmodel::{attention_of, ModelKind, ModelParams};
use crate::synthgen::{describe_population, generate_population, PopulationSummary};
use crate::trainer::{run_experiment, TrainConfig};

const COHORT_STREAM: u64 = 0xc0_4047;

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedIndividual {
    pub complication_day: Day,
    pub class: ComplicationClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthMeta {
    pub config: crate::synthgen::SynthConfig,
    pub records: usize,
    pub risk_markers: Vec<String>,
    pub planted_pairs: Vec<(String, String)>,
    pub planted: BTreeMap<String, PlantedIndividual>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub vocab_size: usize,
    pub dim: usize,
    pub sequences: usize,
    pub tokens: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub seed: u64,
    pub test_size: usize,
    pub auc: f64,
    pub train_auc: f64,
    pub loss_history: Vec<f64>,
}

/// Fold curves averaged onto the grid, plus AUCs recomputed from the
/// persisted scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub gap_days: u32,
    pub model: ModelKind,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
    /// Trapezoid area under the averaged ROC curve.
    pub mean_roc_area: f64,
    pub mean_pr_area: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttendSummary {
    pub individual_id: String,
    pub gap_days: u32,
    pub fold: usize,
    pub label: u8,
    pub probability: f64,
    pub records: usize,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

pub fn run_name(model: ModelKind, gap_days: u32) -> String {
    format!("{model}-gap{gap_days}")
}

pub struct Pipeline {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Pipeline {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let out = out.into();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Pipeline { config, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn records_path(&self) -> PathBuf {
        self.config
            .records_path
            .clone()
            .unwrap_or_else(|| self.path("records.csv"))
    }

    pub fn codesets_path(&self) -> PathBuf {
        self.config
            .codesets_path
            .clone()
            .unwrap_or_else(|| self.path("codesets.cfg"))
    }

    pub fn cohort_path(&self, gap: u32) -> PathBuf {
        self.path(&format!("cohort_gap{gap}.jsonl"))
    }

    pub fn run_dir(&self, model: ModelKind, gap: u32) -> PathBuf {
        self.path("runs").join(run_name(model, gap))
    }

    pub fn persist_config(&self) -> Result<()> {
        write_text(&self.path("config.resolved.cfg"), &self.config.to_file_string())
    }

    fn code_sets(&self) -> Result<CodeSets> {
        let sets = CodeSets::parse(&read_text(&self.codesets_path())?)?;
        sets.validate()?;
        Ok(sets)
    }

    fn timelines(&self) -> Result<Vec<Timeline>> {
        let path = self.records_path();
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let ingested = ingest_records(BufReader::new(file), &CsvFormat::default())?;
        if ingested.rejected_lines > 0 {
            log::warn!(
                "{}: skipped {} malformed lines",
                path.display(),
                ingested.rejected_lines
            );
        }
        Ok(ingested.timelines)
    }

    fn cohort(&self, gap: u32) -> Result<Vec<CohortSample>> {
        let path = self.cohort_path(gap);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        read_cohort_jsonl(BufReader::new(file))
    }

    fn vocab(&self) -> Result<CodeVocab> {
        let path = self.path("vocab.csv");
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        CodeVocab::read_csv(BufReader::new(file))
    }

    fn embeddings(&self, vocab: &CodeVocab) -> Result<EmbeddingTable> {
        let path = self.path("embeddings.txt");
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let (tokens, table) = load_embeddings(BufReader::new(file))?;
        if tokens != vocab.tokens() {
            return Err(Error::Malformed(
                "embeddings.txt and vocab.csv list different codes".into(),
            ));
        }
        Ok(table)
    }

    fn descriptions(&self) -> BTreeMap<String, String> {
        read_text(&self.path("descriptions.csv"))
            .map(|text| {
                text.lines()
                    .skip(1)
                    .filter_map(|l| l.split_once(','))
                    .map(|(c, d)| (c.to_string(), d.to_string()))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn synth(&self) -> Result<PopulationSummary> {
        let pop = generate_population(&self.config.synth)?;
        let sets = pop.vocabulary.code_sets();
        write_text(&self.records_path(), &pop.csv)?;
        write_text(&self.codesets_path(), &sets.to_file_string())?;
        let mut desc = String::from("code,description\n");
        for (code, text) in &pop.vocabulary.descriptions {
            desc.push_str(&format!("{code},{text}\n"));
        }
        write_text(&self.path("descriptions.csv"), &desc)?;
        let meta = SynthMeta {
            config: self.config.synth.clone(),
            records: pop.records,
            risk_markers: pop.vocabulary.risk_markers.clone(),
            planted_pairs: pop.vocabulary.planted_pairs.clone(),
            planted: pop
                .planted
                .iter()
                .map(|(id, &(day, class))| {
                    (
                        id.clone(),
                        PlantedIndividual {
                            complication_day: day,
                            class,
                        },
                    )
                })
                .collect(),
        };
        write_text(&self.path("synth_meta.json"), &to_json(&meta)?)?;
        describe_population(pop.csv.as_bytes(), &sets)
    }

    pub fn build_cohorts(&self) -> Result<Vec<CohortSummary>> {
        let sets = self.code_sets()?;
        let timelines = self.timelines()?;
        let mut out = Vec::new();
        for &gap in &self.config.gaps {
            let mut rng = derived(self.config.seed, COHORT_STREAM + u64::from(gap));
            let (samples, summary) = build_cohort(&timelines, &sets, gap, &mut rng)?;
            let mut buf = Vec::new();
            write_cohort_jsonl(&mut buf, &samples)?;
            write_text(&self.cohort_path(gap), &String::from_utf8(buf).expect("utf-8 json"))?;
            write_text(
                &self.path(&format!("cohort_gap{gap}_summary.json")),
                &to_json(&summary)?,
            )?;
            info!(
                "gap {gap}: {} positives, {} negatives of {} diabetics",
                summary.positives, summary.negatives, summary.diabetics
            );
            out.push(summary);
        }
        Ok(out)
    }

    /// Skipgram pretraining over every individual's full, date-ordered code
    /// history.
    pub fn embed(&self) -> Result<EmbedSummary> {
        let timelines = self.timelines()?;
        let sequences: Vec<Vec<&str>> = timelines.iter().map(|t| t.codes().collect()).collect();
        let vocab = build_vocab(&sequences, self.config.embed_min_count)?;
        let encoded: Vec<Vec<usize>> = sequences.iter().map(|s| vocab.encode(s)).collect();
        let trained = train_skipgram(&encoded, &vocab, &self.config.embed)?;
        let mut buf = Vec::new();
        vocab.write_csv(&mut buf)?;
        write_text(&self.path("vocab.csv"), &String::from_utf8(buf).expect("utf-8 csv"))?;
        let mut buf = Vec::new();
        save_embeddings(&mut buf, &vocab, &trained.table)?;
        write_text(
            &self.path("embeddings.txt"),
            &String::from_utf8(buf).expect("utf-8 table"),
        )?;
        let summary = EmbedSummary {
            vocab_size: vocab.len(),
            dim: trained.table.dim(),
            sequences: encoded.len(),
            tokens: encoded.iter().map(Vec::len).sum(),
            epoch_losses: trained.epoch_losses,
        };
        write_text(&self.path("embed_summary.json"), &to_json(&summary)?)?;
        Ok(summary)
    }

    fn train_config(&self, model: ModelKind, gap: u32) -> TrainConfig {
        TrainConfig {
            model,
            gap_days: gap,
            ..self.config.train.clone()
        }
    }

    /// Cross-validates every configured model at every configured gap, then
    /// refreshes the top-level `aggregate.json` from all runs on disk.
    pub fn train(&self) -> Result<Vec<Aggregate>> {
        let vocab = self.vocab()?;
        let table = if self.config.pretrained {
            Some(self.embeddings(&vocab)?)
        } else {
            None
        };
        for &gap in &self.config.gaps {
            let cohort = self.cohort(gap)?;
            for &model in &self.config.models {
                let dir = self.run_dir(model, gap);
                let started = std::time::Instant::now();
                let exp = run_experiment(
                    &self.train_config(model, gap),
                    &cohort,
                    &vocab,
                    table.as_ref(),
                    Some(&dir),
                )?;
                let folds: Vec<FoldSummary> = exp
                    .folds
                    .iter()
                    .map(|f| FoldSummary {
                        fold: f.fold,
                        seed: f.seed,
                        test_size: f.test.len(),
                        auc: f.auc,
                        train_auc: f.train_auc,
                        loss_history: f.loss_history.clone(),
                    })
                    .collect();
                write_text(&dir.join("folds.json"), &to_json(&folds)?)?;
                info!(
                    "{} gap {gap}: mean AUC {:.4} ({:.1}s)",
                    model.label(),
                    exp.aggregate.mean_auc,
                    started.elapsed().as_secs_f64()
                );
            }
        }
        self.collect_aggregates()
    }

    /// Reads every `runs/*/aggregate.json`, sorted by gap then model, and
    /// writes the combined list.
    pub fn collect_aggregates(&self) -> Result<Vec<Aggregate>> {
        let runs = self.path("runs");
        let mut aggregates = Vec::new();
        if runs.is_dir() {
            for entry in fs::read_dir(&runs).map_err(|e| Error::io(&runs, e))? {
                let path = entry.map_err(|e| Error::io(&runs, e))?.path().join("aggregate.json");
                if path.is_file() {
                    aggregates.push(from_json::<Aggregate>(&path)?);
                }
            }
        }
        aggregates.sort_by_key(|a| (a.gap_days, a.model));
        write_text(&self.path("aggregate.json"), &to_json(&aggregates)?)?;
        Ok(aggregates)
    }

    fn fold_scores(&self, dir: &Path) -> Result<Vec<ScoredSet>> {
        let mut sets = Vec::new();
        for f in 0.. {
            let path = dir.join(format!("fold{f}")).join("scores.csv");
            if !path.is_file() {
                break;
            }
            sets.push(ScoredSet::read_csv(&read_text(&path)?)?);
        }
        if sets.is_empty() {
            return Err(Error::Insufficient(format!("no fold scores under {}", dir.display())));
        }
        Ok(sets)
    }

    /// Averages fold ROC and PR curves for every trained run and writes
    /// `roc.csv`, `pr.csv` and `eval.json` next to the fold directories.
    pub fn eval(&self) -> Result<Vec<EvalSummary>> {
        let mut out = Vec::new();
        for agg in self.collect_aggregates()? {
            let dir = self.run_dir(agg.model, agg.gap_days);
            let sets = self.fold_scores(&dir)?;
            let fold_aucs = sets.iter().map(roc_auc).collect::<Result<Vec<f64>>>()?;
            let rocs = sets.iter().map(roc_curve).collect::<Result<Vec<Curve>>>()?;
            let prs = sets.iter().map(pr_curve).collect::<Result<Vec<Curve>>>()?;
            let roc = mean_curves(&rocs, self.config.curve_grid)?;
            let pr = mean_curves(&prs, self.config.curve_grid)?;
            for (name, curve) in [("roc.csv", &roc), ("pr.csv", &pr)] {
                let mut buf = Vec::new();
                curve.write_csv(&mut buf)?;
                write_text(&dir.join(name), &String::from_utf8(buf).expect("utf-8 csv"))?;
            }
            let summary = EvalSummary {
                gap_days: agg.gap_days,
                model: agg.model,
                mean_auc: fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64,
                fold_aucs,
                mean_roc_area: trapezoid_area(&roc),
                mean_pr_area: trapezoid_area(&pr),
            };
            write_text(&dir.join("eval.json"), &to_json(&summary)?)?;
            out.push(summary);
        }
        if out.is_empty() {
            return Err(Error::Insufficient("no trained runs to evaluate".into()));
        }
        Ok(out)
    }

    /// Attention map of one held-out individual under the self-attentive
    /// model of `gap` (first configured gap by default). Without an id, the
    /// highest-scoring held-out positive is used.
    pub fn attend(&self, individual: Option<&str>, gap: Option<u32>) -> Result<AttendSummary> {
        let gap = gap.unwrap_or(self.config.gaps[0]);
        let dir = self.run_dir(ModelKind::Sa, gap);
        let sets = self.fold_scores(&dir)?;
        let wanted = individual
            .map(str::to_string)
            .or_else(|| self.config.attend_individual.clone());
        let mut chosen: Option<(usize, String, f64)> = None;
        for (f, set) in sets.iter().enumerate() {
            for i in 0..set.len() {
                let id = &set.ids[i];
                let hit = match &wanted {
                    Some(w) => w == id,
                    None => set.labels[i] == 1 && chosen.as_ref().is_none_or(|(_, _, s)| set.scores[i] > *s),
                };
                if hit {
                    chosen = Some((f, id.clone(), set.scores[i]));
                }
            }
        }
        let (fold, id, _) = chosen.ok_or_else(|| {
            Error::Insufficient(match &wanted {
                Some(w) => format!("{w} is not in any held-out fold of {}", run_name(ModelKind::Sa, gap)),
                None => "no held-out positive to map".into(),
            })
        })?;

        let ckpt = dir.join(format!("fold{fold}")).join("checkpoint");
        let file = fs::File::open(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        let params = ModelParams::load(BufReader::new(file))?;
        let sample = self
            .cohort(gap)?
            .into_iter()
            .find(|s| s.individual_id == id)
            .ok_or_else(|| Error::Malformed(format!("{id} missing from cohort_gap{gap}.jsonl")))?;
        let map = attention_of(&params, &self.vocab()?, &sample)?;
        let rows = attention_rows(&map, &self.descriptions())?;
        let csv = self.path(&format!("attention_{id}.csv"));
        let svg = self.path(&format!("attention_{id}.svg"));
        write_text(&csv, &attention_csv(&rows))?;
        let title = format!(
            "{id}: gap {gap} days, label {}, p = {:.3}",
            sample.label, map.probability
        );
        write_text(&svg, &attention_svg(&rows, &title))?;
        Ok(AttendSummary {
            individual_id: id,
            gap_days: gap,
            fold,
            label: sample.label,
            probability: map.probability,
            records: rows.len(),
            csv,
            svg,
        })
    }

    pub fn report(&self) -> Result<(Report, String)> {
        let path = self.path("aggregate.json");
        let aggregates: Vec<Aggregate> = from_json(&path)?;
        if aggregates.is_empty() {
            return Err(Error::Insufficient("aggregate.json lists no runs".into()));
        }
        let report = build_report(&aggregates);
        let text = render_table(&report);
        write_text(&self.path("report.txt"), &text)?;
        write_text(&self.path("report.json"), &report.to_json())?;
        Ok((report, text))
    }

    /// synth → cohort → embed → train → eval → report, plus an attention map
    /// when the self-attentive model was trained. Synthesis is skipped when
    /// the configuration points at an existing record file.
    pub fn run_all(&self) -> Result<(Report, String)> {
        self.persist_config()?;
        if self.config.records_path.is_none() {
            let summary = self.synth()?;
            info!("synth:\n{summary}");
        }
        self.build_cohorts()?;
        let e = self.embed()?;
        info!("embed: {} codes × {}", e.vocab_size, e.dim);
        self.train()?;
        self.eval()?;
        let report = self.report()?;
        if self.config.models.contains(&ModelKind::Sa) {
            let a = self.attend(None, None)?;
            info!("attention map for {} written to {}", a.individual_id, a.csv.display());
        }
        Ok(report)
    }
}
