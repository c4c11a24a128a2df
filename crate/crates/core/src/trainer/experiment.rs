use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{encode_samples, oversample_positives, score, select_samples, stratified_kfold, train_model, TrainConfig};
use crate::codevec::{CodeVocab, EmbeddingTable};
use crate::error::{Error, Result};
use crate::evalkit::{roc_auc, Aggregate, ScoredSet};
use crate::files::write_text;
use crate::records::CohortSample;
use crate::rng::{derived, mix};
use crate::seqmodel::ModelParams;

const PARTITION_STREAM: u64 = 0x5eed_f01d;
const OVERSAMPLE_STREAM: u64 = 0x0005_a3b1;

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    /// Cohort indices of the held-out samples.
    pub test: Vec<usize>,
    pub scores: ScoredSet,
    pub auc: f64,
    /// AUC of the same model on its own (de-duplicated) training split.
    pub train_auc: f64,
    pub loss_history: Vec<f64>,
    pub params: ModelParams,
    pub checkpoint: Option<PathBuf>,
}

/// Resolved configuration and seeds, persisted as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub partition_seed: u64,
    pub fold_seeds: Vec<u64>,
    pub samples: usize,
    pub positives: usize,
    pub vocab_size: usize,
    pub pretrained_embeddings: bool,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub manifest: RunManifest,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
}

/// Full k-fold protocol for one model and gap: partition, oversample each
/// training split, train, score the held-out split. With `run_dir`, writes
/// `run.json`, `fold<i>/checkpoint`, `fold<i>/scores.csv` and
/// `aggregate.json` there.
pub fn run_experiment(
    config: &TrainConfig,
    cohort: &[CohortSample],
    vocab: &CodeVocab,
    table: Option<&EmbeddingTable>,
    run_dir: Option<&Path>,
) -> Result<Experiment> {
    config.validate()?;
    if let Some(s) = cohort.iter().find(|s| s.gap_days != config.gap_days) {
        return Err(Error::Config(format!(
            "cohort sample {} has gap {} but the run is for gap {}",
            s.individual_id, s.gap_days, config.gap_days
        )));
    }
    let samples = select_samples(cohort, config.target_class);
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let partition_seed = mix(config.seed, PARTITION_STREAM);
    let folds = stratified_kfold(&labels, config.k_folds, partition_seed)?;
    let fold_seeds: Vec<u64> = (0..folds.len()).map(|f| mix(config.seed, f as u64 + 1)).collect();
    let manifest = RunManifest {
        config: config.clone(),
        partition_seed,
        fold_seeds: fold_seeds.clone(),
        samples: samples.len(),
        positives: labels.iter().filter(|&&l| l == 1).count(),
        vocab_size: vocab.len(),
        pretrained_embeddings: table.is_some(),
    };
    if let Some(dir) = run_dir {
        write_text(
            &dir.join("run.json"),
            &(serde_json::to_string_pretty(&manifest)? + "\n"),
        )?;
    }

    let encoded = encode_samples(&samples, vocab);
    let mut results = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let seed = fold_seeds[f];
        let mut rng = derived(seed, OVERSAMPLE_STREAM);
        let train = oversample_positives(&fold.train, &samples, config.oversample_ratio, &mut rng)?;
        let held_out: BTreeSet<usize> = fold.test.iter().copied().collect();
        assert!(
            train.iter().all(|i| !held_out.contains(i)),
            "fold {f}: held-out sample in the training multiset"
        );
        let out = train_model(config, &samples, &encoded, &train, vocab, table, seed)?;

        let scored = |idx: &[usize]| -> Result<ScoredSet> {
            let scores = idx
                .iter()
                .map(|&i| score(&out.params, &encoded[i]))
                .collect::<Result<Vec<f64>>>()?;
            ScoredSet::new(
                scores,
                idx.iter().map(|&i| samples[i].label).collect(),
                idx.iter().map(|&i| samples[i].individual_id.clone()).collect(),
            )
        };
        let test_scores = scored(&fold.test)?;
        let auc = roc_auc(&test_scores)?;
        let train_auc = roc_auc(&scored(&fold.train)?)?;

        let checkpoint = match run_dir {
            Some(dir) => {
                let fold_dir = dir.join(format!("fold{f}"));
                let mut csv = Vec::new();
                test_scores.write_csv(&mut csv)?;
                write_text(
                    &fold_dir.join("scores.csv"),
                    &String::from_utf8(csv).expect("ascii csv"),
                )?;
                let mut ckpt = Vec::new();
                out.params.save(&mut ckpt)?;
                let path = fold_dir.join("checkpoint");
                write_text(&path, &String::from_utf8(ckpt).expect("ascii checkpoint"))?;
                Some(path)
            }
            None => None,
        };
        results.push(FoldResult {
            fold: f,
            seed,
            test: fold.test.clone(),
            scores: test_scores,
            auc,
            train_auc,
            loss_history: out.loss_history,
            params: out.params,
            checkpoint,
        });
    }

    let aggregate = Aggregate::from_folds(config.gap_days, config.model, results.iter().map(|r| r.auc).collect());
    if let Some(dir) = run_dir {
        write_text(
            &dir.join("aggregate.json"),
            &(serde_json::to_string_pretty(&aggregate)? + "\n"),
        )?;
    }
    Ok(Experiment {
        manifest,
        folds: results,
        aggregate,
    })
}
