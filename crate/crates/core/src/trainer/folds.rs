use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{CohortSample, ComplicationClass};
use crate::rng::{seeded, Rng};

/// One cross-validation split, both sides sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold partition. Positives and negatives are shuffled
/// separately and dealt round-robin; negatives continue the rotation where
/// positives stopped so fold sizes stay within one of each other.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k_folds must be at least 2, got {k}")));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    if pos.len() < k || neg.len() < k {
        return Err(Error::Insufficient(format!(
            "{} positives and {} negatives cannot fill {k} folds",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = seeded(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0usize; labels.len()];
    for (i, &s) in pos.iter().enumerate() {
        fold_of[s] = i % k;
    }
    for (j, &s) in neg.iter().enumerate() {
        fold_of[s] = (pos.len() + j) % k;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}

/// Duplicates training positives until positives/negatives reaches `ratio`.
///
/// The positive target is split across complication classes in proportion to
/// their counts (largest remainder). Within a class every sample gets the
/// same number of full copies and the remainder is drawn without
/// replacement. Negatives pass through untouched. The result is sorted.
pub fn oversample_positives(
    train: &[usize],
    samples: &[CohortSample],
    ratio: f64,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "oversample ratio must lie in (0, 1], got {ratio}"
        )));
    }
    let mut groups: BTreeMap<Option<ComplicationClass>, Vec<usize>> = BTreeMap::new();
    let mut negatives = Vec::new();
    for &i in train {
        if samples[i].is_positive() {
            groups.entry(samples[i].complication_class).or_default().push(i);
        } else {
            negatives.push(i);
        }
    }
    let n_pos: usize = groups.values().map(Vec::len).sum();
    if n_pos == 0 {
        return Err(Error::Insufficient("no positives in the training split".into()));
    }
    let target = (ratio * negatives.len() as f64).ceil() as usize;
    if n_pos >= target {
        let mut out = train.to_vec();
        out.sort_unstable();
        return Ok(out);
    }

    // largest-remainder apportionment, ties to the earlier class
    let quotas: Vec<f64> = groups
        .values()
        .map(|g| target as f64 * g.len() as f64 / n_pos as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = target - counts.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }

    let mut out = negatives;
    for (members, &count) in groups.values().zip(&counts) {
        let copies = count / members.len();
        for _ in 0..copies {
            out.extend_from_slice(members);
        }
        let rest = count - copies * members.len();
        out.extend(sample_indices(rng, members.len(), rest).into_iter().map(|j| members[j]));
    }
    out.sort_unstable();
    Ok(out)
}
