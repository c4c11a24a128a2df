use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores with their binary labels and owners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub ids: Vec<String>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() || scores.len() != ids.len() {
            return Err(Error::Metric(
                "scores, labels and ids must be non-empty and aligned".into(),
            ));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metric("non-finite score".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        Ok(ScoredSet { scores, labels, ids })
    }

    /// Anonymous set; ids are the positions.
    pub fn from_pairs(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let ids = (0..scores.len()).map(|i| i.to_string()).collect();
        ScoredSet::new(scores, labels, ids)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "individual_id,score,label")?;
        for ((id, s), l) in self.ids.iter().zip(&self.scores).zip(&self.labels) {
            writeln!(out, "{id},{s},{l}")?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let (mut scores, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parsed = match f.as_slice() {
                [id, s, l] => s.parse::<f64>().ok().zip(l.parse::<u8>().ok()).map(|x| (id, x)),
                _ => None,
            };
            let (id, (s, l)) = parsed.ok_or_else(|| Error::Malformed(format!("scores line {}", i + 1)))?;
            ids.push(id.to_string());
            scores.push(s);
            labels.push(l);
        }
        ScoredSet::new(scores, labels, ids)
    }

    /// `(score, label)` sorted by descending score.
    fn descending(&self) -> Vec<(f64, u8)> {
        let mut v: Vec<(f64, u8)> = self.scores.iter().copied().zip(self.labels.iter().copied()).collect();
        v.sort_by(|a, b| b.0.total_cmp(&a.0));
        v
    }
}

fn require_both_classes(set: &ScoredSet) -> Result<(usize, usize)> {
    let (p, n) = (set.positives(), set.negatives());
    if p == 0 || n == 0 {
        return Err(Error::Metric(format!(
            "need both classes, got {p} positives and {n} negatives"
        )));
    }
    Ok((p, n))
}

/// Mann–Whitney AUC with average ranks for ties: the probability that a
/// random positive outscores a random negative, ties counting one half.
pub fn roc_auc(set: &ScoredSet) -> Result<f64> {
    let (p, n) = require_both_classes(set)?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    // twice the rank sum keeps tied average ranks integral
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share (i+1 + j+1)/2
        let twice_avg = (i + 1 + j + 1) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| set.labels[k] == 1).count() as u128;
        rank_sum_x2 += twice_avg * pos_in_tie;
        i = j + 1;
    }
    let (p128, n128) = (p as u128, n as u128);
    let u_x2 = rank_sum_x2 - p128 * (p128 + 1);
    Ok(u_x2 as f64 / (2 * p128 * n128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// `(false positive rate, true positive rate)`.
    Roc,
    /// `(recall, precision)`.
    Pr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y")?;
        for (x, y) in &self.points {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }
}

/// One point per distinct threshold, scanned from the highest score down,
/// starting at (0,0) and ending at (1,1).
pub fn roc_curve(set: &ScoredSet) -> Result<Curve> {
    let (p, n) = require_both_classes(set)?;
    let sorted = set.descending();
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    Ok(Curve {
        kind: CurveKind::Roc,
        points,
    })
}

/// Precision and recall at each distinct threshold, highest score first.
/// No synthetic point at recall 0.
pub fn pr_curve(set: &ScoredSet) -> Result<Curve> {
    let p = set.positives();
    if p == 0 {
        return Err(Error::Metric("precision-recall needs at least one positive".into()));
    }
    let sorted = set.descending();
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / p as f64, tp as f64 / (tp + fp) as f64));
    }
    Ok(Curve {
        kind: CurveKind::Pr,
        points,
    })
}

pub fn trapezoid_area(curve: &Curve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Value of a curve at `x`: linear interpolation between the last point at
/// or before `x` and the first point after it. Outside the curve's x-range
/// the nearest end value is used.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let after = points.partition_point(|p| p.0 <= x);
    if after == 0 {
        return points[0].1;
    }
    let (x0, y0) = points[after - 1];
    match points.get(after) {
        Some(&(x1, y1)) if x1 > x0 => y0 + (y1 - y0) * (x - x0) / (x1 - x0),
        _ => y0,
    }
}

/// Vertical averaging onto a uniform grid of `grid` points over `[0, 1]`.
pub fn mean_curves(curves: &[Curve], grid: usize) -> Result<Curve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Metric("no curves to average".into()))?;
    if curves.iter().any(|c| c.kind != first.kind) {
        return Err(Error::Metric("cannot average ROC and PR curves together".into()));
    }
    if grid < 2 {
        return Err(Error::Metric("grid needs at least two points".into()));
    }
    if curves.iter().any(|c| c.points.is_empty()) {
        return Err(Error::Metric("empty curve".into()));
    }
    let points = (0..grid)
        .map(|g| {
            let x = g as f64 / (grid - 1) as f64;
            let mut ys: Vec<f64> = curves.iter().map(|c| interpolate(&c.points, x)).collect();
            // summing in sorted order makes the mean independent of input order
            ys.sort_by(f64::total_cmp);
            (x, ys.iter().sum::<f64>() / ys.len() as f64)
        })
        .collect();
    Ok(Curve {
        kind: first.kind,
        points,
    })
}
