use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::seqmodel::ModelKind;

/// Cross-validated AUC of one model at one gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub gap_days: u32,
    pub model: ModelKind,
    pub mean_auc: f64,
    /// Sample standard deviation over folds; absent for typed-in values.
    pub sd_auc: Option<f64>,
    pub fold_aucs: Vec<f64>,
}

impl Aggregate {
    pub fn from_folds(gap_days: u32, model: ModelKind, fold_aucs: Vec<f64>) -> Self {
        let (mean, sd) = mean_sd(&fold_aucs);
        Aggregate {
            gap_days,
            model,
            mean_auc: mean,
            sd_auc: Some(sd),
            fold_aucs,
        }
    }
}

/// Mean and sample (n − 1) standard deviation; SD is 0 for a single value.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub mean_auc: f64,
    pub sd_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub gap_days: u32,
    pub cells: BTreeMap<ModelKind, ReportCell>,
}

/// Whether a model's mean AUC is non-increasing as the gap grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub model: ModelKind,
    pub non_increasing: bool,
    /// `(shorter gap, longer gap)` pairs where AUC went up.
    pub deviations: Vec<(u32, u32)>,
}

/// Whether the attentive model beats the baseline at a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub gap_days: u32,
    pub margin: f64,
    pub sa_higher: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub models: Vec<ModelKind>,
    pub rows: Vec<ReportRow>,
    pub trend: Vec<TrendCheck>,
    pub comparisons: Vec<Comparison>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }
}

/// Lays aggregates out as one row per gap and one column per model. Models
/// without any value are left out.
pub fn build_report(aggregates: &[Aggregate]) -> Report {
    let mut rows: BTreeMap<u32, BTreeMap<ModelKind, ReportCell>> = BTreeMap::new();
    for a in aggregates {
        rows.entry(a.gap_days).or_default().insert(
            a.model,
            ReportCell {
                mean_auc: a.mean_auc,
                sd_auc: a.sd_auc,
            },
        );
    }
    let models: Vec<ModelKind> = [ModelKind::Sa, ModelKind::Baseline]
        .into_iter()
        .filter(|m| aggregates.iter().any(|a| a.model == *m))
        .collect();

    let trend = models
        .iter()
        .map(|&model| {
            let series: Vec<(u32, f64)> = rows
                .iter()
                .filter_map(|(g, cells)| cells.get(&model).map(|c| (*g, c.mean_auc)))
                .collect();
            let deviations: Vec<(u32, u32)> = series
                .windows(2)
                .filter(|w| w[1].1 > w[0].1)
                .map(|w| (w[0].0, w[1].0))
                .collect();
            TrendCheck {
                model,
                non_increasing: deviations.is_empty(),
                deviations,
            }
        })
        .collect();

    let comparisons = rows
        .iter()
        .filter_map(|(g, cells)| {
            let sa = cells.get(&ModelKind::Sa)?;
            let base = cells.get(&ModelKind::Baseline)?;
            let margin = sa.mean_auc - base.mean_auc;
            Some(Comparison {
                gap_days: *g,
                margin,
                sa_higher: margin > 0.0,
            })
        })
        .collect();

    Report {
        models,
        rows: rows
            .into_iter()
            .map(|(gap_days, cells)| ReportRow { gap_days, cells })
            .collect(),
        trend,
        comparisons,
    }
}

fn cell_text(cell: Option<&ReportCell>) -> String {
    match cell {
        None => "-".into(),
        Some(ReportCell { mean_auc, sd_auc: None }) => format!("{mean_auc:.2}"),
        Some(ReportCell {
            mean_auc,
            sd_auc: Some(sd),
        }) => format!("{mean_auc:.3} ± {sd:.3}"),
    }
}

/// Plain-text table of mean AUC per gap and model, followed by the trend
/// and comparison notes.
pub fn render_table(report: &Report) -> String {
    let mut header = vec!["Time Gap".to_string()];
    header.extend(report.models.iter().map(|m| m.label().to_string()));
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.gap_days.to_string()];
            cells.extend(report.models.iter().map(|m| cell_text(row.cells.get(m))));
            cells
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header[c])
                .chain(body.iter().map(|r| &r[c]))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = String::from("Mean AUC over cross-validation folds\n\n");
    out.push_str(&line(&header));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    if !report.trend.is_empty() {
        out.push('\n');
    }
    for t in &report.trend {
        if t.non_increasing {
            let _ = writeln!(out, "{}: AUC non-increasing with gap", t.model.label());
        } else {
            let devs: Vec<String> = t.deviations.iter().map(|(a, b)| format!("{a}->{b}")).collect();
            let _ = writeln!(out, "{}: AUC rises with gap at {}", t.model.label(), devs.join(", "));
        }
    }
    for c in &report.comparisons {
        let _ = writeln!(
            out,
            "gap {}: LSTM+SA - LSTM = {:+.3}{}",
            c.gap_days,
            c.margin,
            if c.sa_higher { "" } else { " (baseline ahead)" }
        );
    }
    out
}
