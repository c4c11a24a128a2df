//! Evaluation: ROC-AUC, ROC and PR curves, fold averaging, the per-gap AUC
//! report, and attention heatmap exports.

mod attention;
mod metrics;
mod report;

pub use attention::{attention_csv, attention_rows, attention_svg, AttentionRow};
pub use metrics::{
    interpolate, mean_curves, pr_curve, roc_auc, roc_curve, trapezoid_area, Curve, CurveKind, ScoredSet,
};
pub use report::{
    build_report, mean_sd, render_table, Aggregate, Comparison, Report, ReportCell, ReportRow, TrendCheck,
};
