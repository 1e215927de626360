//! Localization metrics, baselines and reports.

mod baseline;
mod metrics;
mod report;

pub use baseline::{baseline_mean_position, MeanPositionBaseline};
pub use metrics::{
    aggregate_mae, landmark_errors, linear_thresholds, pck_curve, pck_curve_per_landmark, ErrorMap, EvalConfig,
    MaeSummary,
};
pub use report::{
    build_report, emit_report, evaluate_model, evaluate_with, report_csv, report_markdown, EvalReport, ReportFormat,
    SampleEval,
};
