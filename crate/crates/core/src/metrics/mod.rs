//! Segment-based F1, the leave-one-out experiment matrix, and report tables.

pub mod f1;
pub mod matrix;
pub mod report;

pub use f1::{f1_segment, ClassScore, ConfusionCounts, F1Report, DEFAULT_THRESHOLD};
pub use matrix::{
    evaluate, run_ablation, run_matrix, run_scenario, scenario_id, AblationScores, ClassSubset, ExperimentConfig,
    MatrixResult, MethodScores, ScenarioReport,
};
pub use report::{
    emit_report, parse_report_csv, report_csv, report_markdown, ReportFormat, ReportRow, OVERALL, REPORT_COLUMNS,
};
