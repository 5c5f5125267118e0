//! Confusion accounting, precision-recall metrics, the hyperparameter grid
//! and the training-size sweep.

mod grid;
mod metrics;
mod report;

pub use grid::{most_recent_split, run_grid, sensitivity_sweep, GridAxes, GridEntry, SweepRow};
pub use metrics::{
    auprc, confusion, confusion_from_labels, macro_average, pr_curve, scenario_metrics, PrPoint, ScenarioMetrics,
    ScenarioOutcome,
};
pub use report::{
    build_report, evaluate, DecisionCounts, EvalReport, Evaluation, MacroMetrics, ScenarioReport, ThresholdSnapshot,
    REPORT_SCHEMA_VERSION,
};
