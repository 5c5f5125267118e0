use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{auprc, confusion, macro_average, pr_curve, scenario_metrics, PrPoint, ScenarioOutcome};
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::filter2::ThresholdMode;
use crate::model::{FlowRecord, LabelClass, Verdict};
use crate::pipeline::{CadeshModel, StageTimings};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub outcome: ScenarioOutcome,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Absent when the test set holds no flows of this class.
    pub auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSnapshot {
    pub th_frequent: f64,
    pub pctl_frequent: f64,
    pub mode: String,
    pub global_tanh_threshold: Option<f64>,
    pub pctl_known: Option<f64>,
    pub per_cluster_thresholds: Option<Vec<f64>>,
}

/// Test flows per actual label, split by the two filter decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub frequent: u64,
    pub known: u64,
    pub unknown: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub test_flows: usize,
    pub scenarios: Vec<ScenarioReport>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub decisions: BTreeMap<String, DecisionCounts>,
    pub thresholds: ThresholdSnapshot,
    pub k_star: usize,
    pub training_epochs: usize,
    pub config: PipelineConfig,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Evaluation output that is not part of the report itself.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub verdicts: Vec<Verdict>,
    pub pr_curves: Vec<(LabelClass, Vec<PrPoint>)>,
}

pub fn build_report(model: &CadeshModel, verdicts: &[Verdict], actual: &[LabelClass]) -> Result<Evaluation> {
    let scores: Vec<f64> = verdicts.iter().map(Verdict::anomaly_score).collect();
    let mut scenarios = Vec::new();
    let mut pr_curves = Vec::new();
    for scenario in LabelClass::ATTACKS {
        let outcome = confusion(verdicts, actual, scenario)?;
        let m = scenario_metrics(&outcome);
        let has_positive = outcome.tp + outcome.fn_ > 0;
        let ap = if has_positive { Some(auprc(&scores, actual, scenario)?) } else { None };
        if has_positive {
            pr_curves.push((scenario, pr_curve(&scores, actual, scenario)?));
        }
        scenarios.push(ScenarioReport {
            scenario: scenario.slug().to_string(),
            outcome,
            fpr: m.fpr,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            auprc: ap,
        });
    }
    let avg = |f: fn(&ScenarioReport) -> Option<f64>| macro_average(&scenarios.iter().map(f).collect::<Vec<_>>());
    let macro_avg = MacroMetrics {
        fpr: avg(|s| s.fpr),
        precision: avg(|s| s.precision),
        recall: avg(|s| s.recall),
        f1: avg(|s| s.f1),
        auprc: avg(|s| s.auprc),
    };

    let mut decisions: BTreeMap<String, DecisionCounts> = BTreeMap::new();
    for (v, a) in verdicts.iter().zip(actual) {
        let e = decisions.entry(a.slug().to_string()).or_default();
        match v.known() {
            None => e.frequent += 1,
            Some(true) => e.known += 1,
            Some(false) => e.unknown += 1,
        }
    }

    let mode = model.threshold_mode();
    let thresholds = ThresholdSnapshot {
        th_frequent: model.filter1.th_frequent,
        pctl_frequent: model.filter1.pctl_frequent,
        mode: match mode {
            ThresholdMode::PerCluster => "per-cluster".into(),
            ThresholdMode::GlobalTanh(_) => "global-tanh".into(),
        },
        global_tanh_threshold: model.config.global_tanh_threshold,
        pctl_known: model.filter2.pctl_known,
        per_cluster_thresholds: model.filter2.per_cluster_thresholds.clone(),
    };

    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        test_flows: verdicts.len(),
        scenarios,
        macro_avg,
        decisions,
        thresholds,
        k_star: model.filter2.k_star,
        training_epochs: model.filter1.history.epochs(),
        config: model.config.clone(),
        timings: StageTimings::default(),
    };
    Ok(Evaluation { report, verdicts: verdicts.to_vec(), pr_curves })
}

/// Runs detection on `test` and scores it against the ground truth.
pub fn evaluate(model: &CadeshModel, test: &[FlowRecord]) -> Result<Evaluation> {
    let mut timings = StageTimings::default();
    let verdicts = timings.record("detect", || model.detect(test))?;
    let actual: Vec<LabelClass> = test.iter().map(|r| r.actual_label).collect();
    let mut ev = build_report(model, &verdicts, &actual)?;
    ev.report.timings = timings;
    Ok(ev)
}

impl EvalReport {
    pub fn scenario(&self, label: LabelClass) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.scenario == label.slug())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
