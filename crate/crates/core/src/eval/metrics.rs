use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FinalLabel, LabelClass, Verdict};

/// Confusion counts for one attack scenario. Negatives are benign flows
/// only; flows of other attack classes are out of scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: LabelClass,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ScenarioOutcome {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Undefined ratios (0/0) stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn in_scope(label: LabelClass, scenario: LabelClass) -> Option<bool> {
    if label == scenario {
        Some(true)
    } else if label == LabelClass::AssumedBenign {
        Some(false)
    } else {
        None
    }
}

/// Counts outcomes from predicted final labels.
pub fn confusion_from_labels(
    predicted: &[FinalLabel],
    actual: &[LabelClass],
    scenario: LabelClass,
) -> Result<ScenarioOutcome> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch { expected: actual.len(), actual: predicted.len() });
    }
    if !scenario.is_attack() {
        return Err(Error::Config("scenario must be an attack class".into()));
    }
    let mut o = ScenarioOutcome { scenario, tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&p, &a) in predicted.iter().zip(actual) {
        let Some(positive) = in_scope(a, scenario) else { continue };
        let flagged = p == FinalLabel::Malicious;
        match (positive, flagged) {
            (true, true) => o.tp += 1,
            (true, false) => o.fn_ += 1,
            (false, true) => o.fp += 1,
            (false, false) => o.tn += 1,
        }
    }
    Ok(o)
}

pub fn confusion(verdicts: &[Verdict], actual: &[LabelClass], scenario: LabelClass) -> Result<ScenarioOutcome> {
    let predicted: Vec<FinalLabel> = verdicts.iter().map(Verdict::final_label).collect();
    confusion_from_labels(&predicted, actual, scenario)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn scenario_metrics(o: &ScenarioOutcome) -> ScenarioMetrics {
    let precision = ratio(o.tp, o.tp + o.fp);
    let recall = ratio(o.tp, o.tp + o.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ScenarioMetrics { fpr: ratio(o.fp, o.fp + o.tn), precision, recall, f1 }
}

/// Arithmetic mean; any undefined input makes the result undefined.
pub fn macro_average(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for v in values {
        sum += (*v)?;
    }
    Some(sum / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Scores and positive flags restricted to the scenario's scope.
fn scoped(scores: &[f64], actual: &[LabelClass], scenario: LabelClass) -> Result<Vec<(f64, bool)>> {
    if scores.len() != actual.len() {
        return Err(Error::DimensionMismatch { expected: actual.len(), actual: scores.len() });
    }
    let mut v: Vec<(f64, bool)> = scores
        .iter()
        .zip(actual)
        .filter_map(|(&s, &a)| in_scope(a, scenario).map(|p| (s, p)))
        .collect();
    if v.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Data("anomaly scores contain NaN".into()));
    }
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(v)
}

/// One point per distinct score, thresholds descending; a flow is flagged
/// when its score is at least the threshold.
pub fn pr_curve(scores: &[f64], actual: &[LabelClass], scenario: LabelClass) -> Result<Vec<PrPoint>> {
    let v = scoped(scores, actual, scenario)?;
    let positives = v.iter().filter(|(_, p)| *p).count();
    if positives == 0 {
        return Err(Error::Data(format!("no {} flows to evaluate", scenario.slug())));
    }
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < v.len() {
        let t = v[i].0;
        while i < v.len() && v[i].0 == t {
            if v[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// Average precision `Σ (Rₙ − Rₙ₋₁)·Pₙ` over the descending threshold
/// sweep, tied scores taken together.
pub fn auprc(scores: &[f64], actual: &[LabelClass], scenario: LabelClass) -> Result<f64> {
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for p in pr_curve(scores, actual, scenario)? {
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use LabelClass::{AssumedBenign as Benign, BeingScannedByNmap as Nmap, ExecutingCryptomining as Cryptomining};

    const NMAP: LabelClass = Nmap;

    fn outcome(scenario: LabelClass, tp: u64, fn_: u64, fp: u64, tn: u64) -> ScenarioOutcome {
        ScenarioOutcome { scenario, tp, fp, tn, fn_ }
    }

    #[test]
    fn published_counts_reproduce_kpis() {
        let n = scenario_metrics(&outcome(Nmap, 3032, 48, 315, 22157));
        let c = scenario_metrics(&outcome(Cryptomining, 1703, 0, 315, 22157));
        let close = |v: Option<f64>, want: f64| (v.unwrap() - want).abs() <= 0.001;
        assert!(close(n.precision, 0.906) && close(n.recall, 0.984) && close(n.f1, 0.944) && close(n.fpr, 0.014));
        assert!(close(c.precision, 0.844) && close(c.recall, 1.000) && close(c.f1, 0.915) && close(c.fpr, 0.014));
        assert!(close(macro_average(&[n.f1, c.f1]), 0.929));
    }

    #[test]
    fn macro_average_rules() {
        assert!((macro_average(&[Some(0.944), Some(0.915)]).unwrap() - 0.9295).abs() < 1e-12);
        assert!((macro_average(&[Some(0.827), Some(0.855)]).unwrap() - 0.841).abs() < 1e-12);
        assert_eq!(macro_average(&[Some(0.3)]), Some(0.3));
        assert_eq!(macro_average(&[Some(0.3), None]), None);
    }

    #[test]
    fn undefined_precision_is_absent() {
        let m = scenario_metrics(&outcome(Nmap, 0, 4, 0, 10));
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn confusion_scopes_negatives_to_benign() {
        let pred = [FinalLabel::Malicious, FinalLabel::Benign, FinalLabel::Malicious, FinalLabel::Malicious];
        let act = [Nmap, Nmap, Benign, Cryptomining];
        let o = confusion_from_labels(&pred, &act, NMAP).unwrap();
        assert_eq!((o.tp, o.fn_, o.fp, o.tn), (1, 1, 1, 0));
        assert_eq!(o.total(), 3);
        assert!(confusion_from_labels(&pred[..2], &act, NMAP).is_err());
    }

    #[test]
    fn all_benign_predictions() {
        let pred = [FinalLabel::Benign; 3];
        let o = confusion_from_labels(&pred, &[Nmap, Benign, Benign], NMAP).unwrap();
        assert_eq!((o.tp, o.fp), (0, 0));
    }

    #[test]
    fn hand_example_ap() {
        let ap = auprc(&[0.9, 0.8, 0.1], &[Nmap, Benign, Nmap], NMAP).unwrap();
        assert!((ap - 0.8333333333).abs() < 1e-9);
    }

    #[test]
    fn separated_scores_give_one() {
        assert_eq!(auprc(&[0.9, 0.8, 0.2, 0.1], &[Nmap, Nmap, Benign, Benign], NMAP).unwrap(), 1.0);
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let ap = auprc(&[0.5; 4], &[Nmap, Benign, Benign, Benign], NMAP).unwrap();
        assert_eq!(ap, 0.25);
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(auprc(&[0.1, 0.2], &[Benign, Benign], NMAP).is_err());
    }

    proptest! {
        #[test]
        fn confusion_partitions_scope(labels in proptest::collection::vec(0u8..3, 0..60), flags in proptest::collection::vec(any::<bool>(), 60)) {
            let act: Vec<LabelClass> = labels.iter().map(|l| [Benign, Nmap, Cryptomining][*l as usize]).collect();
            let pred: Vec<FinalLabel> = flags[..act.len()].iter().map(|&f| if f { FinalLabel::Malicious } else { FinalLabel::Benign }).collect();
            let o = confusion_from_labels(&pred, &act, NMAP).unwrap();
            let in_scope = act.iter().filter(|a| **a != Cryptomining).count() as u64;
            prop_assert_eq!(o.total(), in_scope);
            prop_assert_eq!(o.tp + o.fn_, act.iter().filter(|a| **a == Nmap).count() as u64);
        }

        #[test]
        fn ap_in_unit_interval(scores in proptest::collection::vec(0.0f64..1.0, 1..80), pos in proptest::collection::vec(any::<bool>(), 80)) {
            let mut act: Vec<LabelClass> = pos[..scores.len()].iter().map(|&p| if p { Nmap } else { Benign }).collect();
            act[0] = Nmap;
            let ap = auprc(&scores, &act, NMAP).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
        }
    }
}
