//! Cleansing, training-set sanitization and chronological partitioning.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FlowRecord, LabSite, PartitionTag, MS_PER_DAY, MS_PER_HOUR};

pub const WARMUP_HOURS: u64 = 2;

pub const DROP_MISSING_IAT: &str = "missing IAT";
pub const DROP_WARMUP: &str = "warm-up window";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_in: usize,
    pub rows_dropped_by_reason: BTreeMap<String, usize>,
    /// The warm-up drop is applied to the first hours of the whole capture,
    /// not per device.
    pub warmup_scope: String,
}

/// Drops flows lacking an IAT and every flow in the first two recorded
/// hours of the capture (measured from the start of the earliest flow's
/// hour). Records are otherwise passed through unchanged.
pub fn preprocess(flows: Vec<FlowRecord>) -> (Vec<FlowRecord>, PreprocessReport) {
    let mut report = PreprocessReport {
        rows_in: flows.len(),
        warmup_scope: "global".into(),
        ..Default::default()
    };
    let Some(first) = flows.iter().map(|f| f.flow_start_ms).min() else {
        return (flows, report);
    };
    let warmup_end = (first / MS_PER_HOUR + WARMUP_HOURS) * MS_PER_HOUR;
    let mut kept = Vec::with_capacity(flows.len());
    for f in flows {
        let reason = if f.flow_start_ms < warmup_end {
            Some(DROP_WARMUP)
        } else if f.inter_arrival_time_milliseconds.is_none() {
            Some(DROP_MISSING_IAT)
        } else {
            None
        };
        match reason {
            Some(r) => *report.rows_dropped_by_reason.entry(r.to_string()).or_default() += 1,
            None => kept.push(f),
        }
    }
    (kept, report)
}

/// Removes training flows whose destination port occurs fewer than
/// `min_port_count` times across the pooled training set. Flows with an
/// unknown port are kept. Returns the survivors and the removed count.
pub fn sanitize_training(
    flows: Vec<FlowRecord>,
    min_port_count: usize,
) -> Result<(Vec<FlowRecord>, usize)> {
    let mut counts: HashMap<u16, usize> = HashMap::new();
    for p in flows.iter().filter_map(|f| f.destination_port) {
        *counts.entry(p).or_default() += 1;
    }
    let before = flows.len();
    let kept: Vec<FlowRecord> = flows
        .into_iter()
        .filter(|f| f.destination_port.is_none_or(|p| counts[&p] >= min_port_count))
        .collect();
    if before > 0 && kept.is_empty() {
        return Err(Error::Data(format!(
            "sanitization would empty training set (min_port_count {min_port_count})"
        )));
    }
    let removed = before - kept.len();
    Ok((kept, removed))
}

/// Number of whole days assigned to training, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDays {
    pub training: u64,
    pub validation: u64,
    pub test: u64,
}

impl SplitDays {
    pub fn new(training: u64, validation: u64, test: u64) -> Self {
        SplitDays { training, validation, test }
    }

    pub fn total(&self) -> u64 {
        self.training + self.validation + self.test
    }
}

impl Default for SplitDays {
    fn default() -> Self {
        SplitDays::new(13, 3, 5)
    }
}

impl std::str::FromStr for SplitDays {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u64> = s
            .split(',')
            .map(|p| p.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("invalid split '{s}', expected e.g. 13,3,5")))?;
        match parts.as_slice() {
            [a, b, c] if *a > 0 && *b > 0 && *c > 0 => Ok(SplitDays::new(*a, *b, *c)),
            _ => Err(Error::Config(format!("invalid split '{s}', expected three positive day counts"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Partitions {
    pub training: Vec<FlowRecord>,
    pub validation: Vec<FlowRecord>,
    pub test: Vec<FlowRecord>,
    pub dropped_by_reason: BTreeMap<String, usize>,
}

impl Partitions {
    pub fn dropped(&self) -> usize {
        self.dropped_by_reason.values().sum()
    }

    fn admit(&mut self, mut f: FlowRecord, tag: PartitionTag, lab: LabSite) {
        let is_lab = f.source_network_id == lab.network_id;
        let reason = match tag {
            PartitionTag::Test if !is_lab => Some("non-lab flow in test window"),
            PartitionTag::Training | PartitionTag::Validation if is_lab => {
                Some("lab flow outside test window")
            }
            PartitionTag::Training | PartitionTag::Validation if f.actual_label.is_attack() => {
                Some("attack label outside test window")
            }
            _ => None,
        };
        if let Some(r) = reason {
            *self.dropped_by_reason.entry(r.to_string()).or_default() += 1;
            return;
        }
        f.partition = Some(tag);
        match tag {
            PartitionTag::Training => self.training.push(f),
            PartitionTag::Validation => self.validation.push(f),
            PartitionTag::Test => self.test.push(f),
        }
    }

    fn sort(&mut self) {
        for part in [&mut self.training, &mut self.validation, &mut self.test] {
            part.sort_by_key(|f| f.flow_start_ms);
        }
    }
}

/// Splits flows into consecutive day windows counted from the first
/// captured day, then applies the data-selection rules: the test window
/// keeps only lab flows; training and validation keep only non-lab,
/// assumed-benign flows. Flows after the last window are dropped.
pub fn partition_chronologically(
    flows: Vec<FlowRecord>,
    split: SplitDays,
    lab: LabSite,
) -> Result<Partitions> {
    let (Some(first), Some(last)) = (
        flows.iter().map(|f| f.flow_start_ms / MS_PER_DAY).min(),
        flows.iter().map(|f| f.flow_start_ms / MS_PER_DAY).max(),
    ) else {
        return Err(Error::Data("cannot partition an empty capture".into()));
    };
    let span = last - first + 1;
    if span < split.total() {
        return Err(Error::Data(format!(
            "capture spans {span} days, split requires {}",
            split.total()
        )));
    }
    let mut out = Partitions::default();
    for f in flows {
        let day = f.flow_start_ms / MS_PER_DAY - first;
        let tag = if day < split.training {
            PartitionTag::Training
        } else if day < split.training + split.validation {
            PartitionTag::Validation
        } else if day < split.total() {
            PartitionTag::Test
        } else {
            *out.dropped_by_reason.entry("beyond final window".into()).or_default() += 1;
            continue;
        };
        out.admit(f, tag, lab);
    }
    out.sort();
    Ok(out)
}

/// Uses each record's own `partition` column instead of day windows. The
/// same data-selection rules apply.
pub fn partition_from_tags(flows: Vec<FlowRecord>, lab: LabSite) -> Partitions {
    let mut out = Partitions::default();
    for f in flows {
        match f.partition {
            Some(tag) => out.admit(f, tag, lab),
            None => *out.dropped_by_reason.entry("untagged".into()).or_default() += 1,
        }
    }
    out.sort();
    out
}
