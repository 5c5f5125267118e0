//! Dataset ingestion: CSV parsing, feature enrichment, cleansing and
//! partitioning.

mod clean;
mod enrich;
mod schema;

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{FlowRecord, LabSite};

pub use clean::{
    partition_chronologically, partition_from_tags, preprocess, sanitize_training, Partitions,
    PreprocessReport, SplitDays, DROP_MISSING_IAT, DROP_WARMUP, WARMUP_HOURS,
};
pub use enrich::{compute_iat, compute_pool_features, hour_bucket};
pub use schema::{
    parse_dataset, write_dataset, ParseReport, RawFlowRow, Rejection, ALL_COLUMNS,
    DESTINATION_PORT, INTER_ARRIVAL_TIME, MANDATORY_COLUMNS,
};

/// How derived features present in the input are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recompute {
    /// Recompute IAT when the column is absent, and the pool counters when
    /// a destination-port column is present.
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOptions {
    pub split: SplitDays,
    /// Use the input's own `partition` column instead of day windows.
    pub use_partition_column: bool,
    pub sanitize_min_port_count: usize,
    pub recompute: Recompute,
    pub lab: LabSite,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            split: SplitDays::default(),
            use_partition_column: false,
            sanitize_min_port_count: 10,
            recompute: Recompute::Auto,
            lab: LabSite::default(),
        }
    }
}

/// Single-object summary of one ingestion run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CleansingReport {
    pub rows_read: usize,
    pub rows_dropped_by_reason: BTreeMap<String, usize>,
    pub sanitized_count: usize,
    pub sanitize_min_port_count: usize,
    pub pool_zero_filled: usize,
    pub warmup_scope: String,
    pub recomputed_iat: bool,
    pub recomputed_pool_features: bool,
    pub training_rows: usize,
    pub validation_rows: usize,
    pub test_rows: usize,
}

impl CleansingReport {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Runs parse, enrichment, cleansing, partitioning and training
/// sanitization end to end.
pub fn ingest<R: Read>(source: R, opts: &IngestOptions) -> Result<(Partitions, CleansingReport)> {
    let (records, parse_report) = parse_dataset(source)?;
    let mut report = CleansingReport {
        rows_read: parse_report.rows_read,
        rows_dropped_by_reason: parse_report.rejected_by_reason.clone(),
        sanitize_min_port_count: opts.sanitize_min_port_count,
        pool_zero_filled: parse_report.pool_zero_filled,
        ..Default::default()
    };
    let (parts, rest) = prepare(records, &parse_report, opts)?;
    merge_counts(&mut report.rows_dropped_by_reason, &rest.rows_dropped_by_reason);
    report.warmup_scope = rest.warmup_scope;
    report.recomputed_iat = rest.recomputed_iat;
    report.recomputed_pool_features = rest.recomputed_pool;
    report.sanitized_count = rest.sanitized;
    report.training_rows = parts.training.len();
    report.validation_rows = parts.validation.len();
    report.test_rows = parts.test.len();
    Ok((parts, report))
}

struct PrepareSummary {
    rows_dropped_by_reason: BTreeMap<String, usize>,
    warmup_scope: String,
    recomputed_iat: bool,
    recomputed_pool: bool,
    sanitized: usize,
}

fn merge_counts(into: &mut BTreeMap<String, usize>, from: &BTreeMap<String, usize>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

fn prepare(
    mut records: Vec<FlowRecord>,
    parse_report: &ParseReport,
    opts: &IngestOptions,
) -> Result<(Partitions, PrepareSummary)> {
    let (iat, pool) = match opts.recompute {
        Recompute::Always => (true, true),
        Recompute::Never => (false, false),
        Recompute::Auto => (
            !parse_report.has_column(INTER_ARRIVAL_TIME),
            parse_report.has_column(DESTINATION_PORT),
        ),
    };
    if iat {
        compute_iat(&mut records);
    }
    if pool {
        compute_pool_features(&mut records);
    }
    let (records, pre) = preprocess(records);
    let mut parts = if opts.use_partition_column {
        partition_from_tags(records, opts.lab)
    } else {
        partition_chronologically(records, opts.split, opts.lab)?
    };
    let mut dropped = pre.rows_dropped_by_reason;
    merge_counts(&mut dropped, &parts.dropped_by_reason);
    let (training, sanitized) =
        sanitize_training(std::mem::take(&mut parts.training), opts.sanitize_min_port_count)?;
    parts.training = training;
    Ok((
        parts,
        PrepareSummary {
            rows_dropped_by_reason: dropped,
            warmup_scope: pre.warmup_scope,
            recomputed_iat: iat,
            recomputed_pool: pool,
            sanitized,
        },
    ))
}
