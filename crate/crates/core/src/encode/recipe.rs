use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::{IpTreatment, NumericTreatment, PipelineConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{FlowRecord, TcpFlags};

pub const RECIPE_SCHEMA_VERSION: u32 = 1;

/// Bucket name for categorical values never seen during fitting.
pub const OTHER: &str = "<OTHER>";

/// Source fields in encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    ProtocolIdentifier,
    FlowDuration,
    OctetDeltaCount,
    PacketDeltaCount,
    AvgPacketSize,
    FlowEndReason,
    TcpControlBits,
    NetworkClass,
    NetworkPrefix,
    InterArrivalTime,
    ReputationStatus,
    SameDestPortCount,
    SameDestIpCount,
    HasDnsRequest,
    DnsPctNumerical,
}

impl Field {
    pub const ORDER: [Field; 15] = [
        Field::ProtocolIdentifier,
        Field::FlowDuration,
        Field::OctetDeltaCount,
        Field::PacketDeltaCount,
        Field::AvgPacketSize,
        Field::FlowEndReason,
        Field::TcpControlBits,
        Field::NetworkClass,
        Field::NetworkPrefix,
        Field::InterArrivalTime,
        Field::ReputationStatus,
        Field::SameDestPortCount,
        Field::SameDestIpCount,
        Field::HasDnsRequest,
        Field::DnsPctNumerical,
    ];

    pub fn name(self) -> &'static str {
        use crate::ingest::ALL_COLUMNS as C;
        match self {
            Field::ProtocolIdentifier => C[7],
            Field::FlowDuration => C[8],
            Field::OctetDeltaCount => C[9],
            Field::PacketDeltaCount => C[10],
            Field::AvgPacketSize => C[11],
            Field::FlowEndReason => C[12],
            Field::TcpControlBits => C[13],
            Field::NetworkClass => C[14],
            Field::NetworkPrefix => C[15],
            Field::InterArrivalTime => C[16],
            Field::ReputationStatus => C[17],
            Field::SameDestPortCount => C[18],
            Field::SameDestIpCount => C[19],
            Field::HasDnsRequest => C[20],
            Field::DnsPctNumerical => C[21],
        }
    }

    fn is_numeric(self) -> bool {
        matches!(
            self,
            Field::FlowDuration
                | Field::OctetDeltaCount
                | Field::PacketDeltaCount
                | Field::AvgPacketSize
                | Field::InterArrivalTime
                | Field::SameDestPortCount
                | Field::SameDestIpCount
                | Field::DnsPctNumerical
        )
    }

    fn is_categorical(self) -> bool {
        matches!(
            self,
            Field::ProtocolIdentifier
                | Field::FlowEndReason
                | Field::NetworkClass
                | Field::NetworkPrefix
                | Field::ReputationStatus
        )
    }

    fn numeric(self, r: &FlowRecord) -> f64 {
        match self {
            Field::FlowDuration => r.flow_duration_milliseconds as f64,
            Field::OctetDeltaCount => r.octet_delta_count as f64,
            Field::PacketDeltaCount => r.packet_delta_count as f64,
            Field::AvgPacketSize => r.avg_packet_size,
            Field::InterArrivalTime => r.inter_arrival_time_milliseconds.unwrap_or(0) as f64,
            Field::SameDestPortCount => r.same_dest_port_count_pool as f64,
            Field::SameDestIpCount => r.same_dest_ip_count_pool as f64,
            Field::DnsPctNumerical => r.dns_host_pct_numerical_chars.unwrap_or(0.0),
            _ => unreachable!("not a numeric field"),
        }
    }

    fn category(self, r: &FlowRecord) -> String {
        match self {
            Field::ProtocolIdentifier => r.protocol_identifier.to_string(),
            Field::FlowEndReason => r.flow_end_reason.clone(),
            Field::NetworkClass => r.network_class_of_destination.clone(),
            Field::NetworkPrefix => r.destination_network_prefix.clone().unwrap_or_default(),
            Field::ReputationStatus => r.reputation_status.clone(),
            _ => unreachable!("not a categorical field"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnBlock {
    Numeric { field: Field, min: f64, max: f64 },
    Categorical { field: Field, vocabulary: Vec<String> },
    TcpBits,
    Flag { field: Field },
}

impl ColumnBlock {
    fn width(&self) -> usize {
        match self {
            ColumnBlock::Numeric { .. } | ColumnBlock::Flag { .. } => 1,
            ColumnBlock::Categorical { vocabulary, .. } => vocabulary.len() + 1,
            ColumnBlock::TcpBits => TcpFlags::NAMES.len(),
        }
    }
}

/// Frozen mapping from flow records to `[0,1]`-scaled feature vectors.
///
/// Vocabularies and min/max statistics come from the fitting flows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingRecipe {
    pub schema_version: u32,
    pub ip_treatment: IpTreatment,
    pub numeric_treatment: NumericTreatment,
    blocks: Vec<ColumnBlock>,
    columns: Vec<String>,
}

fn transform(t: NumericTreatment, v: f64) -> f64 {
    match t {
        NumericTreatment::AsIs => v,
        NumericTreatment::Log1p => v.max(0.0).ln_1p(),
    }
}

/// Learns vocabularies and scaling statistics from `training`.
pub fn fit_recipe(training: &[FlowRecord], config: &PipelineConfig) -> Result<EncodingRecipe> {
    if training.is_empty() {
        return Err(Error::Data("cannot fit an encoding recipe on zero flows".into()));
    }
    let mut blocks = Vec::new();
    for field in Field::ORDER {
        if field == Field::NetworkPrefix && config.ip_treatment == IpTreatment::Drop {
            continue;
        }
        let block = if field.is_numeric() {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for r in training {
                let v = transform(config.numeric_treatment, field.numeric(r));
                min = min.min(v);
                max = max.max(v);
            }
            ColumnBlock::Numeric { field, min, max }
        } else if field.is_categorical() {
            let vocabulary: BTreeSet<String> = training.iter().map(|r| field.category(r)).collect();
            ColumnBlock::Categorical { field, vocabulary: vocabulary.into_iter().collect() }
        } else if field == Field::TcpControlBits {
            ColumnBlock::TcpBits
        } else {
            ColumnBlock::Flag { field }
        };
        blocks.push(block);
    }
    let columns = blocks
        .iter()
        .flat_map(|b| -> Vec<String> {
            match b {
                ColumnBlock::Numeric { field, .. } | ColumnBlock::Flag { field } => {
                    vec![field.name().to_string()]
                }
                ColumnBlock::Categorical { field, vocabulary } => vocabulary
                    .iter()
                    .map(String::as_str)
                    .chain(std::iter::once(OTHER))
                    .map(|v| format!("{}={}", field.name(), v))
                    .collect(),
                ColumnBlock::TcpBits => TcpFlags::NAMES
                    .iter()
                    .map(|n| format!("{}.{}", Field::TcpControlBits.name(), n))
                    .collect(),
            }
        })
        .collect();
    Ok(EncodingRecipe {
        schema_version: RECIPE_SCHEMA_VERSION,
        ip_treatment: config.ip_treatment,
        numeric_treatment: config.numeric_treatment,
        blocks,
        columns,
    })
}

/// Encoded flows; row `i` corresponds to input flow `row_index[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub columns: Vec<String>,
    pub row_index: Vec<usize>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

impl EncodingRecipe {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn encode_into(&self, r: &FlowRecord, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let mut at = 0;
        for block in &self.blocks {
            match block {
                ColumnBlock::Numeric { field, min, max } => {
                    let v = transform(self.numeric_treatment, field.numeric(r));
                    out[at] = if max > min { ((v - min) / (max - min)).clamp(0.0, 1.0) } else { 0.0 };
                }
                ColumnBlock::Categorical { field, vocabulary } => {
                    let v = field.category(r);
                    let slot = vocabulary
                        .binary_search_by(|probe| probe.as_str().cmp(v.as_str()))
                        .unwrap_or(vocabulary.len());
                    out[at..at + vocabulary.len() + 1].fill(0.0);
                    out[at + slot] = 1.0;
                }
                ColumnBlock::TcpBits => {
                    for b in 0..TcpFlags::NAMES.len() {
                        out[at + b] = if r.tcp_control_bits.bit(b) { 1.0 } else { 0.0 };
                    }
                }
                ColumnBlock::Flag { field } => {
                    debug_assert_eq!(*field, Field::HasDnsRequest);
                    out[at] = if r.has_dns_request_from_pool { 1.0 } else { 0.0 };
                }
            }
            at += block.width();
        }
    }

    pub fn encode(&self, r: &FlowRecord) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.encode_into(r, &mut v);
        v
    }

    /// Encodes every flow; out-of-range numerics clip to `[0,1]` and
    /// unseen categories land in the OTHER column.
    pub fn apply(&self, flows: &[FlowRecord]) -> FeatureMatrix {
        let d = self.dim();
        let mut values = Matrix::zeros(flows.len(), d);
        for (i, r) in flows.iter().enumerate() {
            self.encode_into(r, values.row_mut(i));
        }
        FeatureMatrix { values, columns: self.columns.clone(), row_index: (0..flows.len()).collect() }
    }
}

pub fn apply_recipe(flows: &[FlowRecord], recipe: &EncodingRecipe) -> FeatureMatrix {
    recipe.apply(flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::sample_record;

    fn flows() -> Vec<FlowRecord> {
        (0..6)
            .map(|i| {
                let mut r = sample_record();
                r.octet_delta_count = 100 * (i + 1);
                r.packet_delta_count = 1;
                r.avg_packet_size = r.octet_delta_count as f64;
                r.destination_network_prefix = Some(format!("p{}", i % 4));
                r.flow_end_reason = if i % 2 == 0 { "idle".into() } else { "fin".into() };
                r
            })
            .collect()
    }

    #[test]
    fn drop_has_no_prefix_columns() {
        let recipe = fit_recipe(&flows(), &PipelineConfig::default()).unwrap();
        assert!(recipe.columns().iter().all(|c| !c.starts_with(Field::NetworkPrefix.name())));
    }

    #[test]
    fn prefix_one_hot_adds_vocab_plus_other() {
        let cfg = PipelineConfig { ip_treatment: IpTreatment::PrefixOneHot, ..Default::default() };
        let recipe = fit_recipe(&flows(), &cfg).unwrap();
        let n = recipe.columns().iter().filter(|c| c.starts_with(Field::NetworkPrefix.name())).count();
        assert_eq!(n, 5);
        let dropped = fit_recipe(&flows(), &PipelineConfig::default()).unwrap();
        assert_eq!(recipe.dim(), dropped.dim() + 5);
    }

    #[test]
    fn log1p_pre_scale_values() {
        assert_eq!(transform(NumericTreatment::Log1p, 0.0), 0.0);
        assert!((transform(NumericTreatment::Log1p, std::f64::consts::E - 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn training_rows_within_unit_interval() {
        let f = flows();
        let recipe = fit_recipe(&f, &PipelineConfig::default()).unwrap();
        let m = recipe.apply(&f);
        assert!(m.values.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(m.dim(), recipe.dim());
    }

    #[test]
    fn unseen_category_maps_to_other() {
        let f = flows();
        let recipe = fit_recipe(&f, &PipelineConfig::default()).unwrap();
        let mut t = f[0].clone();
        t.flow_end_reason = "never-seen".into();
        let v = recipe.encode(&t);
        let other = recipe.column_index(&format!("{}={}", Field::FlowEndReason.name(), OTHER)).unwrap();
        assert_eq!(v[other], 1.0);
        let idle = recipe.column_index(&format!("{}=idle", Field::FlowEndReason.name())).unwrap();
        assert_eq!(v[idle], 0.0);
    }

    #[test]
    fn oversized_octets_clip_to_one() {
        let f = flows();
        let recipe = fit_recipe(&f, &PipelineConfig::default()).unwrap();
        let mut t = f[5].clone();
        t.octet_delta_count *= 10;
        let j = recipe.column_index(Field::OctetDeltaCount.name()).unwrap();
        assert_eq!(recipe.encode(&t)[j], 1.0);
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let f = flows();
        let recipe = fit_recipe(&f, &PipelineConfig::default()).unwrap();
        let j = recipe.column_index(Field::FlowDuration.name()).unwrap();
        assert!(recipe.apply(&f).values.iter_rows().all(|r| r[j] == 0.0));
    }

    #[test]
    fn refit_is_identical() {
        let cfg = PipelineConfig { ip_treatment: IpTreatment::PrefixOneHot, ..Default::default() };
        assert_eq!(fit_recipe(&flows(), &cfg).unwrap(), fit_recipe(&flows(), &cfg).unwrap());
        assert!(fit_recipe(&[], &cfg).is_err());
    }
}
