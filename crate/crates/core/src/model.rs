//! Domain types shared by every pipeline stage.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const MS_PER_SECOND: u64 = 1_000;
pub const MS_PER_MINUTE: u64 = 60 * MS_PER_SECOND;
pub const MS_PER_HOUR: u64 = 60 * MS_PER_MINUTE;
pub const MS_PER_DAY: u64 = 24 * MS_PER_HOUR;

/// Ground-truth label of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelClass {
    AssumedBenign,
    BeingScannedByNmap,
    ExecutingCryptomining,
}

impl LabelClass {
    pub const ATTACKS: [LabelClass; 2] =
        [LabelClass::BeingScannedByNmap, LabelClass::ExecutingCryptomining];

    pub fn is_attack(self) -> bool {
        self != LabelClass::AssumedBenign
    }

    /// Canonical dataset spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            LabelClass::AssumedBenign => "assumed benign",
            LabelClass::BeingScannedByNmap => "being scanned by Nmap",
            LabelClass::ExecutingCryptomining => "is executing cryptomining",
        }
    }

    /// Short identifier used in report keys and file names.
    pub fn slug(self) -> &'static str {
        match self {
            LabelClass::AssumedBenign => "benign",
            LabelClass::BeingScannedByNmap => "nmap",
            LabelClass::ExecutingCryptomining => "cryptomining",
        }
    }

    /// Lenient parse: accepts the canonical spelling, the slug, and the
    /// common variants found in exported copies of the dataset.
    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        if norm.is_empty() {
            return None;
        }
        if norm.contains("nmap") || norm.contains("scan") {
            Some(LabelClass::BeingScannedByNmap)
        } else if norm.contains("crypto") || norm.contains("mining") {
            Some(LabelClass::ExecutingCryptomining)
        } else if norm.contains("benign") {
            Some(LabelClass::AssumedBenign)
        } else {
            None
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartitionTag {
    Training,
    Validation,
    Test,
}

impl PartitionTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionTag::Training => "training",
            PartitionTag::Validation => "validation",
            PartitionTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_lowercase();
        if norm.starts_with("train") || norm == "trn" {
            Some(PartitionTag::Training)
        } else if norm.starts_with("valid") || norm == "vld" {
            Some(PartitionTag::Validation)
        } else if norm.starts_with("test") || norm == "tst" {
            Some(PartitionTag::Test)
        } else {
            None
        }
    }
}

impl fmt::Display for PartitionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// IPFIX tcpControlBits restricted to the six classic flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;

    /// Flag names in bit order, used for the encoded column names.
    pub const NAMES: [&'static str; 6] = ["fin", "syn", "rst", "psh", "ack", "urg"];

    pub fn bit(self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn is_valid(self) -> bool {
        self.0 < 64
    }
}

/// Split representation of a flow start time as it appears in the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitTime {
    pub day: u64,
    pub hour: u64,
    pub minute: u64,
    pub second: u64,
    pub millisecond: u64,
}

impl SplitTime {
    pub fn from_ms(ms: u64) -> Self {
        SplitTime {
            day: ms / MS_PER_DAY,
            hour: ms % MS_PER_DAY / MS_PER_HOUR,
            minute: ms % MS_PER_HOUR / MS_PER_MINUTE,
            second: ms % MS_PER_MINUTE / MS_PER_SECOND,
            millisecond: ms % MS_PER_SECOND,
        }
    }

    /// Milliseconds since the dataset's reference origin (day 0, 00:00).
    pub fn to_ms(self) -> u64 {
        self.day * MS_PER_DAY
            + self.hour * MS_PER_HOUR
            + self.minute * MS_PER_MINUTE
            + self.second * MS_PER_SECOND
            + self.millisecond
    }
}

/// One enriched outbound IPFIX record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub device_id: u32,
    pub source_network_id: u32,
    /// Milliseconds since the capture's reference origin.
    pub flow_start_ms: u64,
    pub protocol_identifier: u8,
    pub flow_duration_milliseconds: u64,
    pub octet_delta_count: u64,
    pub packet_delta_count: u64,
    pub avg_packet_size: f64,
    pub flow_end_reason: String,
    pub tcp_control_bits: TcpFlags,
    pub network_class_of_destination: String,
    pub destination_network_prefix: Option<String>,
    /// Not part of the published column set; needed to recompute the port
    /// pool feature and for port-based sanitization.
    pub destination_port: Option<u16>,
    pub inter_arrival_time_milliseconds: Option<u64>,
    pub reputation_status: String,
    pub same_dest_port_count_pool: u32,
    pub same_dest_ip_count_pool: u32,
    pub has_dns_request_from_pool: bool,
    pub dns_host_pct_numerical_chars: Option<f64>,
    pub actual_label: LabelClass,
    pub partition: Option<PartitionTag>,
}

/// Identity of the controlled lab site, the only place attacks may occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabSite {
    pub network_id: u32,
    pub device_id: u32,
}

impl Default for LabSite {
    fn default() -> Self {
        LabSite { network_id: 5, device_id: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroPackets,
    OctetMismatch { expected: f64, actual: u64 },
    InvalidAvgPacketSize(f64),
    LabIdentityMismatch { device_id: u32, source_network_id: u32 },
    AttackOutsideLab { source_network_id: u32 },
    DnsPctWithoutRequest,
    DnsPctOutOfRange(f64),
    TcpBitsOutOfRange(u8),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroPackets => f.write_str("packet_delta_count ≥ 1"),
            Violation::OctetMismatch { expected, actual } => write!(
                f,
                "avg_packet_size × packet_delta_count = {expected} disagrees with octet_delta_count {actual}"
            ),
            Violation::InvalidAvgPacketSize(v) => {
                write!(f, "avg_packet_size must be finite and non-negative, got {v}")
            }
            Violation::LabIdentityMismatch { device_id, source_network_id } => write!(
                f,
                "lab device/network mismatch (device_id {device_id}, source_network_id {source_network_id})"
            ),
            Violation::AttackOutsideLab { source_network_id } => {
                write!(f, "attack label outside lab (source_network_id {source_network_id})")
            }
            Violation::DnsPctWithoutRequest => {
                f.write_str("dns_host_pct_numerical_chars present without a DNS request")
            }
            Violation::DnsPctOutOfRange(v) => {
                write!(f, "dns_host_pct_numerical_chars {v} outside [0,100]")
            }
            Violation::TcpBitsOutOfRange(v) => write!(f, "tcp_control_bits {v} exceeds 6 bits"),
        }
    }
}

/// Checks every record invariant against the default lab site.
pub fn validate_record(r: &FlowRecord) -> Vec<Violation> {
    validate_record_with(r, LabSite::default())
}

pub fn validate_record_with(r: &FlowRecord, lab: LabSite) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.packet_delta_count == 0 {
        out.push(Violation::ZeroPackets);
    }
    if !r.avg_packet_size.is_finite() || r.avg_packet_size < 0.0 {
        out.push(Violation::InvalidAvgPacketSize(r.avg_packet_size));
    } else {
        let expected = r.avg_packet_size * r.packet_delta_count as f64;
        if (expected - r.octet_delta_count as f64).abs() > 0.5 {
            out.push(Violation::OctetMismatch { expected, actual: r.octet_delta_count });
        }
    }
    if (r.device_id == lab.device_id) != (r.source_network_id == lab.network_id) {
        out.push(Violation::LabIdentityMismatch {
            device_id: r.device_id,
            source_network_id: r.source_network_id,
        });
    }
    if r.actual_label.is_attack() && r.source_network_id != lab.network_id {
        out.push(Violation::AttackOutsideLab { source_network_id: r.source_network_id });
    }
    if let Some(pct) = r.dns_host_pct_numerical_chars {
        if !r.has_dns_request_from_pool {
            out.push(Violation::DnsPctWithoutRequest);
        }
        if !(0.0..=100.0).contains(&pct) {
            out.push(Violation::DnsPctOutOfRange(pct));
        }
    }
    if !r.tcp_control_bits.is_valid() {
        out.push(Violation::TcpBitsOutOfRange(r.tcp_control_bits.0));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalLabel {
    Benign,
    Malicious,
}

impl FinalLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalLabel::Benign => "benign",
            FinalLabel::Malicious => "malicious",
        }
    }
}

/// Filter-2 outcome for a flow that Filter 1 found infrequent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub cluster: usize,
    pub distance: f64,
    pub tanh_score: f64,
    pub known: bool,
}

/// Per-flow decision of the two-step detector.
///
/// Frequent flows carry no cluster fields; the type makes any other shape
/// unrepresentable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    flow_index: usize,
    mse: f64,
    cluster: Option<ClusterVerdict>,
}

impl Verdict {
    pub fn frequent(flow_index: usize, mse: f64) -> Self {
        Verdict { flow_index, mse, cluster: None }
    }

    pub fn infrequent(flow_index: usize, mse: f64, cluster: ClusterVerdict) -> Self {
        Verdict { flow_index, mse, cluster: Some(cluster) }
    }

    pub fn flow_index(&self) -> usize {
        self.flow_index
    }

    pub fn mse(&self) -> f64 {
        self.mse
    }

    pub fn is_frequent(&self) -> bool {
        self.cluster.is_none()
    }

    pub fn cluster(&self) -> Option<&ClusterVerdict> {
        self.cluster.as_ref()
    }

    pub fn known(&self) -> Option<bool> {
        self.cluster.map(|c| c.known)
    }

    pub fn final_label(&self) -> FinalLabel {
        match self.cluster {
            Some(c) if !c.known => FinalLabel::Malicious,
            _ => FinalLabel::Benign,
        }
    }

    /// Score swept for precision-recall: 0 for frequent flows, tanh of the
    /// cluster distance otherwise.
    pub fn anomaly_score(&self) -> f64 {
        self.cluster.map_or(0.0, |c| c.tanh_score)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample_record() -> FlowRecord {
        FlowRecord {
            device_id: 2,
            source_network_id: 1,
            flow_start_ms: 3 * MS_PER_HOUR + 17,
            protocol_identifier: 6,
            flow_duration_milliseconds: 250,
            octet_delta_count: 1200,
            packet_delta_count: 3,
            avg_packet_size: 400.0,
            flow_end_reason: "idle".into(),
            tcp_control_bits: TcpFlags(TcpFlags::ACK | TcpFlags::PSH),
            network_class_of_destination: "A".into(),
            destination_network_prefix: Some("pfx-1".into()),
            destination_port: Some(443),
            inter_arrival_time_milliseconds: Some(20),
            reputation_status: "0".into(),
            same_dest_port_count_pool: 4,
            same_dest_ip_count_pool: 2,
            has_dns_request_from_pool: true,
            dns_host_pct_numerical_chars: Some(12.5),
            actual_label: LabelClass::AssumedBenign,
            partition: None,
        }
    }

    #[test]
    fn consistent_record_is_ok() {
        assert!(validate_record(&sample_record()).is_empty());
    }

    #[test]
    fn zero_packets_flagged() {
        let mut r = sample_record();
        r.packet_delta_count = 0;
        let v = validate_record(&r);
        assert!(v.contains(&Violation::ZeroPackets));
        assert!(v.iter().any(|x| x.to_string() == "packet_delta_count ≥ 1"));
    }

    #[test]
    fn attack_outside_lab_flagged() {
        let mut r = sample_record();
        r.source_network_id = 2;
        r.actual_label = LabelClass::ExecutingCryptomining;
        let v = validate_record(&r);
        assert_eq!(v, vec![Violation::AttackOutsideLab { source_network_id: 2 }]);
        assert!(v[0].to_string().starts_with("attack label outside lab"));
    }

    #[test]
    fn lab_identity_and_dns_rules() {
        let mut r = sample_record();
        r.device_id = 7;
        r.has_dns_request_from_pool = false;
        let v = validate_record(&r);
        assert!(v.iter().any(|x| matches!(x, Violation::LabIdentityMismatch { .. })));
        assert!(v.contains(&Violation::DnsPctWithoutRequest));
    }

    #[test]
    fn octet_slack_is_half_a_byte() {
        let mut r = sample_record();
        r.avg_packet_size = 400.1;
        assert!(validate_record(&r).is_empty());
        r.avg_packet_size = 400.2;
        assert!(matches!(validate_record(&r)[0], Violation::OctetMismatch { .. }));
    }

    #[test]
    fn split_time_round_trips() {
        for ms in [0, 1, 86_399_999, 86_400_000, 20 * MS_PER_DAY + 13 * MS_PER_HOUR + 59_999] {
            assert_eq!(SplitTime::from_ms(ms).to_ms(), ms);
        }
    }

    #[test]
    fn label_parse_variants() {
        assert_eq!(LabelClass::parse("assumed benign"), Some(LabelClass::AssumedBenign));
        assert_eq!(LabelClass::parse("Being scanned by Nmap"), Some(LabelClass::BeingScannedByNmap));
        assert_eq!(LabelClass::parse("is_executing_cryptomining"), Some(LabelClass::ExecutingCryptomining));
        assert_eq!(LabelClass::parse(""), None);
        assert_eq!(LabelClass::parse("weird"), None);
    }

    #[test]
    fn verdict_state_machine() {
        let f = Verdict::frequent(0, 0.001);
        assert!(f.is_frequent());
        assert!(f.cluster().is_none() && f.known().is_none());
        assert_eq!(f.final_label(), FinalLabel::Benign);

        let cv = ClusterVerdict { cluster: 3, distance: 2.0, tanh_score: 2f64.tanh(), known: false };
        let i = Verdict::infrequent(1, 0.2, cv);
        assert!(!i.is_frequent());
        assert_eq!(i.final_label(), FinalLabel::Malicious);
        let known = Verdict::infrequent(1, 0.2, ClusterVerdict { known: true, ..cv });
        assert_eq!(known.final_label(), FinalLabel::Benign);
    }
}
