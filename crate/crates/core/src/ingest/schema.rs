//! Reading and writing the published flow CSV layout.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FlowRecord, LabelClass, PartitionTag, SplitTime, TcpFlags};

pub const DEVICE_ID: &str = "device_id";
pub const FLOW_START_DAY: &str = "flow_start_day";
pub const FLOW_START_HOUR: &str = "flow_start_hour";
pub const FLOW_START_MINUTE: &str = "flow_start_minute";
pub const FLOW_START_SECOND: &str = "flow_start_second";
pub const FLOW_START_MILLISECOND: &str = "flow_start_millisecond";
pub const SOURCE_NETWORK_ID: &str = "source_network_id";
pub const PROTOCOL_IDENTIFIER: &str = "protocol_identifier";
pub const FLOW_DURATION: &str = "flow_duration_milliseconds";
pub const OCTET_DELTA_COUNT: &str = "octet_delta_count";
pub const PACKET_DELTA_COUNT: &str = "packet_delta_count";
pub const AVG_PACKET_SIZE: &str = "avg_packet_size";
pub const FLOW_END_REASON: &str = "flow_end_reason";
pub const TCP_CONTROL_BITS: &str = "tcp_control_bits";
pub const NETWORK_CLASS: &str = "network_class_of_destination_IP_address";
pub const NETWORK_PREFIX: &str = "network_prefix_of_destination_IP_address_anonimized";
pub const INTER_ARRIVAL_TIME: &str = "inter_arrival_time_milliseconds";
pub const REPUTATION_STATUS: &str = "reputation_status";
pub const SAME_DEST_PORT_COUNT: &str = "same_dest_port_count_pool";
pub const SAME_DEST_IP_COUNT: &str = "same_dest_IP_count_pool";
pub const HAS_DNS_REQUEST: &str = "has_DNS_request_from_pool";
pub const DNS_PCT_NUMERICAL: &str = "DNS_host_percentage_of_numerical_chars_from_pool";
pub const ACTUAL_LABEL: &str = "actual_label";
pub const PARTITION: &str = "partition";
/// Extension column, absent from the published files.
pub const DESTINATION_PORT: &str = "destination_port";

/// Identifier and raw-IPFIX columns every input must carry.
pub const MANDATORY_COLUMNS: [&str; 14] = [
    DEVICE_ID,
    FLOW_START_DAY,
    FLOW_START_HOUR,
    FLOW_START_MINUTE,
    FLOW_START_SECOND,
    FLOW_START_MILLISECOND,
    SOURCE_NETWORK_ID,
    PROTOCOL_IDENTIFIER,
    FLOW_DURATION,
    OCTET_DELTA_COUNT,
    PACKET_DELTA_COUNT,
    AVG_PACKET_SIZE,
    FLOW_END_REASON,
    TCP_CONTROL_BITS,
];

/// Output column order.
pub const ALL_COLUMNS: [&str; 25] = [
    DEVICE_ID,
    FLOW_START_DAY,
    FLOW_START_HOUR,
    FLOW_START_MINUTE,
    FLOW_START_SECOND,
    FLOW_START_MILLISECOND,
    SOURCE_NETWORK_ID,
    PROTOCOL_IDENTIFIER,
    FLOW_DURATION,
    OCTET_DELTA_COUNT,
    PACKET_DELTA_COUNT,
    AVG_PACKET_SIZE,
    FLOW_END_REASON,
    TCP_CONTROL_BITS,
    NETWORK_CLASS,
    NETWORK_PREFIX,
    INTER_ARRIVAL_TIME,
    REPUTATION_STATUS,
    SAME_DEST_PORT_COUNT,
    SAME_DEST_IP_COUNT,
    HAS_DNS_REQUEST,
    DNS_PCT_NUMERICAL,
    ACTUAL_LABEL,
    PARTITION,
    DESTINATION_PORT,
];

/// A data row keyed by column name.
#[derive(Debug, Clone, Default)]
pub struct RawFlowRow {
    cells: HashMap<&'static str, String>,
}

impl RawFlowRow {
    pub fn get(&self, column: &str) -> Option<&str> {
        self.cells.get(column).map(|s| s.trim()).filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone)]
pub struct Rejection {
    /// 1-based data-row index (the header is row 0).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    /// Rows whose pool features were empty and set to zero.
    pub pool_zero_filled: usize,
    #[serde(skip)]
    pub rejections: Vec<Rejection>,
    /// Optional columns that were missing from the header.
    pub absent_columns: Vec<String>,
}

impl ParseReport {
    pub fn has_column(&self, column: &str) -> bool {
        !self.absent_columns.iter().any(|c| c == column)
    }
}

#[derive(Debug)]
struct RowError(&'static str, String);

fn int_cell(row: &RawFlowRow, col: &'static str) -> std::result::Result<Option<u64>, RowError> {
    let Some(s) = row.get(col) else { return Ok(None) };
    if let Ok(v) = s.parse::<u64>() {
        return Ok(Some(v));
    }
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        if let Ok(v) = u64::from_str_radix(hex, 16) {
            return Ok(Some(v));
        }
    }
    // Spreadsheet exports often write integers as "12.0".
    match s.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(Some(f as u64)),
        _ => Err(RowError("unparsable numeric", col.to_string())),
    }
}

fn req_int(row: &RawFlowRow, col: &'static str) -> std::result::Result<u64, RowError> {
    int_cell(row, col)?.ok_or(RowError("missing required field", col.to_string()))
}

fn narrow<T: TryFrom<u64>>(v: u64, col: &'static str) -> std::result::Result<T, RowError> {
    T::try_from(v).map_err(|_| RowError("value out of range", col.to_string()))
}

fn float_cell(row: &RawFlowRow, col: &'static str) -> std::result::Result<Option<f64>, RowError> {
    match row.get(col) {
        None => Ok(None),
        Some(s) => match s.parse::<f64>() {
            Ok(f) if f.is_finite() => Ok(Some(f)),
            _ => Err(RowError("unparsable numeric", col.to_string())),
        },
    }
}

fn bool_cell(row: &RawFlowRow, col: &'static str) -> std::result::Result<bool, RowError> {
    match row.get(col).map(|s| s.to_ascii_lowercase()) {
        None => Ok(false),
        Some(s) => match s.as_str() {
            "1" | "1.0" | "true" | "t" | "yes" => Ok(true),
            "0" | "0.0" | "false" | "f" | "no" => Ok(false),
            _ => Err(RowError("unparsable boolean", col.to_string())),
        },
    }
}

fn text_cell(row: &RawFlowRow, col: &'static str) -> String {
    row.get(col).unwrap_or("").to_string()
}

fn row_to_record(row: &RawFlowRow, pool_filled: &mut bool) -> std::result::Result<FlowRecord, RowError> {
    let device_id = match int_cell(row, DEVICE_ID)? {
        Some(v) => narrow(v, DEVICE_ID)?,
        None => return Err(RowError("missing device identity", DEVICE_ID.to_string())),
    };
    let start = SplitTime {
        day: req_int(row, FLOW_START_DAY)?,
        hour: req_int(row, FLOW_START_HOUR)?,
        minute: req_int(row, FLOW_START_MINUTE)?,
        second: req_int(row, FLOW_START_SECOND)?,
        millisecond: req_int(row, FLOW_START_MILLISECOND)?,
    };
    if start.hour >= 24 || start.minute >= 60 || start.second >= 60 || start.millisecond >= 1000 {
        return Err(RowError("timestamp field out of range", FLOW_START_HOUR.to_string()));
    }
    let avg_packet_size = float_cell(row, AVG_PACKET_SIZE)?
        .ok_or(RowError("missing required field", AVG_PACKET_SIZE.to_string()))?;
    let tcp = req_int(row, TCP_CONTROL_BITS)?;

    let mut pool = |col: &'static str| -> std::result::Result<u32, RowError> {
        match int_cell(row, col)? {
            Some(v) => narrow(v, col),
            None => {
                *pool_filled = true;
                Ok(0)
            }
        }
    };
    let same_dest_port_count_pool = pool(SAME_DEST_PORT_COUNT)?;
    let same_dest_ip_count_pool = pool(SAME_DEST_IP_COUNT)?;

    let actual_label = match row.get(ACTUAL_LABEL) {
        None => LabelClass::AssumedBenign,
        Some(s) => LabelClass::parse(s).ok_or(RowError("unknown label", s.to_string()))?,
    };
    let partition = match row.get(PARTITION) {
        None => None,
        Some(s) => Some(PartitionTag::parse(s).ok_or(RowError("unknown partition", s.to_string()))?),
    };

    Ok(FlowRecord {
        device_id,
        source_network_id: narrow(req_int(row, SOURCE_NETWORK_ID)?, SOURCE_NETWORK_ID)?,
        flow_start_ms: start.to_ms(),
        protocol_identifier: narrow(req_int(row, PROTOCOL_IDENTIFIER)?, PROTOCOL_IDENTIFIER)?,
        flow_duration_milliseconds: req_int(row, FLOW_DURATION)?,
        octet_delta_count: req_int(row, OCTET_DELTA_COUNT)?,
        packet_delta_count: req_int(row, PACKET_DELTA_COUNT)?,
        avg_packet_size,
        flow_end_reason: text_cell(row, FLOW_END_REASON),
        tcp_control_bits: TcpFlags(narrow(tcp, TCP_CONTROL_BITS)?),
        network_class_of_destination: text_cell(row, NETWORK_CLASS),
        destination_network_prefix: row.get(NETWORK_PREFIX).map(str::to_string),
        destination_port: int_cell(row, DESTINATION_PORT)?
            .map(|v| narrow(v, DESTINATION_PORT))
            .transpose()?,
        inter_arrival_time_milliseconds: int_cell(row, INTER_ARRIVAL_TIME)?,
        reputation_status: text_cell(row, REPUTATION_STATUS),
        same_dest_port_count_pool,
        same_dest_ip_count_pool,
        has_dns_request_from_pool: bool_cell(row, HAS_DNS_REQUEST)?,
        dns_host_pct_numerical_chars: float_cell(row, DNS_PCT_NUMERICAL)?,
        actual_label,
        partition,
    })
}

/// Parses a flow CSV. Malformed data rows are counted in the report and
/// skipped; only header problems abort.
pub fn parse_dataset<R: Read>(source: R) -> Result<(Vec<FlowRecord>, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(source);
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema("empty input: no header row".into()));
    }

    let mut index: Vec<(&'static str, usize)> = Vec::new();
    let mut absent = Vec::new();
    for &col in ALL_COLUMNS.iter() {
        match header.iter().position(|h| h.eq_ignore_ascii_case(col)) {
            Some(i) => index.push((col, i)),
            None => absent.push(col),
        }
    }
    let missing: Vec<&str> =
        MANDATORY_COLUMNS.iter().copied().filter(|c| absent.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing mandatory columns: {}", missing.join(", "))));
    }

    let mut report = ParseReport {
        absent_columns: absent.iter().map(|s| s.to_string()).collect(),
        ..Default::default()
    };
    let mut records = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row_no = i + 1;
        report.rows_read += 1;
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                reject(&mut report, row_no, "malformed csv row", &e.to_string());
                continue;
            }
        };
        let mut raw = RawFlowRow::default();
        for &(col, idx) in &index {
            if let Some(v) = rec.get(idx) {
                raw.cells.insert(col, v.to_string());
            }
        }
        let mut pool_filled = false;
        match row_to_record(&raw, &mut pool_filled) {
            Ok(r) => {
                if pool_filled {
                    report.pool_zero_filled += 1;
                }
                records.push(r);
            }
            Err(RowError(reason, detail)) => reject(&mut report, row_no, reason, &detail),
        }
    }
    Ok((records, report))
}

fn reject(report: &mut ParseReport, row: usize, reason: &str, detail: &str) {
    log::debug!("rejected row {row}: {reason} ({detail})");
    report.rows_rejected += 1;
    *report.rejected_by_reason.entry(reason.to_string()).or_default() += 1;
    report.rejections.push(Rejection { row, reason: format!("{reason}: {detail}") });
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

/// Writes records in the published layout plus the `destination_port`
/// extension column.
pub fn write_dataset<W: Write>(records: &[FlowRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(ALL_COLUMNS)?;
    for r in records {
        let t = SplitTime::from_ms(r.flow_start_ms);
        w.write_record([
            r.device_id.to_string(),
            t.day.to_string(),
            t.hour.to_string(),
            t.minute.to_string(),
            t.second.to_string(),
            t.millisecond.to_string(),
            r.source_network_id.to_string(),
            r.protocol_identifier.to_string(),
            r.flow_duration_milliseconds.to_string(),
            r.octet_delta_count.to_string(),
            r.packet_delta_count.to_string(),
            r.avg_packet_size.to_string(),
            r.flow_end_reason.clone(),
            r.tcp_control_bits.0.to_string(),
            r.network_class_of_destination.clone(),
            opt(&r.destination_network_prefix),
            opt(&r.inter_arrival_time_milliseconds),
            r.reputation_status.clone(),
            r.same_dest_port_count_pool.to_string(),
            r.same_dest_ip_count_pool.to_string(),
            u8::from(r.has_dns_request_from_pool).to_string(),
            opt(&r.dns_host_pct_numerical_chars),
            r.actual_label.as_str().to_string(),
            r.partition.map_or_else(String::new, |p| p.as_str().to_string()),
            opt(&r.destination_port),
        ])?;
    }
    w.flush()?;
    Ok(())
}
