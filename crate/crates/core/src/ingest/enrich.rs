//! Derived per-device and collaborative (pool-wide) features.

use std::collections::{BTreeMap, HashMap};

use crate::model::{FlowRecord, MS_PER_HOUR};

/// Fills `inter_arrival_time_milliseconds` from consecutive flow starts of
/// the same device. The earliest flow of each device gets no IAT.
pub fn compute_iat(flows: &mut [FlowRecord]) {
    let mut by_device: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, f) in flows.iter().enumerate() {
        by_device.entry(f.device_id).or_default().push(i);
    }
    for idx in by_device.values_mut() {
        idx.sort_by_key(|&i| (flows[i].flow_start_ms, i));
        let mut prev: Option<u64> = None;
        for &i in idx.iter() {
            let start = flows[i].flow_start_ms;
            flows[i].inter_arrival_time_milliseconds = prev.map(|p| start - p);
            prev = Some(start);
        }
    }
}

/// Wall-clock hour bucket of a timestamp.
pub fn hour_bucket(ms: u64) -> u64 {
    ms / MS_PER_HOUR
}

/// Fills the two collaborative counters. For a flow starting in hour `h`
/// the window is the complete hour `h - 1`; the counts tally flows from
/// every monitored device in that window sharing the flow's destination
/// port or destination network prefix. Empty history yields zero.
///
/// Flows without a destination port keep their existing port count (the
/// published files ship the counter precomputed and omit the port).
pub fn compute_pool_features(flows: &mut [FlowRecord]) {
    let mut port_counts: HashMap<(u64, u16), u32> = HashMap::new();
    let mut prefix_counts: HashMap<(u64, &str), u32> = HashMap::new();
    for f in flows.iter() {
        let h = hour_bucket(f.flow_start_ms);
        if let Some(p) = f.destination_port {
            *port_counts.entry((h, p)).or_default() += 1;
        }
        if let Some(pfx) = f.destination_network_prefix.as_deref() {
            *prefix_counts.entry((h, pfx)).or_default() += 1;
        }
    }
    let updates: Vec<(Option<u32>, u32)> = flows
        .iter()
        .map(|f| {
            let h = hour_bucket(f.flow_start_ms);
            let port = f.destination_port.map(|p| match h.checked_sub(1) {
                Some(prev) => port_counts.get(&(prev, p)).copied().unwrap_or(0),
                None => 0,
            });
            let ip = match (h.checked_sub(1), f.destination_network_prefix.as_deref()) {
                (Some(prev), Some(pfx)) => prefix_counts.get(&(prev, pfx)).copied().unwrap_or(0),
                _ => 0,
            };
            (port, ip)
        })
        .collect();
    for (f, (port, ip)) in flows.iter_mut().zip(updates) {
        if let Some(p) = port {
            f.same_dest_port_count_pool = p;
        }
        f.same_dest_ip_count_pool = ip;
    }
}
