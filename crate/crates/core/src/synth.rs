//! Seeded synthetic multi-home flow generator.
//!
//! Homes share one device type. Frequent behaviors are dense and tight,
//! rare-benign behaviors are sparse locally but shared across homes, and
//! attack behaviors run only on the lab device during configured windows.
//! Pool counters and inter-arrival times come from the ingest enrichment
//! functions, exactly as for captured data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::encode::fit_recipe;
use crate::error::{Error, Result};
use crate::filter2::kmeans_fit;
use crate::ingest::{compute_iat, compute_pool_features, SplitDays};
use crate::model::{FlowRecord, LabSite, LabelClass, PartitionTag, TcpFlags, MS_PER_DAY, MS_PER_HOUR};
use crate::stats::{derive_seed, percentile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BehaviorKind {
    Frequent,
    RareBenign,
    ScanLike,
    MiningLike,
}

impl BehaviorKind {
    pub fn label(self) -> LabelClass {
        match self {
            BehaviorKind::Frequent | BehaviorKind::RareBenign => LabelClass::AssumedBenign,
            BehaviorKind::ScanLike => LabelClass::BeingScannedByNmap,
            BehaviorKind::MiningLike => LabelClass::ExecutingCryptomining,
        }
    }

    pub fn is_attack(self) -> bool {
        self.label().is_attack()
    }
}

/// Mean and standard deviation of a truncated normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub sd: f64,
}

const fn spread(mean: f64, sd: f64) -> Spread {
    Spread { mean, sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PortSet {
    Fixed(Vec<u16>),
    /// Uniform over an inclusive range.
    Range(u16, u16),
}

/// Hours `[start_hour, end_hour)` of one capture day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub day: u32,
    pub start_hour: u32,
    pub end_hour: u32,
}

impl Window {
    fn contains(&self, day: u32, hour: u32) -> bool {
        day == self.day && (self.start_hour..self.end_hour).contains(&hour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    pub name: String,
    pub kind: BehaviorKind,
    /// Expected flows per device-hour while active.
    pub rate: f64,
    /// Homes (network ids) running the behavior; empty means every
    /// non-lab home plus the lab. Ignored for attacks.
    pub homes: Vec<u32>,
    /// Active windows; empty means always.
    pub windows: Vec<Window>,
    pub protocol: u8,
    pub ports: PortSet,
    pub prefixes: Vec<String>,
    pub network_class: String,
    pub flow_end_reason: String,
    pub tcp_flags: u8,
    pub reputation: String,
    pub octets: Spread,
    pub packets: Spread,
    pub duration_ms: Spread,
    /// Share of numeric characters in the queried host name; `None` when
    /// the behavior issues no DNS request.
    pub dns_pct: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Devices per home; home `i` has network id `i + 1`. The last home is
    /// the lab and must hold exactly one device.
    pub devices_per_home: Vec<u32>,
    pub days: u32,
    pub split: SplitDays,
    pub behaviors: Vec<BehaviorSpec>,
    pub seed: u64,
}

fn behavior(name: &str, kind: BehaviorKind, rate: f64) -> BehaviorSpec {
    BehaviorSpec {
        name: name.into(),
        kind,
        rate,
        homes: Vec::new(),
        windows: Vec::new(),
        protocol: 6,
        ports: PortSet::Fixed(vec![443]),
        prefixes: vec!["pfx-cloud".into()],
        network_class: "A".into(),
        flow_end_reason: "idle timeout".into(),
        tcp_flags: TcpFlags::ACK | TcpFlags::PSH,
        reputation: "0".into(),
        octets: spread(1000.0, 100.0),
        packets: spread(8.0, 1.0),
        duration_ms: spread(500.0, 50.0),
        dns_pct: None,
    }
}

impl SynthConfig {
    /// Five homes, seven days, three frequent and two rare-benign
    /// behaviors, one scan and one mining campaign on the lab device.
    pub fn desk_scale(seed: u64) -> Self {
        Self::with_days(7, SplitDays::new(4, 1, 2), seed)
    }

    /// Default behaviors over `days` days; attacks run in the test window.
    pub fn with_days(days: u32, split: SplitDays, seed: u64) -> Self {
        use BehaviorKind::*;
        let test_start = (split.training + split.validation) as u32;
        let last = days.saturating_sub(1).max(test_start);
        let telemetry = BehaviorSpec {
            ports: PortSet::Fixed(vec![8883]),
            prefixes: vec!["pfx-broker".into()],
            octets: spread(900.0, 80.0),
            packets: spread(8.0, 1.0),
            duration_ms: spread(400.0, 60.0),
            dns_pct: Some(spread(5.0, 1.0)),
            ..behavior("telemetry", Frequent, 14.0)
        };
        let dns = BehaviorSpec {
            protocol: 17,
            ports: PortSet::Fixed(vec![53]),
            prefixes: vec!["pfx-resolver".into()],
            network_class: "C".into(),
            tcp_flags: 0,
            octets: spread(75.0, 8.0),
            packets: spread(1.0, 0.0),
            duration_ms: spread(20.0, 5.0),
            ..behavior("dns", Frequent, 8.0)
        };
        let ntp = BehaviorSpec {
            protocol: 17,
            ports: PortSet::Fixed(vec![123]),
            prefixes: vec!["pfx-ntp".into()],
            network_class: "B".into(),
            tcp_flags: 0,
            octets: spread(76.0, 2.0),
            packets: spread(1.0, 0.0),
            duration_ms: spread(2.0, 1.0),
            ..behavior("ntp", Frequent, 2.0)
        };
        let firmware = BehaviorSpec {
            homes: vec![1, 2, 3],
            prefixes: vec!["pfx-vendor".into()],
            flow_end_reason: "end of flow".into(),
            tcp_flags: TcpFlags::SYN | TcpFlags::ACK | TcpFlags::PSH | TcpFlags::FIN,
            octets: spread(25_000.0, 4_000.0),
            packets: spread(30.0, 5.0),
            duration_ms: spread(4_000.0, 800.0),
            dns_pct: Some(spread(20.0, 3.0)),
            ..behavior("firmware-check", RareBenign, 0.2)
        };
        let media = BehaviorSpec {
            homes: vec![2, 4, 5],
            prefixes: vec!["pfx-cdn".into()],
            flow_end_reason: "active timeout".into(),
            octets: spread(400_000.0, 60_000.0),
            packets: spread(300.0, 40.0),
            duration_ms: spread(60_000.0, 10_000.0),
            dns_pct: Some(spread(10.0, 2.0)),
            ..behavior("media-stream", RareBenign, 0.15)
        };
        let scan = BehaviorSpec {
            windows: vec![
                Window { day: test_start, start_hour: 10, end_hour: 13 },
                Window { day: last, start_hour: 14, end_hour: 17 },
            ],
            ports: PortSet::Range(1, 65_535),
            prefixes: vec!["pfx-scanner".into()],
            network_class: "D".into(),
            flow_end_reason: "end of flow".into(),
            tcp_flags: TcpFlags::RST | TcpFlags::ACK,
            octets: spread(54.0, 4.0),
            packets: spread(1.0, 0.0),
            duration_ms: spread(0.0, 0.5),
            ..behavior("nmap-scan", ScanLike, 150.0)
        };
        let mining = BehaviorSpec {
            windows: vec![
                Window { day: test_start, start_hour: 18, end_hour: 24 },
                Window { day: last, start_hour: 0, end_hour: 6 },
            ],
            ports: PortSet::Fixed(vec![3333]),
            prefixes: vec!["pfx-pool".into()],
            flow_end_reason: "active timeout".into(),
            reputation: "1".into(),
            octets: spread(15_000.0, 2_000.0),
            packets: spread(120.0, 15.0),
            duration_ms: spread(300_000.0, 30_000.0),
            ..behavior("cryptominer", MiningLike, 15.0)
        };
        SynthConfig {
            devices_per_home: vec![2, 2, 1, 1, 1],
            days,
            split,
            behaviors: vec![telemetry, dns, ntp, firmware, media, scan, mining],
            seed,
        }
    }

    /// Resizes to `homes` homes: the first two hold two devices, the rest
    /// one, and the last is the lab. Rare behaviors keep the homes that
    /// still exist, falling back to homes 1 and 2.
    pub fn with_homes(mut self, homes: u32) -> Result<Self> {
        if homes < 2 {
            return Err(Error::Config(format!("at least two homes are required, got {homes}")));
        }
        self.devices_per_home = (0..homes).map(|h| if h < 2 && h + 1 < homes { 2 } else { 1 }).collect();
        for b in &mut self.behaviors {
            if b.homes.is_empty() {
                continue;
            }
            b.homes.retain(|&h| h <= homes);
            if b.homes.len() < 2 {
                b.homes = vec![1, 2];
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn n_homes(&self) -> u32 {
        self.devices_per_home.len() as u32
    }

    pub fn lab(&self) -> LabSite {
        LabSite { network_id: self.n_homes(), device_id: self.devices_per_home.iter().sum() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.devices_per_home.len() < 2 {
            return fail("at least two homes are required".into());
        }
        if self.devices_per_home.contains(&0) {
            return fail("every home needs at least one device".into());
        }
        if self.devices_per_home.last() != Some(&1) {
            return fail("the lab home must hold exactly one device".into());
        }
        if self.days == 0 {
            return fail("days must be positive".into());
        }
        if !self.behaviors.iter().any(|b| b.kind == BehaviorKind::Frequent) {
            return fail("at least one Frequent behavior is required".into());
        }
        for b in &self.behaviors {
            if !(b.rate > 0.0 && b.rate.is_finite()) {
                return fail(format!("behavior {} has invalid rate {}", b.name, b.rate));
            }
            if b.prefixes.is_empty() {
                return fail(format!("behavior {} has no destination prefix", b.name));
            }
            if let PortSet::Fixed(p) = &b.ports {
                if p.is_empty() {
                    return fail(format!("behavior {} has no destination port", b.name));
                }
            }
            if b.tcp_flags >= 64 {
                return fail(format!("behavior {} has invalid tcp flags", b.name));
            }
            if b.kind == BehaviorKind::RareBenign && b.homes.len() < 2 {
                return fail(format!("rare behavior {} must span at least two homes", b.name));
            }
        }
        Ok(())
    }

    fn partition_of(&self, day: u32) -> Option<PartitionTag> {
        let d = day as u64;
        if d < self.split.training {
            Some(PartitionTag::Training)
        } else if d < self.split.training + self.split.validation {
            Some(PartitionTag::Validation)
        } else if d < self.split.total() {
            Some(PartitionTag::Test)
        } else {
            None
        }
    }

    /// Expected flow count, the Poisson mean of the generator.
    pub fn expected_flows(&self) -> f64 {
        let lab = self.lab();
        let mut total = 0.0;
        for (h, &devices) in self.devices_per_home.iter().enumerate() {
            let home = h as u32 + 1;
            for b in &self.behaviors {
                if !runs_in(b, home, lab) {
                    continue;
                }
                let hours = (0..self.days)
                    .flat_map(|d| (0..24).map(move |hr| (d, hr)))
                    .filter(|&(d, hr)| active(b, d, hr))
                    .count();
                total += b.rate * hours as f64 * devices as f64;
            }
        }
        total
    }
}

fn runs_in(b: &BehaviorSpec, home: u32, lab: LabSite) -> bool {
    if b.kind.is_attack() {
        home == lab.network_id
    } else {
        b.homes.is_empty() || b.homes.contains(&home)
    }
}

fn active(b: &BehaviorSpec, day: u32, hour: u32) -> bool {
    b.windows.is_empty() || b.windows.iter().any(|w| w.contains(day, hour))
}

fn draw(rng: &mut ChaCha8Rng, s: Spread, min: f64) -> f64 {
    let v = if s.sd > 0.0 { Normal::new(s.mean, s.sd).expect("finite spread").sample(rng) } else { s.mean };
    v.max(min)
}

fn make_flow(
    rng: &mut ChaCha8Rng,
    b: &BehaviorSpec,
    device_id: u32,
    home: u32,
    start_ms: u64,
) -> FlowRecord {
    let packets = draw(rng, b.packets, 1.0).round() as u64;
    let octets = (draw(rng, b.octets, packets as f64).round() as u64).max(packets);
    let duration = draw(rng, b.duration_ms, 0.0).round() as u64;
    let port = match &b.ports {
        PortSet::Fixed(p) => p[rng.random_range(0..p.len())],
        PortSet::Range(lo, hi) => rng.random_range(*lo..=*hi),
    };
    let prefix = b.prefixes[rng.random_range(0..b.prefixes.len())].clone();
    let dns_pct = b.dns_pct.map(|s| (draw(rng, s, 0.0).min(100.0) * 100.0).round() / 100.0);
    FlowRecord {
        device_id,
        source_network_id: home,
        flow_start_ms: start_ms,
        protocol_identifier: b.protocol,
        flow_duration_milliseconds: duration,
        octet_delta_count: octets,
        packet_delta_count: packets,
        avg_packet_size: octets as f64 / packets as f64,
        flow_end_reason: b.flow_end_reason.clone(),
        tcp_control_bits: TcpFlags(b.tcp_flags),
        network_class_of_destination: b.network_class.clone(),
        destination_network_prefix: Some(prefix),
        destination_port: Some(port),
        inter_arrival_time_milliseconds: None,
        reputation_status: b.reputation.clone(),
        same_dest_port_count_pool: 0,
        same_dest_ip_count_pool: 0,
        has_dns_request_from_pool: dns_pct.is_some(),
        dns_host_pct_numerical_chars: dns_pct,
        actual_label: b.kind.label(),
        partition: None,
    }
}

/// A generated flow together with the behavior that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFlow {
    pub record: FlowRecord,
    pub behavior: usize,
}

/// Generates labeled, partition-tagged flows sorted by start time, with the
/// index of the generating behavior kept alongside each record.
pub fn generate_with_behaviors(config: &SynthConfig) -> Result<Vec<SynthFlow>> {
    config.validate()?;
    let lab = config.lab();
    let mut out: Vec<SynthFlow> = Vec::new();
    let mut next_device = 1u32;
    for (h, &devices) in config.devices_per_home.iter().enumerate() {
        let home = h as u32 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, home as u64));
        for device_id in next_device..next_device + devices {
            for day in 0..config.days {
                for hour in 0..24u32 {
                    let hour_start = day as u64 * MS_PER_DAY + hour as u64 * MS_PER_HOUR;
                    for (bi, b) in config.behaviors.iter().enumerate() {
                        if !runs_in(b, home, lab) || !active(b, day, hour) {
                            continue;
                        }
                        let n = Poisson::new(b.rate).expect("positive rate").sample(&mut rng) as u64;
                        for _ in 0..n {
                            let start = hour_start + rng.random_range(0..MS_PER_HOUR);
                            let mut record = make_flow(&mut rng, b, device_id, home, start);
                            record.partition = config.partition_of(day);
                            out.push(SynthFlow { record, behavior: bi });
                        }
                    }
                }
            }
        }
        next_device += devices;
    }
    out.sort_by_key(|f| (f.record.flow_start_ms, f.record.device_id));
    let mut records: Vec<FlowRecord> = out.iter().map(|f| f.record.clone()).collect();
    compute_iat(&mut records);
    compute_pool_features(&mut records);
    for (f, r) in out.iter_mut().zip(records) {
        f.record = r;
    }
    Ok(out)
}

pub fn generate(config: &SynthConfig) -> Result<Vec<FlowRecord>> {
    Ok(generate_with_behaviors(config)?.into_iter().map(|f| f.record).collect())
}

/// Outcome of the brute-force separability check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    /// Smallest distance from an attack flow to its nearest benign centroid.
    pub min_attack_distance: f64,
    /// 99th percentile of benign distances to their nearest centroid.
    pub benign_p99: f64,
}

impl Separability {
    pub fn holds(&self) -> bool {
        self.min_attack_distance > self.benign_p99
    }
}

/// Encodes all flows with a recipe fitted on the benign ones, clusters the
/// benign flows with one centroid per benign behavior and compares distance
/// distributions.
pub fn separability(flows: &[FlowRecord], benign_behaviors: usize, seed: u64) -> Result<Separability> {
    let benign: Vec<FlowRecord> = flows.iter().filter(|f| !f.actual_label.is_attack()).cloned().collect();
    let attacks: Vec<FlowRecord> = flows.iter().filter(|f| f.actual_label.is_attack()).cloned().collect();
    if attacks.is_empty() {
        return Err(Error::Data("no attack flows to separate".into()));
    }
    let recipe = fit_recipe(&benign, &PipelineConfig::default())?;
    let xb = recipe.apply(&benign).values;
    let xa = recipe.apply(&attacks).values;
    let fit = kmeans_fit(&xb, benign_behaviors, seed)?;
    let nearest = |row: &[f64]| crate::filter2::nearest_centroid(&fit.centroids, row).1.sqrt();
    let benign_d: Vec<f64> = xb.iter_rows().map(nearest).collect();
    let min_attack_distance = xa.iter_rows().map(nearest).fold(f64::INFINITY, f64::min);
    let benign_p99 = percentile(&benign_d, 99.0).unwrap_or(0.0);
    Ok(Separability { min_attack_distance, benign_p99 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_record_with;
    use std::collections::{BTreeMap, BTreeSet};

    #[test]
    fn deterministic() {
        let c = SynthConfig::desk_scale(3);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        assert_ne!(generate(&c).unwrap(), generate(&SynthConfig::desk_scale(4)).unwrap());
    }

    #[test]
    fn records_are_valid_and_labels_match_kinds() {
        let c = SynthConfig::desk_scale(1);
        let lab = c.lab();
        assert_eq!(lab, LabSite::default());
        for f in generate_with_behaviors(&c).unwrap() {
            assert!(validate_record_with(&f.record, lab).is_empty(), "{:?}", f.record);
            assert_eq!(f.record.actual_label, c.behaviors[f.behavior].kind.label());
            if f.record.actual_label.is_attack() {
                assert_eq!(f.record.partition, Some(PartitionTag::Test));
            }
        }
    }

    #[test]
    fn count_within_three_sigma_of_poisson_mean() {
        let c = SynthConfig::with_days(21, SplitDays::new(13, 3, 5), 9);
        let n = generate(&c).unwrap().len() as f64;
        let mean = c.expected_flows();
        assert!((n - mean).abs() <= 3.0 * mean.sqrt(), "{n} vs {mean}");
    }

    #[test]
    fn scans_hit_many_more_ports() {
        let c = SynthConfig::desk_scale(2);
        let flows = generate_with_behaviors(&c).unwrap();
        let mut ports: BTreeMap<usize, BTreeSet<u16>> = BTreeMap::new();
        for f in &flows {
            ports.entry(f.behavior).or_default().insert(f.record.destination_port.unwrap());
        }
        let scan = c.behaviors.iter().position(|b| b.kind == BehaviorKind::ScanLike).unwrap();
        let max_benign = c
            .behaviors
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.kind.is_attack())
            .map(|(i, _)| ports.get(&i).map_or(0, |s| s.len()))
            .max()
            .unwrap();
        for w in &c.behaviors[scan].windows {
            let in_window: BTreeSet<u16> = flows
                .iter()
                .filter(|f| f.behavior == scan)
                .filter(|f| {
                    let day = (f.record.flow_start_ms / MS_PER_DAY) as u32;
                    let hour = ((f.record.flow_start_ms % MS_PER_DAY) / MS_PER_HOUR) as u32;
                    w.contains(day, hour)
                })
                .map(|f| f.record.destination_port.unwrap())
                .collect();
            assert!(in_window.len() >= 10 * max_benign, "{} vs {}", in_window.len(), max_benign);
        }
    }

    #[test]
    fn rare_behaviors_span_homes() {
        let c = SynthConfig::desk_scale(5);
        let flows = generate_with_behaviors(&c).unwrap();
        for (i, b) in c.behaviors.iter().enumerate() {
            if b.kind == BehaviorKind::RareBenign {
                let homes: BTreeSet<u32> =
                    flows.iter().filter(|f| f.behavior == i).map(|f| f.record.source_network_id).collect();
                assert!(homes.len() >= 2);
            }
        }
    }

    #[test]
    fn resizing_homes() {
        let c = SynthConfig::desk_scale(1).with_homes(3).unwrap();
        assert_eq!(c.devices_per_home, vec![2, 2, 1]);
        assert_eq!(c.lab(), LabSite { network_id: 3, device_id: 5 });
        assert!(c.behaviors.iter().filter(|b| !b.homes.is_empty()).all(|b| b.homes.iter().all(|&h| h <= 3)));
        assert_eq!(SynthConfig::desk_scale(1).with_homes(5).unwrap(), SynthConfig::desk_scale(1));
        assert_eq!(SynthConfig::desk_scale(1).with_homes(2).unwrap().devices_per_home, vec![2, 1]);
        assert!(SynthConfig::desk_scale(1).with_homes(1).is_err());
    }

    #[test]
    fn invalid_rate_rejected() {
        let mut c = SynthConfig::desk_scale(1);
        c.behaviors[0].rate = 0.0;
        assert!(generate(&c).is_err());
        let mut c = SynthConfig::desk_scale(1);
        c.behaviors.retain(|b| b.kind != BehaviorKind::Frequent);
        assert!(generate(&c).is_err());
    }

    #[test]
    fn planted_attacks_are_separable() {
        let c = SynthConfig::desk_scale(7);
        let flows = generate(&c).unwrap();
        let benign_kinds = c.behaviors.iter().filter(|b| !b.kind.is_attack()).count();
        let s = separability(&flows, benign_kinds, 7).unwrap();
        assert!(s.holds(), "{s:?}");
    }
}
