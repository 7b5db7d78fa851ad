//! Detection rules over the dissected, flow-tracked packet stream.
//!
//! Five rules, each an independent indicator:
//!
//! * `SIG-MATCH` (alert): a known payload signature in a reassembled TCP
//!   direction stream.
//! * `EMPTY-PAYLOAD-FLOOD` (warn): a run of consecutive empty ACK
//!   segments on one established flow reaching the configured threshold;
//!   fires once per run, when the run reaches the threshold exactly.
//! * `HALF-OPEN-SYN` (warn): a handshake never completed, its SYN older
//!   than the timeout at the end of the trace.
//! * `PORT-MUTATION` (alert): a SYN to a new port on an address pair that
//!   had a different active service within the window.
//! * `ZERO-SEQACK` (alert): sequence and acknowledgment both zero on a
//!   segment other than an initial SYN.
//!
//! One pass over the trace produces a detection list sorted by packet
//! index, then rule id, so repeated runs over the same input are
//! byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dissect::{dissect, MacAddress, TcpSegment, Transport};
use crate::flow::{
    flow_of_directed, Direction, FlowConfig, FlowEvent, FlowEventKind, FlowKey, FlowTable,
    PacketRef,
};
use crate::pcap::{open_source_reader, BoundedSource, PcapError, LINKTYPE_ETHERNET};
use crate::signatures::{CarryBuffer, SignatureSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleId {
    SigMatch,
    EmptyPayloadFlood,
    HalfOpenSyn,
    PortMutation,
    ZeroSeqAck,
}

pub const ALL_RULES: [RuleId; 5] = [
    RuleId::SigMatch,
    RuleId::EmptyPayloadFlood,
    RuleId::HalfOpenSyn,
    RuleId::PortMutation,
    RuleId::ZeroSeqAck,
];

impl RuleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::SigMatch => "SIG-MATCH",
            RuleId::EmptyPayloadFlood => "EMPTY-PAYLOAD-FLOOD",
            RuleId::HalfOpenSyn => "HALF-OPEN-SYN",
            RuleId::PortMutation => "PORT-MUTATION",
            RuleId::ZeroSeqAck => "ZERO-SEQACK",
        }
    }

    pub fn severity(&self) -> Severity {
        match self {
            RuleId::SigMatch | RuleId::PortMutation | RuleId::ZeroSeqAck => Severity::Alert,
            RuleId::EmptyPayloadFlood | RuleId::HalfOpenSyn => Severity::Warn,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        ALL_RULES
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::UnknownRule(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Warn,
    Alert,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warn => "warn",
            Severity::Alert => "alert",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("empty-payload threshold must be at least 1")]
    ZeroEmptyThreshold,
    #[error("half-open timeout must be a positive number of seconds, got {0}")]
    BadTimeout(f64),
    #[error("port-mutation window must be a positive number of seconds, got {0}")]
    BadWindow(f64),
    #[error("unknown rule id {0:?}")]
    UnknownRule(String),
}

/// Tunable rule parameters. `enabled` lists the rules that run; the
/// default enables all five with threshold 3, timeout 5 s, window 1 s.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    pub empty_payload_threshold: u32,
    pub halfopen_timeout_secs: f64,
    pub mutation_window_secs: f64,
    pub enabled: BTreeSet<RuleId>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            empty_payload_threshold: 3,
            halfopen_timeout_secs: 5.0,
            mutation_window_secs: 1.0,
            enabled: ALL_RULES.into_iter().collect(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.empty_payload_threshold == 0 {
            return Err(ConfigError::ZeroEmptyThreshold);
        }
        // NaN must fail too; `<= 0.0` alone would let it through.
        if self.halfopen_timeout_secs <= 0.0 || !self.halfopen_timeout_secs.is_finite() {
            return Err(ConfigError::BadTimeout(self.halfopen_timeout_secs));
        }
        if self.mutation_window_secs <= 0.0 || !self.mutation_window_secs.is_finite() {
            return Err(ConfigError::BadWindow(self.mutation_window_secs));
        }
        Ok(())
    }

    pub fn is_enabled(&self, rule: RuleId) -> bool {
        self.enabled.contains(&rule)
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            halfopen_timeout_us: (self.halfopen_timeout_secs * 1e6).round() as u64,
            mutation_window_us: (self.mutation_window_secs * 1e6).round() as u64,
        }
    }
}

/// One finding, carrying everything the evidence log records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub rule: RuleId,
    pub severity: Severity,
    pub packet_index: usize,
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub flow: FlowKey,
    pub src_mac: MacAddress,
    pub dst_mac: MacAddress,
    pub src_ip: std::net::Ipv4Addr,
    pub dst_ip: std::net::Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub detail: String,
    /// Set for SIG-MATCH.
    pub signature_id: Option<String>,
    /// Stream offset of the match, for SIG-MATCH.
    pub payload_offset: Option<u64>,
}

/// Per-protocol packet tally for one pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TraceStats {
    pub packets: usize,
    pub tcp: usize,
    pub udp: usize,
    pub icmp: usize,
    pub other: usize,
}

/// Everything one pass produces.
#[derive(Debug)]
pub struct Analysis {
    pub detections: Vec<Detection>,
    pub stats: TraceStats,
    pub flow_events: Vec<FlowEvent>,
    /// True when the record cap clipped the trace.
    pub truncated: bool,
}

/// ZERO-SEQACK predicate: both fields zero on anything but an initial
/// SYN, whose acknowledgment is legitimately zero.
pub fn rule_zero_seqack(seg: &TcpSegment) -> bool {
    seg.seq == 0 && seg.ack == 0 && !(seg.flags.syn && !seg.flags.ack)
}

fn detection_from_ref(
    rule: RuleId,
    flow: FlowKey,
    evidence: &PacketRef,
    detail: String,
) -> Detection {
    Detection {
        rule,
        severity: rule.severity(),
        packet_index: evidence.index,
        ts_sec: evidence.ts_sec,
        ts_usec: evidence.ts_usec,
        flow,
        src_mac: evidence.src_mac,
        dst_mac: evidence.dst_mac,
        src_ip: evidence.src_ip,
        dst_ip: evidence.dst_ip,
        src_port: evidence.src_port,
        dst_port: evidence.dst_port,
        detail,
        signature_id: None,
        payload_offset: None,
    }
}

/// Analyze a loaded trace. `config` must satisfy
/// [`RuleConfig::validate`]; traces with a non-Ethernet link layer are
/// rejected.
pub fn evaluate(
    source: &BoundedSource,
    sigs: &SignatureSet,
    config: &RuleConfig,
) -> Result<Analysis, PcapError> {
    debug_assert!(config.validate().is_ok());
    if source.header.linktype != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinktype {
            linktype: source.header.linktype,
        });
    }

    let mut table = FlowTable::new(config.flow_config());
    let mut buffers: BTreeMap<(FlowKey, Direction), CarryBuffer> = BTreeMap::new();
    let mut detections = Vec::new();
    let mut flow_events = Vec::new();
    let mut stats = TraceStats::default();
    let mut trace_end: Option<u64> = None;

    for (index, record) in source.records.iter().enumerate() {
        let pkt = dissect(record, index);
        stats.packets += 1;
        match &pkt.transport {
            Some(Transport::Tcp(_)) => stats.tcp += 1,
            Some(Transport::Udp(_)) => stats.udp += 1,
            Some(Transport::Icmp(_)) => stats.icmp += 1,
            Some(Transport::Opaque { .. }) | None => stats.other += 1,
        }
        let now = pkt.timestamp_micros();
        trace_end = Some(trace_end.map_or(now, |t: u64| t.max(now)));

        let keyed = flow_of_directed(&pkt).ok();
        let prev_empty_run = keyed
            .as_ref()
            .and_then(|(key, _)| table.get(key))
            .map_or(0, |state| state.consecutive_empty_ack);

        let events = table.advance(&pkt);
        for event in &events {
            if let FlowEventKind::PortMutationCandidate { .. } = &event.kind {
                if config.is_enabled(RuleId::PortMutation) {
                    detections.push(detection_from_ref(
                        RuleId::PortMutation,
                        event.flow.clone(),
                        &event.evidence,
                        event.detail.clone(),
                    ));
                }
            }
        }
        flow_events.extend(events);

        let Some(Transport::Tcp(seg)) = &pkt.transport else {
            continue;
        };
        let Some((key, direction)) = keyed else {
            continue;
        };
        let Some(evidence) = PacketRef::from_packet(&pkt) else {
            continue;
        };

        if config.is_enabled(RuleId::EmptyPayloadFlood) {
            let run = table.get(&key).map_or(0, |s| s.consecutive_empty_ack);
            if run == config.empty_payload_threshold && run == prev_empty_run + 1 {
                detections.push(detection_from_ref(
                    RuleId::EmptyPayloadFlood,
                    key.clone(),
                    &evidence,
                    format!("{run} consecutive empty ack segments"),
                ));
            }
        }

        if config.is_enabled(RuleId::ZeroSeqAck) && rule_zero_seqack(seg) {
            detections.push(detection_from_ref(
                RuleId::ZeroSeqAck,
                key.clone(),
                &evidence,
                format!("seq=0 ack=0 flags={}", seg.flags),
            ));
        }

        if config.is_enabled(RuleId::SigMatch) && !sigs.is_empty() {
            if seg.flags.rst {
                // A reset tears the stream down; whatever follows on this
                // five-tuple is a new stream with fresh offsets.
                buffers.remove(&(key.clone(), Direction::FromLo));
                buffers.remove(&(key.clone(), Direction::FromHi));
            } else if !seg.payload.is_empty() {
                let buf = buffers.entry((key.clone(), direction)).or_default();
                for hit in sigs.match_segment(buf, seg.seq, &seg.payload) {
                    let sig = sigs.get(hit.sig_index);
                    let mut detection = detection_from_ref(
                        RuleId::SigMatch,
                        key.clone(),
                        &evidence,
                        format!(
                            "signature {} ({}) at stream offset {}",
                            sig.id, sig.name, hit.stream_offset
                        ),
                    );
                    detection.signature_id = Some(sig.id.clone());
                    detection.payload_offset = Some(hit.stream_offset);
                    detections.push(detection);
                }
            }
        }
    }

    if let Some(end) = trace_end {
        let events = table.finalize(end);
        for event in &events {
            if event.kind == FlowEventKind::HalfOpenTimeout
                && config.is_enabled(RuleId::HalfOpenSyn)
            {
                detections.push(detection_from_ref(
                    RuleId::HalfOpenSyn,
                    event.flow.clone(),
                    &event.evidence,
                    event.detail.clone(),
                ));
            }
        }
        flow_events.extend(events);
    }

    detections.sort_by(|a, b| {
        (a.packet_index, a.rule.as_str()).cmp(&(b.packet_index, b.rule.as_str()))
    });
    Ok(Analysis {
        detections,
        stats,
        flow_events,
        truncated: source.truncated,
    })
}

/// Convenience entry point: parse trace bytes under the default record
/// limit, then [`evaluate`].
pub fn evaluate_bytes(
    pcap_bytes: &[u8],
    sigs: &SignatureSet,
    config: &RuleConfig,
) -> Result<Analysis, PcapError> {
    let source = open_source_reader(pcap_bytes, crate::pcap::DEFAULT_PACKET_LIMIT)?;
    evaluate(&source, sigs, config)
}
