//! Per-conversation TCP state tracking.
//!
//! Flows are keyed by a canonicalized five-tuple so both directions of a
//! conversation share one entry. Each flow walks the plain three-way
//! handshake: Closed -> SynSent -> SynAckSeen -> Established, then FinSeen
//! on the first FIN or Reset on any RST. Transition rules, applied in this
//! order to each segment:
//!
//! * RST: enter Reset, clear the empty-ACK counter, no event.
//! * SYN without ACK: from Closed records the initiator, sequence number
//!   and time and enters SynSent; from any other phase it is a
//!   StateViolation.
//! * SYN+ACK: valid only in SynSent and enters SynAckSeen; an
//!   acknowledgment that is not the recorded SYN sequence plus one is a
//!   StateViolation (the phase still advances). Elsewhere a violation.
//! * FIN: from Established enters FinSeen; a second FIN in FinSeen is the
//!   normal close handshake and stays silent; any other phase is a
//!   violation.
//! * Anything else: in SynAckSeen an ACK completes the handshake
//!   (HandshakeComplete; a wrong acknowledgment number is additionally a
//!   violation) and enters Established. In Established an empty ACK bumps
//!   the consecutive empty-ACK counter and any payload clears it. In
//!   FinSeen empty segments are the close exchange; payload after FIN is
//!   a violation. In Closed, SynSent or Reset any such segment is a
//!   violation.
//!
//! [`FlowTable::finalize`] reports HalfOpenTimeout for every flow still in
//! SynSent or SynAckSeen whose SYN is strictly older than the timeout at
//! the end of the trace, and a SYN to a new port on an address pair whose
//! previous flow was active within the mutation window reports
//! PortMutationCandidate at the SYN itself.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::dissect::{DissectedPacket, MacAddress, Transport, IPPROTO_TCP, IPPROTO_UDP};

pub const DEFAULT_HALFOPEN_TIMEOUT_US: u64 = 5_000_000;
pub const DEFAULT_MUTATION_WINDOW_US: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{transport} packets cannot be keyed to a flow")]
pub struct NotFlowable {
    pub transport: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub ip: Ipv4Addr,
    pub port: u16,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

/// Canonical flow key: `lo` and `hi` are the two endpoints ordered by IP
/// address, then port, so both packet directions map to the same key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub protocol: u8,
    pub lo: Endpoint,
    pub hi: Endpoint,
}

impl FlowKey {
    pub fn from_endpoints(protocol: u8, src: Endpoint, dst: Endpoint) -> (FlowKey, Direction) {
        if src <= dst {
            (FlowKey { protocol, lo: src, hi: dst }, Direction::FromLo)
        } else {
            (FlowKey { protocol, lo: dst, hi: src }, Direction::FromHi)
        }
    }

    pub fn protocol_label(&self) -> String {
        match self.protocol {
            IPPROTO_TCP => "TCP".to_string(),
            IPPROTO_UDP => "UDP".to_string(),
            other => format!("IP-{other}"),
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} <-> {}", self.protocol_label(), self.lo, self.hi)
    }
}

/// Which canonical endpoint sent a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    FromLo,
    FromHi,
}

/// Key a packet to its flow along with the sender's side.
pub fn flow_of_directed(pkt: &DissectedPacket) -> Result<(FlowKey, Direction), NotFlowable> {
    let Some(ip) = &pkt.ip else {
        return Err(NotFlowable { transport: "non-ip" });
    };
    let (protocol, src_port, dst_port) = match &pkt.transport {
        Some(Transport::Tcp(seg)) => (IPPROTO_TCP, seg.src_port, seg.dst_port),
        Some(Transport::Udp(datagram)) => (IPPROTO_UDP, datagram.src_port, datagram.dst_port),
        Some(Transport::Icmp(_)) => return Err(NotFlowable { transport: "icmp" }),
        Some(Transport::Opaque { .. }) => return Err(NotFlowable { transport: "opaque" }),
        None => return Err(NotFlowable { transport: "undissected" }),
    };
    Ok(FlowKey::from_endpoints(
        protocol,
        Endpoint { ip: ip.src_ip, port: src_port },
        Endpoint { ip: ip.dst_ip, port: dst_port },
    ))
}

pub fn flow_of(pkt: &DissectedPacket) -> Result<FlowKey, NotFlowable> {
    flow_of_directed(pkt).map(|(key, _)| key)
}

/// Addressing snapshot of one packet, kept with events so evidence can be
/// written after the packet itself is gone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRef {
    pub index: usize,
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub src_mac: MacAddress,
    pub dst_mac: MacAddress,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
}

impl PacketRef {
    pub fn from_packet(pkt: &DissectedPacket) -> Option<Self> {
        let eth = pkt.ethernet.as_ref()?;
        let ip = pkt.ip.as_ref()?;
        let (src_port, dst_port) = match &pkt.transport {
            Some(Transport::Tcp(seg)) => (seg.src_port, seg.dst_port),
            Some(Transport::Udp(datagram)) => (datagram.src_port, datagram.dst_port),
            _ => return None,
        };
        Some(PacketRef {
            index: pkt.index,
            ts_sec: pkt.ts_sec,
            ts_usec: pkt.ts_usec,
            src_mac: eth.src_mac,
            dst_mac: eth.dst_mac,
            src_ip: ip.src_ip,
            dst_ip: ip.dst_ip,
            src_port,
            dst_port,
        })
    }

    pub fn timestamp_micros(&self) -> u64 {
        u64::from(self.ts_sec) * 1_000_000 + u64::from(self.ts_usec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Closed,
    SynSent,
    SynAckSeen,
    Established,
    FinSeen,
    Reset,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Phase::Closed => "closed",
            Phase::SynSent => "syn-sent",
            Phase::SynAckSeen => "syn-ack-seen",
            Phase::Established => "established",
            Phase::FinSeen => "fin-seen",
            Phase::Reset => "reset",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowState {
    pub phase: Phase,
    /// Side that sent the first SYN.
    pub initiator: Option<Direction>,
    /// Destination port of the first packet; the port this conversation
    /// is taken to serve.
    pub service_port: u16,
    pub syn_time: Option<u64>,
    pub syn_packet: Option<PacketRef>,
    syn_seq: Option<u32>,
    synack_seq: Option<u32>,
    pub packets_seen: u64,
    pub consecutive_empty_ack: u32,
    pub last_activity: u64,
}

impl FlowState {
    fn new(service_port: u16) -> Self {
        FlowState {
            phase: Phase::Closed,
            initiator: None,
            service_port,
            syn_time: None,
            syn_packet: None,
            syn_seq: None,
            synack_seq: None,
            packets_seen: 0,
            consecutive_empty_ack: 0,
            last_activity: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowEventKind {
    HandshakeComplete,
    HalfOpenTimeout,
    PortMutationCandidate { old_port: u16, new_port: u16 },
    StateViolation,
}

impl FlowEventKind {
    pub fn label(&self) -> &'static str {
        match self {
            FlowEventKind::HandshakeComplete => "handshake-complete",
            FlowEventKind::HalfOpenTimeout => "half-open-timeout",
            FlowEventKind::PortMutationCandidate { .. } => "port-mutation-candidate",
            FlowEventKind::StateViolation => "state-violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEvent {
    pub kind: FlowEventKind,
    pub flow: FlowKey,
    /// Packet that triggered the event; for HalfOpenTimeout, the SYN.
    pub packet_index: usize,
    pub timestamp_us: u64,
    pub detail: String,
    pub evidence: PacketRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowConfig {
    pub halfopen_timeout_us: u64,
    pub mutation_window_us: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            halfopen_timeout_us: DEFAULT_HALFOPEN_TIMEOUT_US,
            mutation_window_us: DEFAULT_MUTATION_WINDOW_US,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UdpFlowStats {
    pub packets_seen: u64,
    pub last_activity: u64,
}

/// All live flow state for one pass over a trace.
#[derive(Debug, Default)]
pub struct FlowTable {
    config: FlowConfig,
    flows: BTreeMap<FlowKey, FlowState>,
    udp_flows: BTreeMap<FlowKey, UdpFlowStats>,
}

impl FlowTable {
    pub fn new(config: FlowConfig) -> Self {
        FlowTable {
            config,
            flows: BTreeMap::new(),
            udp_flows: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &FlowKey) -> Option<&FlowState> {
        self.flows.get(key)
    }

    pub fn tcp_flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn udp_flow_count(&self) -> usize {
        self.udp_flows.len()
    }

    pub fn tcp_flows(&self) -> impl Iterator<Item = (&FlowKey, &FlowState)> {
        self.flows.iter()
    }

    /// Most recently active TCP flow on `ip_pair` serving a different
    /// port than `new_port` within the mutation window ending at `now`.
    /// Ties prefer the smallest key so scans are order-independent.
    fn mutation_candidate(
        &self,
        ip_pair: (Ipv4Addr, Ipv4Addr),
        new_port: u16,
        now: u64,
    ) -> Option<u16> {
        let mut best: Option<(u64, u16)> = None;
        for (key, state) in &self.flows {
            if (key.lo.ip, key.hi.ip) != ip_pair
                || state.service_port == new_port
                || state.packets_seen == 0
            {
                continue;
            }
            if now.saturating_sub(state.last_activity) > self.config.mutation_window_us {
                continue;
            }
            match best {
                Some((t, _)) if state.last_activity <= t => {}
                _ => best = Some((state.last_activity, state.service_port)),
            }
        }
        best.map(|(_, port)| port)
    }

    /// Feed one dissected packet through the table. TCP packets drive the
    /// state machine and may produce events; UDP packets only update flow
    /// statistics; anything else is ignored.
    pub fn advance(&mut self, pkt: &DissectedPacket) -> Vec<FlowEvent> {
        let Ok((key, direction)) = flow_of_directed(pkt) else {
            return Vec::new();
        };
        let now = pkt.timestamp_micros();

        let seg = match &pkt.transport {
            Some(Transport::Tcp(seg)) => seg,
            Some(Transport::Udp(_)) => {
                let stats = self.udp_flows.entry(key).or_default();
                stats.packets_seen += 1;
                stats.last_activity = now;
                return Vec::new();
            }
            _ => return Vec::new(),
        };
        let Some(evidence) = PacketRef::from_packet(pkt) else {
            return Vec::new();
        };

        let mut events = Vec::new();
        let event = |kind: FlowEventKind, detail: String| FlowEvent {
            kind,
            flow: key.clone(),
            packet_index: pkt.index,
            timestamp_us: now,
            detail,
            evidence: evidence.clone(),
        };

        let pure_syn = seg.flags.syn && !seg.flags.ack && !seg.flags.rst && !seg.flags.fin;
        if pure_syn && !self.flows.contains_key(&key) {
            if let Some(old_port) =
                self.mutation_candidate((key.lo.ip, key.hi.ip), seg.dst_port, now)
            {
                events.push(event(
                    FlowEventKind::PortMutationCandidate {
                        old_port,
                        new_port: seg.dst_port,
                    },
                    format!("port {old_port} \u{2192} {}", seg.dst_port),
                ));
            }
        }

        let state = self
            .flows
            .entry(key.clone())
            .or_insert_with(|| FlowState::new(seg.dst_port));
        let violation = |detail: String| event(FlowEventKind::StateViolation, detail);

        if seg.flags.rst {
            state.phase = Phase::Reset;
            state.consecutive_empty_ack = 0;
        } else if seg.flags.syn && !seg.flags.ack {
            if state.phase == Phase::Closed {
                state.phase = Phase::SynSent;
                state.initiator = Some(direction);
                state.syn_time = Some(now);
                state.syn_packet = Some(evidence.clone());
                state.syn_seq = Some(seg.seq);
            } else {
                events.push(violation(format!("unexpected SYN in {} flow", state.phase)));
            }
        } else if seg.flags.syn {
            if state.phase == Phase::SynSent {
                if let Some(syn_seq) = state.syn_seq {
                    if seg.ack != syn_seq.wrapping_add(1) {
                        events.push(violation(format!(
                            "SYN+ACK acknowledges {} instead of {}",
                            seg.ack,
                            syn_seq.wrapping_add(1),
                        )));
                    }
                }
                state.phase = Phase::SynAckSeen;
                state.synack_seq = Some(seg.seq);
            } else {
                events.push(violation(format!(
                    "unexpected SYN+ACK in {} flow",
                    state.phase
                )));
            }
        } else if seg.flags.fin {
            match state.phase {
                Phase::Established => state.phase = Phase::FinSeen,
                Phase::FinSeen => {}
                phase => events.push(violation(format!("unexpected FIN in {phase} flow"))),
            }
        } else {
            match state.phase {
                Phase::SynAckSeen if seg.flags.ack => {
                    if let Some(synack_seq) = state.synack_seq {
                        if seg.ack != synack_seq.wrapping_add(1) {
                            events.push(violation(format!(
                                "handshake ACK acknowledges {} instead of {}",
                                seg.ack,
                                synack_seq.wrapping_add(1),
                            )));
                        }
                    }
                    state.phase = Phase::Established;
                    events.push(event(
                        FlowEventKind::HandshakeComplete,
                        "three-way handshake complete".to_string(),
                    ));
                }
                Phase::SynAckSeen => {
                    events.push(violation("handshake reply carries no ACK".to_string()));
                }
                Phase::Established => {
                    if seg.payload.is_empty() {
                        if seg.flags.ack {
                            state.consecutive_empty_ack += 1;
                        }
                    } else {
                        state.consecutive_empty_ack = 0;
                    }
                }
                Phase::FinSeen => {
                    if !seg.payload.is_empty() {
                        events.push(violation("data after FIN".to_string()));
                    }
                }
                Phase::Closed => {
                    events.push(violation("segment on a flow with no handshake".to_string()));
                }
                Phase::SynSent => {
                    events.push(violation("segment before the handshake reply".to_string()));
                }
                Phase::Reset => {
                    events.push(violation("segment after reset".to_string()));
                }
            }
        }

        state.packets_seen += 1;
        state.last_activity = now;
        events
    }

    /// Report half-open flows at the end of a trace: any flow still mid
    /// handshake whose SYN is strictly older than the timeout. Events are
    /// anchored to the SYN packet and ordered by (packet index, flow key).
    pub fn finalize(&self, trace_end_us: u64) -> Vec<FlowEvent> {
        let mut events = Vec::new();
        for (key, state) in &self.flows {
            if !matches!(state.phase, Phase::SynSent | Phase::SynAckSeen) {
                continue;
            }
            let (Some(syn_time), Some(syn_packet)) = (state.syn_time, &state.syn_packet) else {
                continue;
            };
            if trace_end_us.saturating_sub(syn_time) <= self.config.halfopen_timeout_us {
                continue;
            }
            let detail = match state.phase {
                Phase::SynSent => "no reply to SYN",
                _ => "handshake incomplete",
            };
            events.push(FlowEvent {
                kind: FlowEventKind::HalfOpenTimeout,
                flow: key.clone(),
                packet_index: syn_packet.index,
                timestamp_us: syn_time,
                detail: detail.to_string(),
                evidence: syn_packet.clone(),
            });
        }
        events.sort_by(|a, b| {
            (a.packet_index, &a.flow).cmp(&(b.packet_index, &b.flow))
        });
        events
    }
}
