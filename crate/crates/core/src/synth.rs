//! Deterministic synthetic traces with expected-detection manifests.
//!
//! Frame builders emit well-formed Ethernet/IPv4 packets with valid
//! checksums. Scenario scripts compose them into four trace shapes:
//!
//! * `normal`: one clean conversation, handshake through data to an
//!   orderly close. Triggers nothing.
//! * `trojan-horse`: a file transfer whose byte stream carries a known
//!   signature, optionally split across two segments. Triggers exactly
//!   one SIG-MATCH.
//! * `backdoor`: an unanswered SYN to a probe port, a healthy
//!   conversation that degenerates into an empty-ACK run opened by a
//!   zeroed segment, then a SYN to a new port on the same address pair.
//!   Triggers HALF-OPEN-SYN, ZERO-SEQACK, EMPTY-PAYLOAD-FLOOD and
//!   PORT-MUTATION.
//! * `mixed`: the three above on disjoint address pairs, shifted in time.
//!
//! The same seed always yields identical trace bytes and manifest. The
//! manifest lists the detections the trace is built to trigger under the
//! default rule configuration, in (packet index, rule) order.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checksum::{fold, internet_checksum, sum_words};
use crate::dissect::{MacAddress, TcpFlags, IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};
use crate::flow::{Endpoint, FlowKey};
use crate::pcap::{write_pcap, CaptureRecord, PcapHeader};
use crate::signatures::{default_signatures, Signature};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("unknown scenario {0:?}, expected normal, trojan-horse, backdoor or mixed")]
    UnknownScenario(String),
    #[error("invalid scenario parameters: {0}")]
    InvalidParameters(String),
}

/// Filler bytes that cannot collide with the builtin signatures, which
/// all contain characters outside this alphabet.
const FILLER: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";

fn filler_bytes(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect()
}

fn split_ts(t_us: u64) -> (u32, u32) {
    ((t_us / 1_000_000) as u32, (t_us % 1_000_000) as u32)
}

/// One TCP packet specification; `build` encodes it with valid IPv4 and
/// TCP checksums.
#[derive(Debug, Clone)]
pub struct TcpFrame {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub src_mac: MacAddress,
    pub dst_mac: MacAddress,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: TcpFlags,
    pub window: u16,
    pub ttl: u8,
    pub ip_id: u16,
    pub payload: Vec<u8>,
}

impl TcpFrame {
    pub fn new() -> Self {
        TcpFrame {
            ts_sec: 0,
            ts_usec: 0,
            src_mac: MacAddress([0x02, 0, 0, 0, 0, 0x01]),
            dst_mac: MacAddress([0x02, 0, 0, 0, 0, 0x02]),
            src_ip: Ipv4Addr::new(192, 168, 1, 10),
            dst_ip: Ipv4Addr::new(192, 168, 1, 20),
            src_port: 30000,
            dst_port: 80,
            seq: 0,
            ack: 0,
            flags: TcpFlags::default(),
            window: 64_240,
            ttl: 64,
            ip_id: 1,
            payload: Vec::new(),
        }
    }

    pub fn build(&self) -> CaptureRecord {
        let mut tcp = Vec::with_capacity(20 + self.payload.len());
        tcp.extend_from_slice(&self.src_port.to_be_bytes());
        tcp.extend_from_slice(&self.dst_port.to_be_bytes());
        tcp.extend_from_slice(&self.seq.to_be_bytes());
        tcp.extend_from_slice(&self.ack.to_be_bytes());
        tcp.push(5 << 4);
        tcp.push(self.flags.to_byte());
        tcp.extend_from_slice(&self.window.to_be_bytes());
        tcp.extend_from_slice(&[0, 0]);
        tcp.extend_from_slice(&0u16.to_be_bytes());
        tcp.extend_from_slice(&self.payload);
        let mut sum = sum_words(&self.src_ip.octets(), 0);
        sum = sum_words(&self.dst_ip.octets(), sum);
        sum += u32::from(IPPROTO_TCP);
        sum += tcp.len() as u32;
        let checksum = fold(sum_words(&tcp, sum));
        tcp[16..18].copy_from_slice(&checksum.to_be_bytes());

        let bytes = encode_ipv4_frame(
            self.ts_sec,
            self.ts_usec,
            self.src_mac,
            self.dst_mac,
            self.src_ip,
            self.dst_ip,
            IPPROTO_TCP,
            self.ttl,
            self.ip_id,
            &tcp,
        );
        CaptureRecord::new(self.ts_sec, self.ts_usec, bytes)
    }
}

impl Default for TcpFrame {
    fn default() -> Self {
        Self::new()
    }
}

#[allow(clippy::too_many_arguments)]
fn encode_ipv4_frame(
    ts_sec: u32,
    ts_usec: u32,
    src_mac: MacAddress,
    dst_mac: MacAddress,
    src_ip: Ipv4Addr,
    dst_ip: Ipv4Addr,
    protocol: u8,
    ttl: u8,
    ip_id: u16,
    ip_payload: &[u8],
) -> Vec<u8> {
    let _ = (ts_sec, ts_usec);
    let mut ip = Vec::with_capacity(20 + ip_payload.len());
    ip.push(0x45);
    ip.push(0);
    ip.extend_from_slice(&((20 + ip_payload.len()) as u16).to_be_bytes());
    ip.extend_from_slice(&ip_id.to_be_bytes());
    ip.extend_from_slice(&0x4000u16.to_be_bytes());
    ip.push(ttl);
    ip.push(protocol);
    ip.extend_from_slice(&[0, 0]);
    ip.extend_from_slice(&src_ip.octets());
    ip.extend_from_slice(&dst_ip.octets());
    let checksum = internet_checksum(&ip);
    ip[10..12].copy_from_slice(&checksum.to_be_bytes());
    ip.extend_from_slice(ip_payload);

    let mut frame = Vec::with_capacity(14 + ip.len());
    frame.extend_from_slice(&dst_mac.octets());
    frame.extend_from_slice(&src_mac.octets());
    frame.extend_from_slice(&crate::dissect::ETHERTYPE_IPV4.to_be_bytes());
    frame.extend_from_slice(&ip);
    frame
}

/// Well-formed UDP record with a valid checksum.
#[allow(clippy::too_many_arguments)]
pub fn udp_record(
    ts_sec: u32,
    ts_usec: u32,
    src_ip: Ipv4Addr,
    dst_ip: Ipv4Addr,
    src_port: u16,
    dst_port: u16,
    payload: &[u8],
) -> CaptureRecord {
    let mut udp = Vec::with_capacity(8 + payload.len());
    udp.extend_from_slice(&src_port.to_be_bytes());
    udp.extend_from_slice(&dst_port.to_be_bytes());
    udp.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    udp.extend_from_slice(&[0, 0]);
    udp.extend_from_slice(payload);
    let mut sum = sum_words(&src_ip.octets(), 0);
    sum = sum_words(&dst_ip.octets(), sum);
    sum += u32::from(IPPROTO_UDP);
    sum += udp.len() as u32;
    let mut checksum = fold(sum_words(&udp, sum));
    if checksum == 0 {
        // Zero means "no checksum" on the wire; the ones-complement
        // representation of zero is transmitted instead.
        checksum = 0xffff;
    }
    udp[6..8].copy_from_slice(&checksum.to_be_bytes());
    let bytes = encode_ipv4_frame(
        ts_sec,
        ts_usec,
        MacAddress([0x02, 0, 0, 0, 0, 0x01]),
        MacAddress([0x02, 0, 0, 0, 0, 0x02]),
        src_ip,
        dst_ip,
        IPPROTO_UDP,
        64,
        1,
        &udp,
    );
    CaptureRecord::new(ts_sec, ts_usec, bytes)
}

/// Well-formed ICMP record with a valid checksum.
#[allow(clippy::too_many_arguments)]
pub fn icmp_record(
    ts_sec: u32,
    ts_usec: u32,
    src_ip: Ipv4Addr,
    dst_ip: Ipv4Addr,
    icmp_type: u8,
    code: u8,
    body: &[u8],
) -> CaptureRecord {
    let mut icmp = vec![icmp_type, code, 0, 0];
    icmp.extend_from_slice(body);
    let checksum = internet_checksum(&icmp);
    icmp[2..4].copy_from_slice(&checksum.to_be_bytes());
    let bytes = encode_ipv4_frame(
        ts_sec,
        ts_usec,
        MacAddress([0x02, 0, 0, 0, 0, 0x01]),
        MacAddress([0x02, 0, 0, 0, 0, 0x02]),
        src_ip,
        dst_ip,
        IPPROTO_ICMP,
        64,
        1,
        &icmp,
    );
    CaptureRecord::new(ts_sec, ts_usec, bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Normal,
    TrojanHorse,
    Backdoor,
    Mixed,
}

pub const ALL_SCENARIOS: [ScenarioKind; 4] = [
    ScenarioKind::Normal,
    ScenarioKind::TrojanHorse,
    ScenarioKind::Backdoor,
    ScenarioKind::Mixed,
];

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Normal => "normal",
            ScenarioKind::TrojanHorse => "trojan-horse",
            ScenarioKind::Backdoor => "backdoor",
            ScenarioKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        ALL_SCENARIOS
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SynthError::UnknownScenario(s.to_string()))
    }
}

/// Knobs for the scenario scripts. The defaults produce the anchor
/// timeline the acceptance fixtures assert against; manifests assume the
/// default rule configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioParams {
    pub client_ip: Ipv4Addr,
    pub server_ip: Ipv4Addr,
    pub client_mac: MacAddress,
    pub server_mac: MacAddress,
    /// Port of the legitimate service.
    pub service_port: u16,
    /// Port the backdoor moves the service to.
    pub mutated_port: u16,
    /// Target of the unanswered probe SYN.
    pub probe_port: u16,
    /// Signature embedded by the trojan-horse transfer.
    pub signature: Signature,
    /// Split point within the pattern: the first `split` bytes end one
    /// segment, the rest open the next. `None` keeps it in one segment.
    pub split: Option<usize>,
    /// Transferred byte count in the trojan-horse scenario.
    pub transfer_len: usize,
    /// Payload bytes per transfer segment.
    pub segment_len: usize,
    /// Length of the backdoor's empty-ACK run.
    pub empty_ack_run: u32,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            client_ip: Ipv4Addr::new(192, 168, 1, 10),
            server_ip: Ipv4Addr::new(192, 168, 1, 20),
            client_mac: MacAddress([0x02, 0, 0, 0, 0, 0x01]),
            server_mac: MacAddress([0x02, 0, 0, 0, 0, 0x02]),
            service_port: 80,
            mutated_port: 82,
            probe_port: 4444,
            signature: default_signatures().swap_remove(0),
            split: None,
            transfer_len: 14_140,
            segment_len: 1_460,
            empty_ack_run: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub params: ScenarioParams,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Scenario {
            kind,
            seed,
            params: ScenarioParams::default(),
        }
    }
}

/// One detection a synthetic trace is built to trigger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedDetection {
    pub packet_index: usize,
    pub rule: String,
    pub flow: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub packet_count: usize,
    pub expected: Vec<ExpectedDetection>,
}

struct Script {
    records: Vec<CaptureRecord>,
    expected: Vec<ExpectedDetection>,
}

impl Script {
    fn new() -> Self {
        Script {
            records: Vec::new(),
            expected: Vec::new(),
        }
    }

    fn push(&mut self, frame: TcpFrame) -> usize {
        self.records.push(frame.build());
        self.records.len() - 1
    }

    fn expect(&mut self, packet_index: usize, rule: &str, flow: &FlowKey, detail: String) {
        self.expected.push(ExpectedDetection {
            packet_index,
            rule: rule.to_string(),
            flow: flow.to_string(),
            detail,
        });
    }
}

/// Sequence-number bookkeeping for one scripted conversation.
struct Conn {
    client_mac: MacAddress,
    server_mac: MacAddress,
    client_ip: Ipv4Addr,
    server_ip: Ipv4Addr,
    client_port: u16,
    server_port: u16,
    client_seq: u32,
    server_seq: u32,
    ip_id: u16,
}

impl Conn {
    fn new(p: &ScenarioParams, rng: &mut ChaCha8Rng, server_port: u16, client_isn: Option<u32>) -> Self {
        Conn {
            client_mac: p.client_mac,
            server_mac: p.server_mac,
            client_ip: p.client_ip,
            server_ip: p.server_ip,
            client_port: rng.random_range(20_000..60_000),
            server_port,
            client_seq: client_isn.unwrap_or_else(|| rng.random_range(1_000..1_000_000_000)),
            server_seq: 0,
            ip_id: 1,
        }
    }

    fn flow_key(&self) -> FlowKey {
        FlowKey::from_endpoints(
            IPPROTO_TCP,
            Endpoint { ip: self.client_ip, port: self.client_port },
            Endpoint { ip: self.server_ip, port: self.server_port },
        )
        .0
    }

    fn frame(
        &mut self,
        t_us: u64,
        from_client: bool,
        flags: u8,
        seq: u32,
        ack: u32,
        payload: &[u8],
    ) -> TcpFrame {
        let (ts_sec, ts_usec) = split_ts(t_us);
        self.ip_id = self.ip_id.wrapping_add(1);
        let mut f = TcpFrame::new();
        f.ts_sec = ts_sec;
        f.ts_usec = ts_usec;
        f.flags = TcpFlags::from_byte(flags);
        f.seq = seq;
        f.ack = ack;
        f.ip_id = self.ip_id;
        f.payload = payload.to_vec();
        if from_client {
            f.src_mac = self.client_mac;
            f.dst_mac = self.server_mac;
            f.src_ip = self.client_ip;
            f.dst_ip = self.server_ip;
            f.src_port = self.client_port;
            f.dst_port = self.server_port;
        } else {
            f.src_mac = self.server_mac;
            f.dst_mac = self.client_mac;
            f.src_ip = self.server_ip;
            f.dst_ip = self.client_ip;
            f.src_port = self.server_port;
            f.dst_port = self.client_port;
        }
        f
    }

    fn syn(&mut self, t_us: u64) -> TcpFrame {
        let f = self.frame(t_us, true, TcpFlags::SYN, self.client_seq, 0, b"");
        self.client_seq = self.client_seq.wrapping_add(1);
        f
    }

    fn syn_ack(&mut self, t_us: u64) -> TcpFrame {
        let f = self.frame(
            t_us,
            false,
            TcpFlags::SYN | TcpFlags::ACK,
            self.server_seq,
            self.client_seq,
            b"",
        );
        self.server_seq = self.server_seq.wrapping_add(1);
        f
    }

    fn client_ack(&mut self, t_us: u64) -> TcpFrame {
        self.frame(t_us, true, TcpFlags::ACK, self.client_seq, self.server_seq, b"")
    }

    fn server_ack(&mut self, t_us: u64) -> TcpFrame {
        self.frame(t_us, false, TcpFlags::ACK, self.server_seq, self.client_seq, b"")
    }

    fn client_data(&mut self, t_us: u64, payload: &[u8]) -> TcpFrame {
        let f = self.frame(
            t_us,
            true,
            TcpFlags::ACK | TcpFlags::PSH,
            self.client_seq,
            self.server_seq,
            payload,
        );
        self.client_seq = self.client_seq.wrapping_add(payload.len() as u32);
        f
    }

    fn server_data(&mut self, t_us: u64, payload: &[u8]) -> TcpFrame {
        let f = self.frame(
            t_us,
            false,
            TcpFlags::ACK | TcpFlags::PSH,
            self.server_seq,
            self.client_seq,
            payload,
        );
        self.server_seq = self.server_seq.wrapping_add(payload.len() as u32);
        f
    }

    fn client_fin(&mut self, t_us: u64) -> TcpFrame {
        let f = self.frame(
            t_us,
            true,
            TcpFlags::FIN | TcpFlags::ACK,
            self.client_seq,
            self.server_seq,
            b"",
        );
        self.client_seq = self.client_seq.wrapping_add(1);
        f
    }

    fn server_fin(&mut self, t_us: u64) -> TcpFrame {
        let f = self.frame(
            t_us,
            false,
            TcpFlags::FIN | TcpFlags::ACK,
            self.server_seq,
            self.client_seq,
            b"",
        );
        self.server_seq = self.server_seq.wrapping_add(1);
        f
    }

    /// The anomalous segment: an established-flow ACK with both sequence
    /// fields zeroed.
    fn zeroed_ack(&mut self, t_us: u64) -> TcpFrame {
        self.frame(t_us, true, TcpFlags::ACK, 0, 0, b"")
    }
}

fn teardown(script: &mut Script, conn: &mut Conn, t_us: u64) {
    script.push(conn.client_fin(t_us));
    script.push(conn.server_ack(t_us + 10_000));
    script.push(conn.server_fin(t_us + 20_000));
    script.push(conn.client_ack(t_us + 30_000));
}

/// Clean conversation. The handshake lands on the anchor timeline
/// (16.479 s / 16.480 s / 16.480 s) and the first client data segment
/// goes out with sequence 79225 and acknowledgment 759.
fn script_normal(script: &mut Script, rng: &mut ChaCha8Rng, p: &ScenarioParams, t_off: u64) {
    let server_len = rng.random_range(100..=700usize);
    let mut conn = Conn::new(p, rng, p.service_port, Some(79_224));
    conn.server_seq = 758 - server_len as u32;

    script.push(conn.syn(t_off + 16_479_000));
    script.push(conn.syn_ack(t_off + 16_480_000));
    script.push(conn.client_ack(t_off + 16_480_000));

    let banner = filler_bytes(rng, server_len);
    script.push(conn.server_data(t_off + 16_520_000, &banner));

    let request_len = rng.random_range(50..=300);
    let request = filler_bytes(rng, request_len);
    let data = conn.client_data(t_off + 16_540_000, &request);
    debug_assert_eq!(data.seq, 79_225);
    debug_assert_eq!(data.ack, 759);
    script.push(data);

    let reply_len = rng.random_range(100..=400);
    let reply = filler_bytes(rng, reply_len);
    script.push(conn.server_data(t_off + 16_560_000, &reply));
    script.push(conn.client_ack(t_off + 16_580_000));

    for i in 0..rng.random_range(0..=2u64) {
        let extra_len = rng.random_range(40..=200);
        let extra = filler_bytes(rng, extra_len);
        script.push(conn.server_data(t_off + 16_600_000 + i * 20_000, &extra));
        script.push(conn.client_ack(t_off + 16_610_000 + i * 20_000));
    }

    teardown(script, &mut conn, t_off + 16_900_000);
}

/// File transfer carrying `p.signature` at a deterministic stream
/// offset, split across a segment boundary when `p.split` is set.
fn script_trojan(
    script: &mut Script,
    rng: &mut ChaCha8Rng,
    p: &ScenarioParams,
    t_off: u64,
) -> Result<(), SynthError> {
    let pattern = &p.signature.pattern;
    if pattern.is_empty() {
        return Err(SynthError::InvalidParameters("empty signature pattern".into()));
    }
    if p.segment_len <= pattern.len() {
        return Err(SynthError::InvalidParameters(format!(
            "segment length {} does not exceed the {}-byte pattern",
            p.segment_len,
            pattern.len()
        )));
    }
    if p.transfer_len < 3 * p.segment_len {
        return Err(SynthError::InvalidParameters(format!(
            "transfer of {} bytes is shorter than three {}-byte segments",
            p.transfer_len, p.segment_len
        )));
    }
    if let Some(split) = p.split {
        if split > pattern.len() {
            return Err(SynthError::InvalidParameters(format!(
                "split point {split} past the end of the {}-byte pattern",
                pattern.len()
            )));
        }
    }

    let segment_count = p.transfer_len.div_ceil(p.segment_len);
    // Pattern position in the transferred stream: straddling the middle
    // segment boundary when split, wholly inside the third segment
    // otherwise.
    let position = match p.split {
        Some(split) => p.segment_len * (segment_count / 2) - split,
        None => 2 * p.segment_len + rng.random_range(0..=(p.segment_len - pattern.len())),
    };

    let mut stream = filler_bytes(rng, p.transfer_len);
    stream[position..position + pattern.len()].copy_from_slice(pattern);
    let match_end_segment = (position + pattern.len() - 1) / p.segment_len;

    let mut conn = Conn::new(p, rng, p.service_port, None);
    conn.server_seq = rng.random_range(1_000..1_000_000_000);
    let flow = conn.flow_key();

    script.push(conn.syn(t_off + 16_479_000));
    script.push(conn.syn_ack(t_off + 16_480_000));
    script.push(conn.client_ack(t_off + 16_480_000));

    let request_len = rng.random_range(10..=60);
    let request = filler_bytes(rng, request_len);
    script.push(conn.client_data(t_off + 16_520_000, &request));

    let mut t = t_off + 16_560_000;
    for (j, chunk) in stream.chunks(p.segment_len).enumerate() {
        let index = script.push(conn.server_data(t, chunk));
        if j == match_end_segment {
            script.expect(
                index,
                "SIG-MATCH",
                &flow,
                format!(
                    "signature {} ({}) at stream offset {position}",
                    p.signature.id, p.signature.name
                ),
            );
        }
        t += 10_000;
        if j % 2 == 1 {
            script.push(conn.client_ack(t - 5_000));
        }
    }
    script.push(conn.client_ack(t));

    teardown(script, &mut conn, t + 100_000);
    Ok(())
}

/// The backdoor timeline: a probe SYN nothing answers (10.712 s), a
/// conversation on the service port (handshake at 16.479 s), a zeroed
/// segment opening an empty-ACK run, then a SYN to the mutated port
/// while the pair is still warm.
fn script_backdoor(
    script: &mut Script,
    rng: &mut ChaCha8Rng,
    p: &ScenarioParams,
    t_off: u64,
) -> Result<(), SynthError> {
    if p.empty_ack_run == 0 {
        return Err(SynthError::InvalidParameters(
            "empty-ACK run must hold at least one segment".into(),
        ));
    }
    if p.mutated_port == p.service_port {
        return Err(SynthError::InvalidParameters(
            "mutated port equals the service port".into(),
        ));
    }

    let mut probe = Conn::new(p, rng, p.probe_port, None);
    let probe_flow = probe.flow_key();
    let probe_index = script.push(probe.syn(t_off + 10_712_000));
    script.expect(
        probe_index,
        "HALF-OPEN-SYN",
        &probe_flow,
        "no reply to SYN".to_string(),
    );

    let mut conn = Conn::new(p, rng, p.service_port, None);
    conn.server_seq = rng.random_range(1_000..1_000_000_000);
    let flow = conn.flow_key();

    script.push(conn.syn(t_off + 16_479_000));
    script.push(conn.syn_ack(t_off + 16_480_000));
    script.push(conn.client_ack(t_off + 16_480_000));

    let request_len = rng.random_range(10..=40);
    let request = filler_bytes(rng, request_len);
    script.push(conn.client_data(t_off + 16_500_000, &request));
    let reply_len = rng.random_range(20..=80);
    let reply = filler_bytes(rng, reply_len);
    script.push(conn.server_data(t_off + 16_520_000, &reply));

    for i in 0..rng.random_range(0..=2u64) {
        let extra_len = rng.random_range(10..=60);
        let extra = filler_bytes(rng, extra_len);
        script.push(conn.client_data(t_off + 16_530_000 + i * 20_000, &extra));
        let extra_len = rng.random_range(10..=60);
        let extra = filler_bytes(rng, extra_len);
        script.push(conn.server_data(t_off + 16_540_000 + i * 20_000, &extra));
    }

    let run_base = t_off + 16_600_000;
    let mut last_ack_time = run_base;
    for j in 0..p.empty_ack_run {
        let t = run_base + u64::from(j) * 10_000;
        last_ack_time = t;
        let index = if j == 0 {
            let index = script.push(conn.zeroed_ack(t));
            script.expect(
                index,
                "ZERO-SEQACK",
                &flow,
                "seq=0 ack=0 flags=ACK".to_string(),
            );
            index
        } else {
            script.push(conn.client_ack(t))
        };
        if j == p.empty_ack_run - 1 {
            script.expect(
                index,
                "EMPTY-PAYLOAD-FLOOD",
                &flow,
                format!("{} consecutive empty ack segments", p.empty_ack_run),
            );
        }
    }

    let mut mutated = Conn::new(p, rng, p.mutated_port, None);
    let mutated_flow = mutated.flow_key();
    let index = script.push(mutated.syn(last_ack_time + 130_000));
    script.expect(
        index,
        "PORT-MUTATION",
        &mutated_flow,
        format!("port {} \u{2192} {}", p.service_port, p.mutated_port),
    );
    Ok(())
}

fn script_mixed(
    script: &mut Script,
    rng: &mut ChaCha8Rng,
    p: &ScenarioParams,
) -> Result<(), SynthError> {
    let sub = |net: u8| {
        let mut sub_params = p.clone();
        sub_params.client_ip = Ipv4Addr::new(10, 0, net, 1);
        sub_params.server_ip = Ipv4Addr::new(10, 0, net, 2);
        sub_params.client_mac = MacAddress([0x02, 0, 0, 0, net, 0x01]);
        sub_params.server_mac = MacAddress([0x02, 0, 0, 0, net, 0x02]);
        sub_params
    };
    script_normal(script, rng, &sub(1), 0);
    script_trojan(script, rng, &sub(2), 60_000_000)?;
    script_backdoor(script, rng, &sub(3), 120_000_000)?;
    Ok(())
}

/// Generate the scenario's trace bytes and manifest.
pub fn synth(scenario: &Scenario) -> Result<(Vec<u8>, Manifest), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut script = Script::new();
    let p = &scenario.params;
    if p.client_ip == p.server_ip {
        return Err(SynthError::InvalidParameters(
            "client and server addresses must differ".into(),
        ));
    }
    match scenario.kind {
        ScenarioKind::Normal => script_normal(&mut script, &mut rng, p, 0),
        ScenarioKind::TrojanHorse => script_trojan(&mut script, &mut rng, p, 0)?,
        ScenarioKind::Backdoor => script_backdoor(&mut script, &mut rng, p, 0)?,
        ScenarioKind::Mixed => script_mixed(&mut script, &mut rng, p)?,
    }
    script
        .expected
        .sort_by(|a, b| (a.packet_index, &a.rule).cmp(&(b.packet_index, &b.rule)));

    let mut bytes = Vec::new();
    write_pcap(&PcapHeader::canonical(), &script.records, &mut bytes)
        .expect("scripted records fit the canonical snaplen");
    let manifest = Manifest {
        scenario: scenario.kind.to_string(),
        seed: scenario.seed,
        packet_count: script.records.len(),
        expected: script.expected,
    };
    Ok((bytes, manifest))
}
