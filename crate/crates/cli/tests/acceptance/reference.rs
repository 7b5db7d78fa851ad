//! Brute-force reference analyzer used to cross-check the streaming
//! implementation. It re-parses raw frame bytes at fixed offsets and
//! tracks conversations with plain linear scans, so every rule is spelled
//! out a second time in the most literal way possible.

/// Detection thresholds, all in the reference's own units.
pub struct RefConfig {
    pub empty_threshold: u32,
    pub halfopen_timeout_us: u64,
    pub mutation_window_us: u64,
}

pub struct RefSignature {
    pub id: String,
    pub name: String,
    pub pattern: Vec<u8>,
}

#[derive(Debug, PartialEq, Eq)]
pub struct RefDetection {
    pub packet_index: usize,
    pub rule: &'static str,
    pub detail: String,
}

#[derive(Debug, PartialEq, Eq)]
pub struct RefEvent {
    pub packet_index: usize,
    pub label: &'static str,
}

type Host = [u8; 4];
type End = (Host, u16);
/// Canonical conversation key: endpoints ordered, smaller first.
type Key = (End, End);

struct ParsedTcp {
    src: End,
    dst: End,
    flags: u8,
    seq: u32,
    ack: u32,
    payload: Vec<u8>,
}

const FIN: u8 = 0x01;
const SYN: u8 = 0x02;
const RST: u8 = 0x04;
const ACK: u8 = 0x10;

fn flags_string(bits: u8) -> String {
    let names = [
        (FIN, "FIN"),
        (SYN, "SYN"),
        (RST, "RST"),
        (0x08, "PSH"),
        (ACK, "ACK"),
        (0x20, "URG"),
    ];
    let set: Vec<&str> = names
        .iter()
        .filter_map(|&(bit, name)| (bits & bit != 0).then_some(name))
        .collect();
    if set.is_empty() {
        "none".to_string()
    } else {
        set.join("|")
    }
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// Accept exactly the frames the streaming side keys to a TCP flow:
/// Ethernet II carrying IPv4 protocol 6 with a complete TCP header. The
/// payload is bounded by the IPv4 total length and by what was captured.
fn parse_tcp_frame(frame: &[u8]) -> Option<ParsedTcp> {
    if frame.len() < 14 || be16(&frame[12..14]) != 0x0800 {
        return None;
    }
    let ip = &frame[14..];
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = usize::from(ip[0] & 0x0f);
    if ihl < 5 || ip.len() < ihl * 4 {
        return None;
    }
    let total = usize::from(be16(&ip[2..4]));
    if total < ihl * 4 || ip[9] != 6 {
        return None;
    }
    let tcp = &ip[ihl * 4..total.min(ip.len())];
    if tcp.len() < 20 {
        return None;
    }
    let data_offset = usize::from(tcp[12] >> 4);
    if data_offset < 5 || tcp.len() < data_offset * 4 {
        return None;
    }
    Some(ParsedTcp {
        src: ([ip[12], ip[13], ip[14], ip[15]], be16(&tcp[0..2])),
        dst: ([ip[16], ip[17], ip[18], ip[19]], be16(&tcp[2..4])),
        flags: tcp[13] & 0x3f,
        seq: be32(&tcp[4..8]),
        ack: be32(&tcp[8..12]),
        payload: tcp[data_offset * 4..].to_vec(),
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Closed,
    SynSent,
    SynAckSeen,
    Established,
    FinSeen,
    Reset,
}

/// One direction's reassembly state: bytes since the last discontinuity,
/// the stream offset of their first byte, cumulative bytes consumed and
/// the sequence number the next in-order segment must carry.
#[derive(Default)]
struct Stream {
    bytes: Vec<u8>,
    base: u64,
    fed: u64,
    expected_seq: Option<u32>,
}

struct Flow {
    key: Key,
    phase: Phase,
    service_port: u16,
    syn_time: Option<u64>,
    syn_index: Option<usize>,
    syn_seq: Option<u32>,
    synack_seq: Option<u32>,
    empty_run: u32,
    last_activity: u64,
    from_lo: Stream,
    from_hi: Stream,
}

/// Analyze `(timestamp_us, frame_bytes)` records and return the
/// detections and conversation events the trace warrants.
pub fn analyze(
    records: &[(u64, Vec<u8>)],
    sigs: &[RefSignature],
    cfg: &RefConfig,
) -> (Vec<RefDetection>, Vec<RefEvent>) {
    let mut flows: Vec<Flow> = Vec::new();
    let mut detections: Vec<(usize, &'static str, String)> = Vec::new();
    let mut events: Vec<RefEvent> = Vec::new();

    for (index, (now, frame)) in records.iter().enumerate() {
        let now = *now;
        let Some(pkt) = parse_tcp_frame(frame) else {
            continue;
        };
        let (key, sender_is_lo) = if pkt.src <= pkt.dst {
            ((pkt.src, pkt.dst), true)
        } else {
            ((pkt.dst, pkt.src), false)
        };

        let syn = pkt.flags & SYN != 0;
        let ack = pkt.flags & ACK != 0;
        let rst = pkt.flags & RST != 0;
        let fin = pkt.flags & FIN != 0;

        let existing = flows.iter().position(|f| f.key == key);
        let prev_run = existing.map_or(0, |i| flows[i].empty_run);

        // A SYN opening a brand-new conversation: is another port on the
        // same address pair still warm? Scan in key order, keeping the
        // most recently active; ties keep the first (smallest key).
        if syn && !ack && !rst && !fin && existing.is_none() {
            let mut order: Vec<usize> = (0..flows.len()).collect();
            order.sort_by(|&a, &b| flows[a].key.cmp(&flows[b].key));
            let mut best: Option<(u64, u16)> = None;
            for i in order {
                let f = &flows[i];
                if (f.key.0 .0, f.key.1 .0) != (key.0 .0, key.1 .0)
                    || f.service_port == pkt.dst.1
                    || now.saturating_sub(f.last_activity) > cfg.mutation_window_us
                {
                    continue;
                }
                match best {
                    Some((t, _)) if f.last_activity <= t => {}
                    _ => best = Some((f.last_activity, f.service_port)),
                }
            }
            if let Some((_, old_port)) = best {
                detections.push((
                    index,
                    "PORT-MUTATION",
                    format!("port {old_port} \u{2192} {}", pkt.dst.1),
                ));
                events.push(RefEvent {
                    packet_index: index,
                    label: "port-mutation-candidate",
                });
            }
        }

        let fi = existing.unwrap_or_else(|| {
            flows.push(Flow {
                key,
                phase: Phase::Closed,
                service_port: pkt.dst.1,
                syn_time: None,
                syn_index: None,
                syn_seq: None,
                synack_seq: None,
                empty_run: 0,
                last_activity: 0,
                from_lo: Stream::default(),
                from_hi: Stream::default(),
            });
            flows.len() - 1
        });

        {
            let flow = &mut flows[fi];
            if rst {
                flow.phase = Phase::Reset;
                flow.empty_run = 0;
            } else if syn && !ack {
                if flow.phase == Phase::Closed {
                    flow.phase = Phase::SynSent;
                    flow.syn_time = Some(now);
                    flow.syn_index = Some(index);
                    flow.syn_seq = Some(pkt.seq);
                } else {
                    events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    });
                }
            } else if syn {
                if flow.phase == Phase::SynSent {
                    if let Some(syn_seq) = flow.syn_seq {
                        if pkt.ack != syn_seq.wrapping_add(1) {
                            events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    });
                        }
                    }
                    flow.phase = Phase::SynAckSeen;
                    flow.synack_seq = Some(pkt.seq);
                } else {
                    events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    });
                }
            } else if fin {
                match flow.phase {
                    Phase::Established => flow.phase = Phase::FinSeen,
                    Phase::FinSeen => {}
                    _ => events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    }),
                }
            } else {
                match flow.phase {
                    Phase::SynAckSeen if ack => {
                        if let Some(synack_seq) = flow.synack_seq {
                            if pkt.ack != synack_seq.wrapping_add(1) {
                                events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    });
                            }
                        }
                        flow.phase = Phase::Established;
                        events.push(RefEvent {
                            packet_index: index,
                            label: "handshake-complete",
                        });
                    }
                    Phase::SynAckSeen => events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    }),
                    Phase::Established => {
                        if pkt.payload.is_empty() {
                            if ack {
                                flow.empty_run += 1;
                            }
                        } else {
                            flow.empty_run = 0;
                        }
                    }
                    Phase::FinSeen => {
                        if !pkt.payload.is_empty() {
                            events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    });
                        }
                    }
                    Phase::Closed | Phase::SynSent | Phase::Reset => events.push(RefEvent {
                        packet_index: index,
                        label: "state-violation",
                    }),
                }
            }
            flow.last_activity = now;

            let run = flow.empty_run;
            if run == cfg.empty_threshold && run == prev_run + 1 {
                detections.push((
                    index,
                    "EMPTY-PAYLOAD-FLOOD",
                    format!("{run} consecutive empty ack segments"),
                ));
            }
        }

        if pkt.seq == 0 && pkt.ack == 0 && !(syn && !ack) {
            detections.push((
                index,
                "ZERO-SEQACK",
                format!("seq=0 ack=0 flags={}", flags_string(pkt.flags)),
            ));
        }

        let flow = &mut flows[fi];
        if rst {
            // A reset starts both directions over with fresh offsets.
            flow.from_lo = Stream::default();
            flow.from_hi = Stream::default();
        } else if !pkt.payload.is_empty() {
            let stream = if sender_is_lo { &mut flow.from_lo } else { &mut flow.from_hi };
            let in_order = stream.expected_seq.is_none_or(|e| e == pkt.seq);
            if !in_order {
                // Discontinuity: context is lost, matching restarts from
                // this segment, but stream offsets keep counting bytes.
                stream.bytes.clear();
                stream.base = stream.fed;
            }
            let prev_len = stream.bytes.len();
            stream.bytes.extend_from_slice(&pkt.payload);
            stream.fed += pkt.payload.len() as u64;
            stream.expected_seq = Some(pkt.seq.wrapping_add(pkt.payload.len() as u32));

            // Any match newly completed by this segment must end inside
            // it, so only starts within a pattern length of the previous
            // end can yield new hits.
            let mut hits: Vec<(u64, usize)> = Vec::new();
            for (sig_index, sig) in sigs.iter().enumerate() {
                let plen = sig.pattern.len();
                if plen == 0 || stream.bytes.len() < plen {
                    continue;
                }
                let first = prev_len.saturating_sub(plen - 1);
                for start in first..=stream.bytes.len() - plen {
                    if stream.bytes[start..start + plen] == sig.pattern[..] {
                        hits.push((stream.base + start as u64, sig_index));
                    }
                }
            }
            hits.sort_unstable();
            for (offset, sig_index) in hits {
                let sig = &sigs[sig_index];
                detections.push((
                    index,
                    "SIG-MATCH",
                    format!(
                        "signature {} ({}) at stream offset {offset}",
                        sig.id, sig.name
                    ),
                ));
            }
        }
    }

    // End of trace: conversations stuck mid-handshake past the timeout,
    // reported at their SYN in (SYN index, key) order.
    if let Some(end) = records.iter().map(|(t, _)| *t).max() {
        let mut half_open: Vec<(usize, Key, &'static str)> = flows
            .iter()
            .filter_map(|f| {
                if !matches!(f.phase, Phase::SynSent | Phase::SynAckSeen) {
                    return None;
                }
                let (syn_time, syn_index) = (f.syn_time?, f.syn_index?);
                if end.saturating_sub(syn_time) <= cfg.halfopen_timeout_us {
                    return None;
                }
                let detail = if f.phase == Phase::SynSent {
                    "no reply to SYN"
                } else {
                    "handshake incomplete"
                };
                Some((syn_index, f.key, detail))
            })
            .collect();
        half_open.sort();
        for (syn_index, _, detail) in half_open {
            detections.push((syn_index, "HALF-OPEN-SYN", detail.to_string()));
            events.push(RefEvent {
                packet_index: syn_index,
                label: "half-open-timeout",
            });
        }
    }

    detections.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let detections = detections
        .into_iter()
        .map(|(packet_index, rule, detail)| RefDetection {
            packet_index,
            rule,
            detail,
        })
        .collect();
    (detections, events)
}
