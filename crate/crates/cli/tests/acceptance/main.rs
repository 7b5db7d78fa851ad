//! Acceptance gate: one test per shipping criterion. Each test prints a
//! single PASS line on success; a failing criterion fails its test.

mod reference;

use std::collections::HashMap;
use std::fs;
use std::net::Ipv4Addr;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netsift::checksum::{internet_checksum, verifies};
use netsift::dissect::{dissect, verify_ipv4_checksum, verify_tcp_checksum, TcpFlags};
use netsift::engine::{evaluate, evaluate_bytes, RuleConfig, RuleId};
use netsift::evidence::{append_detections, read_evidence, EvidenceRecord};
use netsift::hexdump::hexdump;
use netsift::pcap::{
    open_source_reader, read_pcap, write_pcap, BoundedSource, CaptureRecord, PcapHeader,
    DEFAULT_PACKET_LIMIT,
};
use netsift::signatures::{default_signatures, SignatureSet};
use netsift::synth::{icmp_record, synth, udp_record, Scenario, ScenarioKind, TcpFrame, ALL_SCENARIOS};

use reference::{RefConfig, RefSignature};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netsift"))
}

fn default_analysis(bytes: &[u8]) -> netsift::engine::Analysis {
    evaluate_bytes(bytes, &SignatureSet::default_set(), &RuleConfig::default()).unwrap()
}

/// 1. For every scenario and 100 seeds, analyzing the generated trace
///    yields exactly the manifest's detections.
#[test]
fn criterion_1_end_to_end_scenario_oracle() {
    let started = Instant::now();
    let mut traces = 0;
    for kind in ALL_SCENARIOS {
        for seed in 0..100 {
            let (bytes, manifest) = synth(&Scenario::new(kind, seed)).unwrap();
            let analysis = default_analysis(&bytes);
            let found: Vec<(usize, String)> = analysis
                .detections
                .iter()
                .map(|d| (d.packet_index, d.rule.to_string()))
                .collect();
            let expected: Vec<(usize, String)> = manifest
                .expected
                .iter()
                .map(|e| (e.packet_index, e.rule.clone()))
                .collect();
            assert_eq!(found, expected, "{kind} seed {seed}");
            for (det, exp) in analysis.detections.iter().zip(&manifest.expected) {
                assert_eq!(det.flow.to_string(), exp.flow, "{kind} seed {seed}");
                assert_eq!(det.detail, exp.detail, "{kind} seed {seed}");
            }
            traces += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(10),
        "took {elapsed:?}, budget 10 s"
    );
    println!("PASS criterion 1: {traces} traces match their manifests in {elapsed:?}");
}

/// 2. The default backdoor scenario produces the anchored detection set:
///    one port mutation 80 -> 82, one half-open SYN at 10.712 s, at
///    least one zeroed seq/ack segment and one empty-payload flood.
#[test]
fn criterion_2_backdoor_fixture() {
    for seed in [0, 7, 42] {
        let (bytes, _) = synth(&Scenario::new(ScenarioKind::Backdoor, seed)).unwrap();
        let analysis = default_analysis(&bytes);
        let of = |rule: RuleId| -> Vec<_> {
            analysis.detections.iter().filter(|d| d.rule == rule).collect()
        };

        let mutations = of(RuleId::PortMutation);
        assert_eq!(mutations.len(), 1, "seed {seed}");
        assert_eq!(mutations[0].detail, "port 80 \u{2192} 82");
        assert!(mutations[0].detail.contains("80 \u{2192} 82"));

        let half_open = of(RuleId::HalfOpenSyn);
        assert_eq!(half_open.len(), 1, "seed {seed}");
        assert_eq!(
            (half_open[0].ts_sec, half_open[0].ts_usec),
            (10, 712_000),
            "seed {seed}"
        );
        assert_eq!(
            EvidenceRecord::from_detection(half_open[0]).ts,
            "1970-01-01T00:00:10.712000Z"
        );

        assert!(!of(RuleId::ZeroSeqAck).is_empty(), "seed {seed}");
        assert_eq!(of(RuleId::EmptyPayloadFlood).len(), 1, "seed {seed}");
    }
    println!("PASS criterion 2: backdoor fixture anchored (80 \u{2192} 82, 10.712 s SYN, zeroed seq/ack, flood)");
}

/// 3. A transfer carrying the first builtin signature matches exactly
///    once for every split of the pattern across two segments, at the
///    offset a naive reassembled-stream scan reports.
#[test]
fn criterion_3_trojan_split_fixture() {
    let pattern = default_signatures().swap_remove(0).pattern;
    for split in 0..=pattern.len() {
        let mut scenario = Scenario::new(ScenarioKind::TrojanHorse, 1);
        scenario.params.split = Some(split);
        let (bytes, _) = synth(&scenario).unwrap();
        let analysis = default_analysis(&bytes);

        let sig_hits: Vec<_> = analysis
            .detections
            .iter()
            .filter(|d| d.rule == RuleId::SigMatch)
            .collect();
        assert_eq!(sig_hits.len(), 1, "split {split}");

        // Naive oracle: concatenate the server-sent payloads and scan.
        let (_, records) = read_pcap(bytes.as_slice()).unwrap();
        let mut stream = Vec::new();
        for (i, record) in records.iter().enumerate() {
            if let Some(seg) = dissect(record, i).tcp() {
                if seg.src_port == 80 {
                    stream.extend_from_slice(&seg.payload);
                }
            }
        }
        let offsets: Vec<u64> = stream
            .windows(pattern.len())
            .enumerate()
            .filter_map(|(i, w)| (w == pattern.as_slice()).then_some(i as u64))
            .collect();
        assert_eq!(offsets.len(), 1, "split {split}");
        assert_eq!(sig_hits[0].payload_offset, Some(offsets[0]), "split {split}");
        assert_eq!(sig_hits[0].signature_id.as_deref(), Some("SIG-001"));
    }
    println!(
        "PASS criterion 3: one signature match at the oracle offset for all {} split points",
        pattern.len() + 1
    );
}

/// 4. The normal scenario is clean: no detections, and the binary exits
///    with status 0.
#[test]
fn criterion_4_clean_baseline() {
    let dir = tempfile::tempdir().unwrap();
    for seed in [0, 5, 99] {
        let (bytes, _) = synth(&Scenario::new(ScenarioKind::Normal, seed)).unwrap();
        let analysis = default_analysis(&bytes);
        assert!(
            analysis.detections.is_empty(),
            "seed {seed}: {:?}",
            analysis.detections
        );

        let pcap = dir.path().join(format!("normal-{seed}.pcap"));
        fs::write(&pcap, &bytes).unwrap();
        let output = bin()
            .arg("analyze")
            .arg(&pcap)
            .arg("--out")
            .arg(dir.path().join(format!("out-{seed}")))
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "seed {seed}");
        assert!(String::from_utf8_lossy(&output.stdout).contains("no detections"));
    }
    println!("PASS criterion 4: clean baseline yields zero detections and exit code 0");
}

/// 5. Checksums agree with an independent ones-complement oracle on
///    1,000 random inputs and every single-byte corruption is caught.
#[test]
fn criterion_5_checksum_oracle() {
    fn oracle(data: &[u8]) -> u16 {
        let mut total: u64 = 0;
        for chunk in data.chunks(2) {
            let word = if chunk.len() == 2 {
                u16::from_be_bytes([chunk[0], chunk[1]])
            } else {
                u16::from_be_bytes([chunk[0], 0])
            };
            total += u64::from(word);
        }
        while total > 0xffff {
            total = (total & 0xffff) + (total >> 16);
        }
        !(total as u16)
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for round in 0..1000 {
        // Arbitrary buffer: computation matches the oracle.
        let len = rng.random_range(0..120);
        let buf: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        assert_eq!(internet_checksum(&buf), oracle(&buf), "round {round}");

        // Random IPv4 header: checksummed headers verify, then fail
        // verification after any single-byte corruption.
        let mut header: Vec<u8> = (0..20).map(|_| rng.random()).collect();
        header[10] = 0;
        header[11] = 0;
        let sum = oracle(&header);
        header[10..12].copy_from_slice(&sum.to_be_bytes());
        assert!(verifies(&header), "round {round}");
        let victim = rng.random_range(0..header.len());
        let old = header[victim];
        header[victim] = loop {
            let b: u8 = rng.random();
            if b != old {
                break b;
            }
        };
        assert!(!verifies(&header), "round {round} corruption undetected");

        // Random TCP segment built over IPv4: both verifiers accept the
        // valid frame and reject a corrupted one.
        let mut frame = TcpFrame::new();
        frame.src_port = rng.random();
        frame.dst_port = rng.random();
        frame.seq = rng.random();
        frame.ack = rng.random();
        frame.flags = TcpFlags::from_byte(rng.random_range(0..0x40));
        frame.window = rng.random();
        frame.ip_id = rng.random();
        let payload_len = rng.random_range(0..64);
        frame.payload = (0..payload_len).map(|_| rng.random()).collect();
        let record = frame.build();
        let pkt = dissect(&record, 0);
        let ip = pkt.ip.as_ref().unwrap();
        assert!(verify_ipv4_checksum(ip), "round {round}");
        assert!(verify_tcp_checksum(ip), "round {round}");

        let mut damaged = record.data.clone();
        // Skip the data-offset byte so the segment still parses.
        let victim = loop {
            let i = rng.random_range(34..damaged.len());
            if i != 34 + 12 {
                break i;
            }
        };
        let old = damaged[victim];
        damaged[victim] = loop {
            let b: u8 = rng.random();
            if b != old {
                break b;
            }
        };
        let pkt = dissect(&CaptureRecord::new(0, 0, damaged), 0);
        assert!(
            !verify_tcp_checksum(pkt.ip.as_ref().unwrap()),
            "round {round} tcp corruption undetected"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}, budget 1 s");
    println!("PASS criterion 5: 1000 checksum rounds match the oracle, corruption caught, in {elapsed:?}");
}

/// 6. A 1000-record trace survives write -> read untouched and in
///    order, and an independently encoded byte-swapped twin decodes to
///    the same records.
#[test]
fn criterion_6_pcap_roundtrip() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xca9);
    let records: Vec<CaptureRecord> = (0..1000)
        .map(|i| {
            let len = rng.random_range(0..200);
            CaptureRecord::new(
                i,
                rng.random_range(0..1_000_000),
                (0..len).map(|_| rng.random()).collect(),
            )
        })
        .collect();

    let mut bytes = Vec::new();
    write_pcap(&PcapHeader::canonical(), &records, &mut bytes).unwrap();
    let (header, reread) = read_pcap(bytes.as_slice()).unwrap();
    assert_eq!(header.linktype, 1);
    assert_eq!(header.snaplen, 65_535);
    assert_eq!(reread, records);

    // Same records, encoded big-endian by hand: the swapped magic must
    // route every header field through byte order conversion.
    let mut swapped = Vec::new();
    swapped.extend_from_slice(&0xa1b2_c3d4u32.to_be_bytes());
    swapped.extend_from_slice(&2u16.to_be_bytes());
    swapped.extend_from_slice(&4u16.to_be_bytes());
    swapped.extend_from_slice(&0i32.to_be_bytes());
    swapped.extend_from_slice(&0u32.to_be_bytes());
    swapped.extend_from_slice(&65_535u32.to_be_bytes());
    swapped.extend_from_slice(&1u32.to_be_bytes());
    for r in &records {
        swapped.extend_from_slice(&r.ts_sec.to_be_bytes());
        swapped.extend_from_slice(&r.ts_usec.to_be_bytes());
        swapped.extend_from_slice(&(r.data.len() as u32).to_be_bytes());
        swapped.extend_from_slice(&r.orig_len.to_be_bytes());
        swapped.extend_from_slice(&r.data);
    }
    let (twin_header, twin) = read_pcap(swapped.as_slice()).unwrap();
    assert_eq!(twin_header.linktype, 1);
    assert_eq!(twin_header.snaplen, 65_535);
    assert_eq!(twin, records);

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}, budget 1 s");
    println!("PASS criterion 6: 1000-record round trip and byte-swapped twin identical in {elapsed:?}");
}

/// 7. The hex dump renders the frozen 16-byte row layout and stays
///    lossless under re-decoding of the hex column.
#[test]
fn criterion_7_hexdump_golden() {
    let bytes: Vec<u8> = (0x00..=0x0f).collect();
    assert_eq!(
        hexdump(&bytes, 0),
        "0000  00 01 02 03 04 05 06 07  08 09 0a 0b 0c 0d 0e 0f  ................\n"
    );
    assert_eq!(
        hexdump(b"ABC", 0),
        "0000  41 42 43                                          ABC\n"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0xd0);
    for round in 0..200 {
        let len = rng.random_range(0..400);
        let data: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let dump = hexdump(&data, 0);
        let mut recovered = Vec::new();
        for line in dump.lines() {
            let hex_column: String = line[6..54].split_whitespace().collect();
            assert_eq!(hex_column.len() % 2, 0);
            for i in (0..hex_column.len()).step_by(2) {
                recovered.push(u8::from_str_radix(&hex_column[i..i + 2], 16).unwrap());
            }
        }
        assert_eq!(recovered, data, "round {round}");
    }
    println!("PASS criterion 7: frozen hexdump rows verified and 200 dumps re-decoded losslessly");
}

/// 8. Evidence appends stay prefix-valid with every field intact, and
///    rebuilding the report from the log reproduces it byte for byte.
#[test]
fn criterion_8_evidence_log_and_report_identity() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("evidence.log");

    let (bytes, _) = synth(&Scenario::new(ScenarioKind::Backdoor, 3)).unwrap();
    let analysis = default_analysis(&bytes);
    assert!(analysis.detections.len() >= 4);

    let mut written = Vec::new();
    for (i, detection) in analysis.detections.iter().enumerate() {
        append_detections(&log, std::slice::from_ref(detection)).unwrap();
        written.push(EvidenceRecord::from_detection(detection));

        let file = read_evidence(&log).unwrap();
        assert!(file.malformed.is_empty(), "append {i} broke the log");
        assert_eq!(file.records, written, "append {i} altered earlier lines");
        for record in &file.records {
            assert!(!record.ts.is_empty());
            assert!(!record.proto.is_empty());
            assert!(!record.src_mac.is_empty() && !record.dst_mac.is_empty());
            assert!(!record.src_ip.is_empty() && !record.dst_ip.is_empty());
            assert!(!record.rule.is_empty() && !record.severity.is_empty());
            assert!(!record.detail.is_empty());
        }
    }

    // Binary pass: analyze writes the report, then rebuilding it from
    // the log alone must be byte-identical.
    let pcap = dir.path().join("backdoor.pcap");
    fs::write(&pcap, &bytes).unwrap();
    let out1 = dir.path().join("out1");
    let status = bin()
        .arg("analyze")
        .arg(&pcap)
        .arg("--out")
        .arg(&out1)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));

    let out2 = dir.path().join("out2");
    let status = bin()
        .arg("report")
        .arg(out1.join("evidence.log"))
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));

    let first = fs::read(out1.join("report.html")).unwrap();
    let second = fs::read(out2.join("report.html")).unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, second, "rebuilt report differs");
    println!("PASS criterion 8: prefix-valid appends and byte-identical report rebuild");
}

type DirKey = ([u8; 4], u16, [u8; 4], u16);

struct TraceGen {
    rng: ChaCha8Rng,
    t_us: u64,
    seqs: HashMap<DirKey, u32>,
    pending: HashMap<DirKey, Vec<u8>>,
    patterns: Vec<Vec<u8>>,
}

impl TraceGen {
    fn new(seed: u64) -> Self {
        TraceGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            t_us: 1_000_000,
            seqs: HashMap::new(),
            pending: HashMap::new(),
            patterns: default_signatures().into_iter().map(|s| s.pattern).collect(),
        }
    }

    fn advance_clock(&mut self) -> (u32, u32) {
        let t = self.t_us;
        self.t_us += self.rng.random_range(1_000..300_000);
        if self.rng.random_range(0..25) == 0 {
            self.t_us += self.rng.random_range(1_000_000..8_000_000);
        }
        ((t / 1_000_000) as u32, (t % 1_000_000) as u32)
    }

    fn bytes(&mut self, len: usize) -> Vec<u8> {
        (0..len).map(|_| self.rng.random()).collect()
    }

    fn data_payload(&mut self, key: DirKey) -> Vec<u8> {
        if let Some(suffix) = self.pending.remove(&key) {
            // Finish a pattern split across segments.
            let tail_len = self.rng.random_range(0..=10);
            let tail = self.bytes(tail_len);
            return [suffix, tail].concat();
        }
        let kind = self.rng.random_range(0..100);
        if kind < 15 {
            let pat = self.patterns[self.rng.random_range(0..self.patterns.len())].clone();
            let pre = {
                let n = self.rng.random_range(0..=8);
                self.bytes(n)
            };
            let post = {
                let n = self.rng.random_range(0..=8);
                self.bytes(n)
            };
            [pre, pat, post].concat()
        } else if kind < 30 {
            // Send a pattern prefix now; the rest goes out with this
            // direction's next data segment.
            let pat = self.patterns[self.rng.random_range(0..self.patterns.len())].clone();
            let cut = self.rng.random_range(1..pat.len());
            self.pending.insert(key, pat[cut..].to_vec());
            let n = self.rng.random_range(0..=10);
            let pre = self.bytes(n);
            [pre, pat[..cut].to_vec()].concat()
        } else {
            let n = self.rng.random_range(1..=40);
            self.bytes(n)
        }
    }

    fn next_record(&mut self) -> CaptureRecord {
        const HOSTS: [[u8; 4]; 3] = [[10, 77, 0, 1], [10, 77, 0, 2], [10, 77, 0, 3]];
        const SPORTS: [u16; 2] = [20_001, 20_002];
        const DPORTS: [u16; 3] = [80, 82, 4_444];

        let shape = self.rng.random_range(0..100);
        if shape < 8 {
            let (sec, usec) = self.advance_clock();
            let n = self.rng.random_range(0..30);
            let payload = self.bytes(n);
            return udp_record(
                sec,
                usec,
                Ipv4Addr::from(HOSTS[0]),
                Ipv4Addr::from(HOSTS[1]),
                self.rng.random_range(1024..65535),
                53,
                &payload,
            );
        }
        if shape < 12 {
            let (sec, usec) = self.advance_clock();
            let n = self.rng.random_range(0..20);
            let body = self.bytes(n);
            return icmp_record(
                sec,
                usec,
                Ipv4Addr::from(HOSTS[2]),
                Ipv4Addr::from(HOSTS[0]),
                8,
                0,
                &body,
            );
        }
        if shape < 16 {
            // Junk frame; never IPv4, so neither analyzer keys it.
            let (sec, usec) = self.advance_clock();
            let n = self.rng.random_range(0..60);
            let mut junk = self.bytes(n);
            if junk.len() >= 14 {
                junk[12] = 0x86;
                junk[13] = 0xdd;
            }
            return CaptureRecord::new(sec, usec, junk);
        }

        let si = self.rng.random_range(0..HOSTS.len());
        let di = (si + self.rng.random_range(1..HOSTS.len())) % HOSTS.len();
        let src_host = HOSTS[si];
        let dst_host = HOSTS[di];
        let src_port = SPORTS[self.rng.random_range(0..SPORTS.len())];
        let dst_port = DPORTS[self.rng.random_range(0..DPORTS.len())];
        let key: DirKey = (src_host, src_port, dst_host, dst_port);
        let rev: DirKey = (dst_host, dst_port, src_host, src_port);

        let peer_seq = self.seqs.get(&rev).copied();
        let my_seq = {
            let init = self.rng.random_range(1_000..1_000_000_000);
            *self.seqs.entry(key).or_insert(init)
        };
        let ack_value = match self.rng.random_range(0..10) {
            0..5 => peer_seq.unwrap_or(0),
            5..8 => self.rng.random(),
            _ => 0,
        };

        let class = self.rng.random_range(0..100);
        let (flag_bits, seq, ack, payload, seq_used) = match class {
            0..18 => (TcpFlags::SYN, my_seq, 0, Vec::new(), 1u32),
            18..28 => (TcpFlags::SYN | TcpFlags::ACK, my_seq, ack_value, Vec::new(), 1),
            28..48 => (TcpFlags::ACK, my_seq, ack_value, Vec::new(), 0),
            48..72 => {
                let payload = self.data_payload(key);
                let used = payload.len() as u32;
                (TcpFlags::ACK | TcpFlags::PSH, my_seq, ack_value, payload, used)
            }
            72..80 => (TcpFlags::FIN | TcpFlags::ACK, my_seq, ack_value, Vec::new(), 1),
            80..88 => {
                let bits = if self.rng.random_range(0..2) == 0 {
                    TcpFlags::RST
                } else {
                    TcpFlags::RST | TcpFlags::ACK
                };
                (bits, my_seq, ack_value, Vec::new(), 0)
            }
            88..94 => (TcpFlags::ACK, 0, 0, Vec::new(), 0),
            _ => (self.rng.random_range(0..0x40), my_seq, ack_value, Vec::new(), 0),
        };

        if flag_bits & TcpFlags::RST != 0 {
            // Both directions start over after a reset.
            self.seqs.remove(&key);
            self.seqs.remove(&rev);
            self.pending.remove(&key);
            self.pending.remove(&rev);
        } else if seq_used > 0 {
            self.seqs.insert(key, my_seq.wrapping_add(seq_used));
        }

        let (sec, usec) = self.advance_clock();
        let mut frame = TcpFrame::new();
        frame.ts_sec = sec;
        frame.ts_usec = usec;
        frame.src_ip = Ipv4Addr::from(src_host);
        frame.dst_ip = Ipv4Addr::from(dst_host);
        frame.src_port = src_port;
        frame.dst_port = dst_port;
        frame.seq = seq;
        frame.ack = ack;
        frame.flags = TcpFlags::from_byte(flag_bits);
        frame.window = self.rng.random();
        frame.ip_id = self.rng.random();
        frame.payload = payload;
        frame.build()
    }
}

/// 9. On 500 randomized short traces, detections and conversation
///    events equal a brute-force reference analyzer.
#[test]
fn criterion_9_flow_tracker_equivalence() {
    let sigs = SignatureSet::default_set();
    let ref_sigs: Vec<RefSignature> = default_signatures()
        .into_iter()
        .map(|s| RefSignature {
            id: s.id,
            name: s.name,
            pattern: s.pattern,
        })
        .collect();

    let mut total_detections = 0;
    let mut total_events = 0;
    for seed in 0..500u64 {
        let mut generator = TraceGen::new(seed);
        let config = RuleConfig {
            empty_payload_threshold: generator.rng.random_range(1..=3),
            halfopen_timeout_secs: [1.0, 5.0][generator.rng.random_range(0..2)],
            mutation_window_secs: [0.5, 1.0][generator.rng.random_range(0..2)],
            ..RuleConfig::default()
        };

        let count = generator.rng.random_range(0..=50);
        let records: Vec<CaptureRecord> = (0..count).map(|_| generator.next_record()).collect();

        let source = BoundedSource {
            header: PcapHeader::canonical(),
            records,
            truncated: false,
        };
        let analysis = evaluate(&source, &sigs, &config).unwrap();

        let raw: Vec<(u64, Vec<u8>)> = source
            .records
            .iter()
            .map(|r| (r.timestamp_micros(), r.data.clone()))
            .collect();
        let ref_config = RefConfig {
            empty_threshold: config.empty_payload_threshold,
            halfopen_timeout_us: (config.halfopen_timeout_secs * 1_000_000.0).round() as u64,
            mutation_window_us: (config.mutation_window_secs * 1_000_000.0).round() as u64,
        };
        let (ref_detections, ref_events) = reference::analyze(&raw, &ref_sigs, &ref_config);

        let got: Vec<(usize, &str, String)> = analysis
            .detections
            .iter()
            .map(|d| (d.packet_index, d.rule.as_str(), d.detail.clone()))
            .collect();
        let want: Vec<(usize, &str, String)> = ref_detections
            .into_iter()
            .map(|d| (d.packet_index, d.rule, d.detail))
            .collect();
        assert_eq!(got, want, "seed {seed} detections diverge");

        let got_events: Vec<(usize, &str)> = analysis
            .flow_events
            .iter()
            .map(|e| (e.packet_index, e.kind.label()))
            .collect();
        let want_events: Vec<(usize, &str)> = ref_events
            .into_iter()
            .map(|e| (e.packet_index, e.label))
            .collect();
        assert_eq!(got_events, want_events, "seed {seed} events diverge");

        total_detections += got.len();
        total_events += got_events.len();
    }
    assert!(total_detections > 100, "generator too tame: {total_detections} detections");
    assert!(total_events > 500, "generator too tame: {total_events} events");
    println!(
        "PASS criterion 9: 500 randomized traces agree with the reference ({total_detections} detections, {total_events} events)"
    );
}

/// The analyzer honors its record cap the same way both entry points do;
/// exercised here because criterion 1 and 9 both lean on it.
#[test]
fn record_limit_is_shared_by_entry_points() {
    let (bytes, _) = synth(&Scenario::new(ScenarioKind::Mixed, 4)).unwrap();
    let capped = open_source_reader(bytes.as_slice(), 5).unwrap();
    assert_eq!(capped.records.len(), 5);
    assert!(capped.truncated);
    let full = open_source_reader(bytes.as_slice(), DEFAULT_PACKET_LIMIT).unwrap();
    assert!(!full.truncated);
}
