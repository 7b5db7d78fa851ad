//! Command-line front end: analyze captures, dump packets, generate
//! synthetic traces and rebuild reports from evidence logs.
//!
//! Exit codes: 0 when the command succeeds and `analyze` found nothing,
//! 1 when `analyze` produced detections, 2 on any error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use netsift::dissect::{dissect, DissectedPacket, Transport};
use netsift::engine::{evaluate, RuleConfig, RuleId};
use netsift::evidence::{append_detections, read_evidence, EvidenceFile};
use netsift::hexdump::hexdump;
use netsift::pcap::{open_source_reader, BoundedSource, DEFAULT_PACKET_LIMIT};
use netsift::report::{render_html, render_summary_json, summarize};
use netsift::signatures::SignatureSet;
use netsift::synth::{synth, Scenario, ScenarioKind};

#[derive(Parser)]
#[command(
    name = "netsift",
    version,
    about = "Dissect packet captures and flag trojan-style traffic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a capture, append findings to the evidence log and
    /// rebuild the reports
    Analyze(AnalyzeArgs),
    /// Print per-packet summaries with payload hex dumps
    Dump(DumpArgs),
    /// Generate a synthetic capture and its expected-detection manifest
    Synth(SynthArgs),
    /// Rebuild the HTML report from an existing evidence log
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// Capture file to read, or - for standard input
    input: String,
    /// Stop after this many records
    #[arg(long, default_value_t = DEFAULT_PACKET_LIMIT)]
    limit: usize,
    /// Signature file (tab-separated); defaults to the builtin set
    #[arg(long)]
    signatures: Option<PathBuf>,
    /// Directory for evidence.log, summary.json and report.html
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Consecutive empty ACK segments that count as a flood
    #[arg(long, default_value_t = 3)]
    empty_threshold: u32,
    /// Seconds before an unanswered SYN counts as half-open
    #[arg(long, default_value_t = 5.0)]
    halfopen_timeout: f64,
    /// Seconds within which a new port on a known pair counts as mutation
    #[arg(long, default_value_t = 1.0)]
    mutation_window: f64,
    /// Enable only these rules (repeatable); all rules when omitted
    #[arg(long = "rule")]
    rules: Vec<String>,
}

#[derive(clap::Args)]
struct DumpArgs {
    /// Capture file to read, or - for standard input
    input: String,
    /// Dump only this packet index
    #[arg(long)]
    packet: Option<usize>,
    /// Stop after this many records
    #[arg(long, default_value_t = DEFAULT_PACKET_LIMIT)]
    limit: usize,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Scenario: normal, trojan-horse, backdoor or mixed
    scenario: String,
    /// Seed; the same seed always yields the same trace
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the capture and manifest
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Evidence log to render
    evidence: PathBuf,
    /// Directory for report.html
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Dump(args) => cmd_dump(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn read_input(input: &str) -> Result<Vec<u8>> {
    if input == "-" {
        let mut bytes = Vec::new();
        std::io::stdin()
            .read_to_end(&mut bytes)
            .context("reading standard input")?;
        Ok(bytes)
    } else {
        fs::read(input).with_context(|| format!("reading {input}"))
    }
}

fn load_source(input: &str, limit: usize) -> Result<BoundedSource> {
    let bytes = read_input(input)?;
    open_source_reader(Cursor::new(bytes), limit)
        .with_context(|| format!("parsing capture {input}"))
}

fn warn_malformed(path: &Path, file: &EvidenceFile) {
    for bad in &file.malformed {
        eprintln!(
            "warning: {} line {} is not a valid evidence record: {}",
            path.display(),
            bad.line,
            bad.reason
        );
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32> {
    let source = load_source(&args.input, args.limit)?;

    let sigs = match &args.signatures {
        Some(path) => SignatureSet::from_file(path)
            .with_context(|| format!("loading signatures from {}", path.display()))?,
        None => SignatureSet::default_set(),
    };

    let mut config = RuleConfig {
        empty_payload_threshold: args.empty_threshold,
        halfopen_timeout_secs: args.halfopen_timeout,
        mutation_window_secs: args.mutation_window,
        ..RuleConfig::default()
    };
    if !args.rules.is_empty() {
        config.enabled = args
            .rules
            .iter()
            .map(|name| name.parse::<RuleId>())
            .collect::<Result<_, _>>()?;
    }
    config.validate()?;

    let analysis = evaluate(&source, &sigs, &config)?;
    if analysis.truncated {
        eprintln!(
            "warning: record limit {} reached, remainder of {} ignored",
            args.limit, args.input
        );
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let evidence_path = args.out.join("evidence.log");
    append_detections(&evidence_path, &analysis.detections)?;

    let evidence = read_evidence(&evidence_path)?;
    warn_malformed(&evidence_path, &evidence);

    let summary = summarize(&args.input, &analysis.stats, &evidence.records);
    fs::write(args.out.join("summary.json"), render_summary_json(&summary))
        .with_context(|| format!("writing {}", args.out.join("summary.json").display()))?;
    fs::write(args.out.join("report.html"), render_html(&evidence.records))
        .with_context(|| format!("writing {}", args.out.join("report.html").display()))?;

    let stats = &analysis.stats;
    println!(
        "{} packets: {} tcp, {} udp, {} icmp, {} other",
        stats.packets, stats.tcp, stats.udp, stats.icmp, stats.other
    );
    if analysis.detections.is_empty() {
        println!("no detections");
    } else {
        let mut by_rule: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &analysis.detections {
            *by_rule.entry(d.rule.as_str()).or_default() += 1;
        }
        for (rule, count) in &by_rule {
            println!("{rule}: {count}");
        }
        println!(
            "{} detection(s) appended to {}",
            analysis.detections.len(),
            evidence_path.display()
        );
    }
    println!("wrote {}", args.out.join("summary.json").display());
    println!("wrote {}", args.out.join("report.html").display());

    Ok(if analysis.detections.is_empty() { 0 } else { 1 })
}

fn describe_packet(pkt: &DissectedPacket, record_len: usize) -> (String, &[u8]) {
    let ts = format!("t={}.{:06}", pkt.ts_sec, pkt.ts_usec);
    let Some(eth) = &pkt.ethernet else {
        return (format!("#{} {ts} RAW bytes={record_len}", pkt.index), &[]);
    };
    let Some(ip) = &pkt.ip else {
        return (
            format!(
                "#{} {ts} ETH {} -> {} type=0x{:04x} bytes={record_len}",
                pkt.index, eth.src_mac, eth.dst_mac, eth.ethertype
            ),
            &[],
        );
    };
    match &pkt.transport {
        Some(Transport::Tcp(seg)) => (
            format!(
                "#{} {ts} TCP {}:{} -> {}:{} flags={} seq={} ack={} win={} payload={}",
                pkt.index,
                ip.src_ip,
                seg.src_port,
                ip.dst_ip,
                seg.dst_port,
                seg.flags,
                seg.seq,
                seg.ack,
                seg.window,
                seg.payload.len()
            ),
            &seg.payload,
        ),
        Some(Transport::Udp(dgram)) => (
            format!(
                "#{} {ts} UDP {}:{} -> {}:{} payload={}",
                pkt.index,
                ip.src_ip,
                dgram.src_port,
                ip.dst_ip,
                dgram.dst_port,
                dgram.payload.len()
            ),
            &dgram.payload,
        ),
        Some(Transport::Icmp(msg)) => (
            format!(
                "#{} {ts} ICMP {} -> {} type={} code={} payload={}",
                pkt.index,
                ip.src_ip,
                ip.dst_ip,
                msg.icmp_type,
                msg.code,
                msg.rest.len()
            ),
            &msg.rest,
        ),
        Some(Transport::Opaque { protocol, data }) => (
            format!(
                "#{} {ts} IPv4 proto={} {} -> {} payload={}",
                pkt.index,
                protocol,
                ip.src_ip,
                ip.dst_ip,
                data.len()
            ),
            data,
        ),
        None => (
            format!(
                "#{} {ts} IPv4 {} -> {} (transport unparsed)",
                pkt.index, ip.src_ip, ip.dst_ip
            ),
            &[],
        ),
    }
}

fn cmd_dump(args: DumpArgs) -> Result<i32> {
    let source = load_source(&args.input, args.limit)?;
    if source.truncated {
        eprintln!(
            "warning: record limit {} reached, remainder of {} ignored",
            args.limit, args.input
        );
    }

    let indices: Vec<usize> = match args.packet {
        Some(n) => {
            if n >= source.records.len() {
                bail!(
                    "packet {n} out of range, capture holds {} record(s)",
                    source.records.len()
                );
            }
            vec![n]
        }
        None => (0..source.records.len()).collect(),
    };

    for (printed, &i) in indices.iter().enumerate() {
        let record = &source.records[i];
        let pkt = dissect(record, i);
        let (line, payload) = describe_packet(&pkt, record.data.len());
        if printed > 0 {
            println!();
        }
        println!("{line}");
        for note in &pkt.parse_notes {
            println!("  note: {note}");
        }
        let bytes = if pkt.ethernet.is_some() { payload } else { &record.data };
        if !bytes.is_empty() {
            print!("{}", hexdump(bytes, 0));
        }
    }
    Ok(0)
}

fn cmd_synth(args: SynthArgs) -> Result<i32> {
    let kind: ScenarioKind = args.scenario.parse()?;
    let scenario = Scenario::new(kind, args.seed);
    let (bytes, manifest) = synth(&scenario)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let stem = format!("{}-{}", kind, args.seed);
    let pcap_path = args.out.join(format!("{stem}.pcap"));
    let manifest_path = args.out.join(format!("{stem}.manifest.json"));
    fs::write(&pcap_path, &bytes)
        .with_context(|| format!("writing {}", pcap_path.display()))?;
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    fs::write(&manifest_path, manifest_json)
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    println!(
        "wrote {} ({} packets, {} expected detection(s))",
        pcap_path.display(),
        manifest.packet_count,
        manifest.expected.len()
    );
    println!("wrote {}", manifest_path.display());
    Ok(0)
}

fn cmd_report(args: ReportArgs) -> Result<i32> {
    let evidence = read_evidence(&args.evidence)?;
    warn_malformed(&args.evidence, &evidence);

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let report_path = args.out.join("report.html");
    fs::write(&report_path, render_html(&evidence.records))
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!(
        "wrote {} ({} evidence record(s))",
        report_path.display(),
        evidence.records.len()
    );
    Ok(0)
}
