//! Static HTML and JSON reports over an evidence log.
//!
//! The HTML document is a pure function of the evidence records: rule and
//! flow rollups, then one table row per record, everything escaped, no
//! scripts and no external assets. Because nothing else feeds the HTML,
//! rebuilding it later from the log alone reproduces the byte-identical
//! document. Trace-level context that is not in the log (packet and
//! protocol counts, the trace name) lives in the JSON summary instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::engine::TraceStats;
use crate::evidence::EvidenceRecord;

/// Machine-readable run summary, written alongside the HTML report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    /// Name of the analyzed trace (a path, or `-` for a stream).
    pub trace: String,
    pub stats: TraceStats,
    /// Detection count per rule id, rules with hits only.
    pub rules: BTreeMap<String, usize>,
    /// Detection count per conversation.
    pub flows: BTreeMap<String, usize>,
    pub detections: usize,
    pub clean: bool,
}

/// Conversation label for one record: protocol plus the address pair in
/// canonical order, so both directions group together.
fn flow_label(record: &EvidenceRecord) -> String {
    let a = &record.src_ip;
    let b = &record.dst_ip;
    let ordered = match (a.parse::<Ipv4Addr>(), b.parse::<Ipv4Addr>()) {
        (Ok(ip_a), Ok(ip_b)) => ip_a <= ip_b,
        _ => a <= b,
    };
    let (lo, hi) = if ordered { (a, b) } else { (b, a) };
    format!("{} {} <-> {}", record.proto, lo, hi)
}

pub fn summarize(trace: &str, stats: &TraceStats, records: &[EvidenceRecord]) -> Summary {
    let mut rules: BTreeMap<String, usize> = BTreeMap::new();
    let mut flows: BTreeMap<String, usize> = BTreeMap::new();
    for record in records {
        *rules.entry(record.rule.clone()).or_insert(0) += 1;
        *flows.entry(flow_label(record)).or_insert(0) += 1;
    }
    Summary {
        trace: trace.to_string(),
        stats: *stats,
        rules,
        flows,
        detections: records.len(),
        clean: records.is_empty(),
    }
}

/// Pretty JSON with a trailing newline.
pub fn render_summary_json(summary: &Summary) -> String {
    let mut out = serde_json::to_string_pretty(summary).expect("summary serializes");
    out.push('\n');
    out
}

/// Escape text for an HTML text node or attribute value.
pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            other => out.push(other),
        }
    }
    out
}

const STYLE: &str = "\
body{font-family:monospace;margin:2em;background:#fafafa;color:#222}\
h1{font-size:1.4em}h2{font-size:1.1em;margin-top:2em}\
table{border-collapse:collapse;margin-top:0.5em}\
th,td{border:1px solid #bbb;padding:0.3em 0.6em;text-align:left}\
th{background:#eee}\
.clean{color:#166516;font-weight:bold}\
.alert{color:#8b1a1a;font-weight:bold}\
.warn{color:#8a6d1a;font-weight:bold}";

/// Render the report document from evidence records alone. The records'
/// order becomes the table order.
pub fn render_html(records: &[EvidenceRecord]) -> String {
    let mut html = String::new();
    let w = &mut html;
    let _ = write!(
        w,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n\
         <title>Trace analysis report</title>\n<style>{STYLE}</style>\n</head>\n<body>\n\
         <h1>Trace analysis report</h1>\n"
    );

    if records.is_empty() {
        let _ = writeln!(w, "<p class=\"clean\">NO DETECTIONS</p>");
    } else {
        let _ = writeln!(
            w,
            "<p class=\"alert\">{} detection{}</p>",
            records.len(),
            if records.len() == 1 { "" } else { "s" }
        );
    }

    let mut rules: BTreeMap<&str, usize> = BTreeMap::new();
    let mut flows: BTreeMap<String, usize> = BTreeMap::new();
    for record in records {
        *rules.entry(&record.rule).or_insert(0) += 1;
        *flows.entry(flow_label(record)).or_insert(0) += 1;
    }

    let _ = writeln!(w, "<h2>Detections by rule</h2>");
    let _ = writeln!(w, "<table>\n<tr><th>rule</th><th>count</th></tr>");
    for (rule, count) in &rules {
        let _ = writeln!(
            w,
            "<tr><td>{}</td><td>{count}</td></tr>",
            escape_html(rule)
        );
    }
    let _ = writeln!(w, "</table>");

    let _ = writeln!(w, "<h2>Detections by conversation</h2>");
    let _ = writeln!(w, "<table>\n<tr><th>conversation</th><th>count</th></tr>");
    for (flow, count) in &flows {
        let _ = writeln!(
            w,
            "<tr><td>{}</td><td>{count}</td></tr>",
            escape_html(flow)
        );
    }
    let _ = writeln!(w, "</table>");

    let _ = writeln!(w, "<h2>Evidence</h2>");
    let _ = writeln!(
        w,
        "<table>\n<tr><th>time</th><th>rule</th><th>severity</th><th>proto</th>\
         <th>src mac</th><th>dst mac</th><th>src ip</th><th>dst ip</th>\
         <th>pkt</th><th>detail</th></tr>"
    );
    for record in records {
        let _ = writeln!(
            w,
            "<tr><td>{}</td><td>{}</td><td class=\"{}\">{}</td><td>{}</td>\
             <td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            escape_html(&record.ts),
            escape_html(&record.rule),
            escape_html(&record.severity),
            escape_html(&record.severity),
            escape_html(&record.proto),
            escape_html(&record.src_mac),
            escape_html(&record.dst_mac),
            escape_html(&record.src_ip),
            escape_html(&record.dst_ip),
            record.pkt,
            escape_html(&record.detail),
        );
    }
    let _ = writeln!(w, "</table>\n</body>\n</html>");
    html
}
