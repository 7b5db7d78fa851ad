//! Append-mode evidence log: one JSON object per line.
//!
//! Every detection becomes one self-contained line with a fixed key set,
//! so the log can be tailed, grepped, and safely appended to across runs.
//! Reading is resilient: damaged lines are reported with their line
//! numbers and the surrounding records still load.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Detection;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

/// One logged finding. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    /// ISO-8601 UTC capture time with microseconds.
    pub ts: String,
    pub proto: String,
    pub src_mac: String,
    pub dst_mac: String,
    pub src_ip: String,
    pub dst_ip: String,
    pub rule: String,
    pub severity: String,
    /// Packet index within the analyzed trace.
    pub pkt: usize,
    pub detail: String,
}

/// Render a capture timestamp as ISO-8601 UTC with microseconds, e.g.
/// `1970-01-01T00:00:10.712000Z`. An out-of-range microsecond field
/// (possible in a damaged capture) carries into the seconds.
pub fn format_timestamp(ts_sec: u32, ts_usec: u32) -> String {
    let sec = i64::from(ts_sec) + i64::from(ts_usec / 1_000_000);
    let nanos = (ts_usec % 1_000_000) * 1_000;
    let dt: DateTime<Utc> =
        DateTime::from_timestamp(sec, nanos).expect("normalized timestamp is in range");
    dt.to_rfc3339_opts(SecondsFormat::Micros, true)
}

impl EvidenceRecord {
    pub fn from_detection(d: &Detection) -> Self {
        EvidenceRecord {
            ts: format_timestamp(d.ts_sec, d.ts_usec),
            proto: d.flow.protocol_label(),
            src_mac: d.src_mac.to_string(),
            dst_mac: d.dst_mac.to_string(),
            src_ip: d.src_ip.to_string(),
            dst_ip: d.dst_ip.to_string(),
            rule: d.rule.as_str().to_string(),
            severity: d.severity.as_str().to_string(),
            pkt: d.packet_index,
            detail: d.detail.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("record serializes");
        line.push('\n');
        line
    }
}

/// Append detections to the log at `path`, creating it if absent. Each
/// record is written as one complete line and the file is flushed, so an
/// interrupted run leaves a valid prefix. Called with no detections it
/// still creates the file.
pub fn append_detections(path: &Path, detections: &[Detection]) -> Result<(), EvidenceError> {
    let wrap = |source: io::Error| EvidenceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(wrap)?;
    for d in detections {
        file.write_all(EvidenceRecord::from_detection(d).to_json_line().as_bytes())
            .map_err(wrap)?;
    }
    file.flush().map_err(wrap)?;
    Ok(())
}

/// A line that failed to parse, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct EvidenceFile {
    pub records: Vec<EvidenceRecord>,
    pub malformed: Vec<MalformedLine>,
}

/// Parse log text. Damaged lines land in `malformed`; blank lines are
/// ignored.
pub fn parse_evidence(text: &str) -> EvidenceFile {
    let mut out = EvidenceFile::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EvidenceRecord>(line) {
            Ok(record) => out.records.push(record),
            Err(e) => out.malformed.push(MalformedLine {
                line: i + 1,
                reason: e.to_string(),
            }),
        }
    }
    out
}

/// Read and parse a log file.
pub fn read_evidence(path: &Path) -> Result<EvidenceFile, EvidenceError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvidenceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_evidence(&text))
}
