//! Payload signatures and cross-segment stream matching.
//!
//! A signature is a fixed byte pattern searched for in each direction of
//! a TCP conversation. Matching is streaming: per flow direction a
//! [`CarryBuffer`] keeps the last `max_pattern_len - 1` bytes, so a
//! pattern split across in-order segments still matches exactly once at
//! the stream offset the concatenated payloads would give. A match is
//! reported only when its final byte lands in the newly arrived segment,
//! which is what prevents re-reporting matches that ended inside the
//! carried tail.
//!
//! Out-of-order or retransmitted segments (sequence number other than the
//! expected next) drop the carried tail and match within the new segment
//! alone, then resynchronize on its sequence numbers.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate signature id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: signature {id} has an empty pattern")]
    EmptyPattern { line: usize, id: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub id: String,
    pub name: String,
    pub pattern: Vec<u8>,
}

/// A validated collection of signatures: unique ids, no empty patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureSet {
    signatures: Vec<Signature>,
    max_pattern_len: usize,
}

/// Builtin indicators: two contact mailboxes dropped by known trojaned
/// daemons and the file-size banner of a backdoored ftp server build.
pub fn default_signatures() -> Vec<Signature> {
    let make = |id: &str, name: &str, pattern: &[u8]| Signature {
        id: id.to_string(),
        name: name.to_string(),
        pattern: pattern.to_vec(),
    };
    vec![
        make("SIG-001", "linuxpir8-mail", b"LinuxPir8 [at] yahoo.com"),
        make("SIG-002", "abort-mail", b"abort [at] yahoo.com"),
        make("SIG-003", "hpftp-size", b"File size:14140"),
    ]
}

impl SignatureSet {
    pub fn default_set() -> Self {
        Self::from_signatures(default_signatures()).expect("builtin signatures are valid")
    }

    pub fn from_signatures(signatures: Vec<Signature>) -> Result<Self, SignatureError> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, sig) in signatures.iter().enumerate() {
            let line = i + 1;
            if sig.id.is_empty() {
                return Err(SignatureError::Malformed {
                    line,
                    reason: "empty signature id".to_string(),
                });
            }
            if sig.pattern.is_empty() {
                return Err(SignatureError::EmptyPattern {
                    line,
                    id: sig.id.clone(),
                });
            }
            if !seen.insert(sig.id.clone()) {
                return Err(SignatureError::DuplicateId {
                    line,
                    id: sig.id.clone(),
                });
            }
        }
        let max_pattern_len = signatures.iter().map(|s| s.pattern.len()).max().unwrap_or(0);
        Ok(SignatureSet {
            signatures,
            max_pattern_len,
        })
    }

    /// Parse the tab-separated format: `id<TAB>name<TAB>kind<TAB>value`,
    /// one per line. `kind` is `ascii` (value taken verbatim to end of
    /// line, spaces included) or `hex` (even-length hex digits). Blank
    /// lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, SignatureError> {
        let mut signatures = Vec::new();
        let mut ids = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let row = raw.strip_suffix('\r').unwrap_or(raw);
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            let mut fields = row.splitn(4, '\t');
            let (Some(id), Some(name), Some(kind), Some(value)) = (
                fields.next(),
                fields.next(),
                fields.next(),
                fields.next(),
            ) else {
                return Err(SignatureError::Malformed {
                    line,
                    reason: "expected id<TAB>name<TAB>kind<TAB>value".to_string(),
                });
            };
            if id.is_empty() {
                return Err(SignatureError::Malformed {
                    line,
                    reason: "empty signature id".to_string(),
                });
            }
            let pattern = match kind {
                "ascii" => value.as_bytes().to_vec(),
                "hex" => decode_hex(value).map_err(|reason| SignatureError::Malformed {
                    line,
                    reason,
                })?,
                other => {
                    return Err(SignatureError::Malformed {
                        line,
                        reason: format!("unknown pattern kind {other:?}"),
                    })
                }
            };
            if pattern.is_empty() {
                return Err(SignatureError::EmptyPattern {
                    line,
                    id: id.to_string(),
                });
            }
            if !ids.insert(id.to_string()) {
                return Err(SignatureError::DuplicateId {
                    line,
                    id: id.to_string(),
                });
            }
            signatures.push(Signature {
                id: id.to_string(),
                name: name.to_string(),
                pattern,
            });
        }
        let max_pattern_len = signatures.iter().map(|s| s.pattern.len()).max().unwrap_or(0);
        Ok(SignatureSet {
            signatures,
            max_pattern_len,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, SignatureError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    pub fn get(&self, index: usize) -> &Signature {
        &self.signatures[index]
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn max_pattern_len(&self) -> usize {
        self.max_pattern_len
    }

    /// Run all patterns over one in-order payload segment, carrying
    /// stream context in `buf`. Offsets in the returned hits are absolute
    /// positions in the reassembled direction stream. Empty payloads
    /// leave the buffer untouched.
    pub fn match_segment(&self, buf: &mut CarryBuffer, seq: u32, payload: &[u8]) -> Vec<SigHit> {
        if payload.is_empty() {
            return Vec::new();
        }
        let in_order = match buf.next_seq {
            Some(expected) => expected == seq,
            None => true,
        };
        if !in_order {
            buf.carry.clear();
        }
        let carry_len = buf.carry.len();
        let mut haystack = std::mem::take(&mut buf.carry);
        haystack.extend_from_slice(payload);
        let base = buf.stream_len - carry_len as u64;

        let mut hits = Vec::new();
        for (sig_index, sig) in self.signatures.iter().enumerate() {
            for start in find_all(&haystack, &sig.pattern) {
                if start + sig.pattern.len() > carry_len {
                    hits.push(SigHit {
                        sig_index,
                        stream_offset: base + start as u64,
                    });
                }
            }
        }
        hits.sort_by_key(|h| (h.stream_offset, h.sig_index));

        buf.stream_len += payload.len() as u64;
        buf.next_seq = Some(seq.wrapping_add(payload.len() as u32));
        let keep = self.max_pattern_len.saturating_sub(1).min(haystack.len());
        haystack.drain(..haystack.len() - keep);
        buf.carry = haystack;
        hits
    }
}

/// One signature occurrence in a direction stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigHit {
    /// Index into [`SignatureSet::signatures`].
    pub sig_index: usize,
    /// Offset of the first pattern byte in the reassembled stream.
    pub stream_offset: u64,
}

/// Matcher state for one flow direction.
#[derive(Debug, Clone, Default)]
pub struct CarryBuffer {
    carry: Vec<u8>,
    stream_len: u64,
    next_seq: Option<u32>,
}

impl CarryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total payload bytes consumed in order.
    pub fn stream_len(&self) -> u64 {
        self.stream_len
    }

    pub fn carry_len(&self) -> usize {
        self.carry.len()
    }
}

fn decode_hex(value: &str) -> Result<Vec<u8>, String> {
    if !value.len().is_multiple_of(2) {
        return Err(format!("hex value has odd length {}", value.len()));
    }
    (0..value.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&value[i..i + 2], 16)
                .map_err(|_| format!("invalid hex pair {:?}", &value[i..i + 2]))
        })
        .collect()
}

/// Every occurrence of `needle` in `haystack`, overlaps included.
fn find_all(haystack: &[u8], needle: &[u8]) -> Vec<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return Vec::new();
    }
    haystack
        .windows(needle.len())
        .enumerate()
        .filter_map(|(i, w)| (w == needle).then_some(i))
        .collect()
}
