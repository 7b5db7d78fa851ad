//! Classic pcap trace files.
//!
//! Reads and writes the traditional libpcap container only: a 24-byte
//! global header followed by 16-byte per-record headers, microsecond
//! timestamps. Files written by the opposite byte order are decoded
//! transparently; output is always little-endian with magic `0xa1b2c3d4`,
//! version 2.4. The pcapng container and the nanosecond-timestamp magic
//! variants are rejected as [`PcapError::UnknownMagic`].

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC_NATIVE: u32 = 0xa1b2_c3d4;
pub const MAGIC_SWAPPED: u32 = 0xd4c3_b2a1;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const DEFAULT_SNAPLEN: u32 = 65_535;
/// Records read from one source are capped at this count unless the
/// caller raises the limit explicitly.
pub const DEFAULT_PACKET_LIMIT: usize = 1_000;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("offset {offset}: magic {magic:#010x} is not a classic pcap file")]
    UnknownMagic { magic: u32, offset: u64 },
    #[error("offset {offset}: truncated global header, got {got} of {GLOBAL_HEADER_LEN} bytes")]
    TruncatedHeader { offset: u64, got: usize },
    #[error("offset {offset}: truncated record, {promised} bytes promised but only {available} present")]
    TruncatedRecord {
        offset: u64,
        promised: usize,
        available: usize,
    },
    #[error("record {index}: {len} data bytes exceed snaplen {snaplen}")]
    RecordTooLong { index: usize, len: usize, snaplen: u32 },
    #[error("linktype {linktype} is not Ethernet")]
    UnsupportedLinktype { linktype: u32 },
    #[error("record limit must be at least 1")]
    ZeroLimit,
    #[error("{}: {source}", path.display())]
    FileNotFound { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Decoded global header. Numeric fields are stored in host order
/// regardless of the file's byte order; `magic` keeps the value found on
/// disk so the source order remains visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapHeader {
    pub magic: u32,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub linktype: u32,
}

impl PcapHeader {
    /// Header for newly written traces: microsecond magic, version 2.4,
    /// snaplen 65535, Ethernet link layer.
    pub fn canonical() -> Self {
        PcapHeader {
            magic: MAGIC_NATIVE,
            version_major: 2,
            version_minor: 4,
            thiszone: 0,
            sigfigs: 0,
            snaplen: DEFAULT_SNAPLEN,
            linktype: LINKTYPE_ETHERNET,
        }
    }
}

impl Default for PcapHeader {
    fn default() -> Self {
        Self::canonical()
    }
}

/// One captured record: header fields plus the captured bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub ts_sec: u32,
    pub ts_usec: u32,
    /// Original on-the-wire length; equals `data.len()` unless the
    /// capture clipped the packet.
    pub orig_len: u32,
    pub data: Vec<u8>,
}

impl CaptureRecord {
    pub fn new(ts_sec: u32, ts_usec: u32, data: Vec<u8>) -> Self {
        let orig_len = data.len() as u32;
        CaptureRecord {
            ts_sec,
            ts_usec,
            orig_len,
            data,
        }
    }

    pub fn timestamp_micros(&self) -> u64 {
        u64::from(self.ts_sec) * 1_000_000 + u64::from(self.ts_usec)
    }
}

/// Streaming reader over one classic pcap source.
pub struct PcapReader<R: Read> {
    inner: R,
    header: PcapHeader,
    swapped: bool,
    offset: u64,
    index: usize,
    done: bool,
}

/// Read into `buf` until it is full or the source is exhausted, returning
/// the byte count. Unlike `read_exact`, a short read is reported, not
/// erased.
fn read_up_to<R: Read>(source: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut raw = [0u8; GLOBAL_HEADER_LEN];
        let got = read_up_to(&mut inner, &mut raw)?;
        if got < GLOBAL_HEADER_LEN {
            return Err(PcapError::TruncatedHeader { offset: 0, got });
        }
        let magic = u32::from_le_bytes(raw[0..4].try_into().unwrap());
        let swapped = match magic {
            MAGIC_NATIVE => false,
            MAGIC_SWAPPED => true,
            other => return Err(PcapError::UnknownMagic { magic: other, offset: 0 }),
        };
        let u16_at = |i: usize| {
            let b: [u8; 2] = raw[i..i + 2].try_into().unwrap();
            if swapped {
                u16::from_be_bytes(b)
            } else {
                u16::from_le_bytes(b)
            }
        };
        let u32_at = |i: usize| {
            let b: [u8; 4] = raw[i..i + 4].try_into().unwrap();
            if swapped {
                u32::from_be_bytes(b)
            } else {
                u32::from_le_bytes(b)
            }
        };
        let header = PcapHeader {
            magic,
            version_major: u16_at(4),
            version_minor: u16_at(6),
            thiszone: u32_at(8) as i32,
            sigfigs: u32_at(12),
            snaplen: u32_at(16),
            linktype: u32_at(20),
        };
        Ok(PcapReader {
            inner,
            header,
            swapped,
            offset: GLOBAL_HEADER_LEN as u64,
            index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> &PcapHeader {
        &self.header
    }

    /// Next record, `None` at a clean end of stream.
    pub fn next_record(&mut self) -> Result<Option<CaptureRecord>, PcapError> {
        if self.done {
            return Ok(None);
        }
        let record_start = self.offset;
        let mut raw = [0u8; RECORD_HEADER_LEN];
        let got = read_up_to(&mut self.inner, &mut raw)?;
        if got == 0 {
            self.done = true;
            return Ok(None);
        }
        if got < RECORD_HEADER_LEN {
            self.done = true;
            return Err(PcapError::TruncatedRecord {
                offset: record_start,
                promised: RECORD_HEADER_LEN,
                available: got,
            });
        }
        let u32_at = |i: usize| {
            let b: [u8; 4] = raw[i..i + 4].try_into().unwrap();
            if self.swapped {
                u32::from_be_bytes(b)
            } else {
                u32::from_le_bytes(b)
            }
        };
        let ts_sec = u32_at(0);
        let ts_usec = u32_at(4);
        let incl_len = u32_at(8) as usize;
        let orig_len = u32_at(12);
        if incl_len > self.header.snaplen as usize {
            self.done = true;
            return Err(PcapError::RecordTooLong {
                index: self.index,
                len: incl_len,
                snaplen: self.header.snaplen,
            });
        }
        let mut data = Vec::new();
        let read = (&mut self.inner)
            .take(incl_len as u64)
            .read_to_end(&mut data)?;
        if read < incl_len {
            self.done = true;
            return Err(PcapError::TruncatedRecord {
                offset: record_start,
                promised: incl_len,
                available: read,
            });
        }
        self.offset += (RECORD_HEADER_LEN + read) as u64;
        self.index += 1;
        Ok(Some(CaptureRecord {
            ts_sec,
            ts_usec,
            orig_len,
            data,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<CaptureRecord, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_record() {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => None,
            Err(e) => Some(Err(e)),
        }
    }
}

/// Decode an entire trace.
pub fn read_pcap<R: Read>(source: R) -> Result<(PcapHeader, Vec<CaptureRecord>), PcapError> {
    let mut reader = PcapReader::new(source)?;
    let mut records = Vec::new();
    while let Some(rec) = reader.next_record()? {
        records.push(rec);
    }
    Ok((reader.header, records))
}

/// Encode a trace. Every field is written little-endian with the native
/// microsecond magic; `header.snaplen` and `header.linktype` are honored,
/// byte order is not a caller choice. Returns the byte count written.
pub fn write_pcap<W: Write>(
    header: &PcapHeader,
    records: &[CaptureRecord],
    mut sink: W,
) -> Result<u64, PcapError> {
    for (index, rec) in records.iter().enumerate() {
        if rec.data.len() > header.snaplen as usize {
            return Err(PcapError::RecordTooLong {
                index,
                len: rec.data.len(),
                snaplen: header.snaplen,
            });
        }
    }
    let mut written = 0u64;
    let mut put = |sink: &mut W, bytes: &[u8]| -> io::Result<()> {
        sink.write_all(bytes)?;
        written += bytes.len() as u64;
        Ok(())
    };
    put(&mut sink, &MAGIC_NATIVE.to_le_bytes())?;
    put(&mut sink, &header.version_major.to_le_bytes())?;
    put(&mut sink, &header.version_minor.to_le_bytes())?;
    put(&mut sink, &header.thiszone.to_le_bytes())?;
    put(&mut sink, &header.sigfigs.to_le_bytes())?;
    put(&mut sink, &header.snaplen.to_le_bytes())?;
    put(&mut sink, &header.linktype.to_le_bytes())?;
    for rec in records {
        put(&mut sink, &rec.ts_sec.to_le_bytes())?;
        put(&mut sink, &rec.ts_usec.to_le_bytes())?;
        put(&mut sink, &(rec.data.len() as u32).to_le_bytes())?;
        put(&mut sink, &rec.orig_len.to_le_bytes())?;
        put(&mut sink, &rec.data)?;
    }
    sink.flush()?;
    Ok(written)
}

/// A trace loaded under a record-count cap.
#[derive(Debug)]
pub struct BoundedSource {
    pub header: PcapHeader,
    pub records: Vec<CaptureRecord>,
    /// True when the source held more data beyond the cap.
    pub truncated: bool,
}

/// Load at most `limit` records from a reader.
pub fn open_source_reader<R: Read>(source: R, limit: usize) -> Result<BoundedSource, PcapError> {
    if limit == 0 {
        return Err(PcapError::ZeroLimit);
    }
    let mut reader = PcapReader::new(source)?;
    let mut records = Vec::new();
    let mut truncated = false;
    loop {
        if records.len() == limit {
            // Probe for one more record: anything past the cap, even a
            // corrupt tail, counts as truncation rather than an error.
            truncated = !matches!(reader.next_record(), Ok(None));
            break;
        }
        match reader.next_record()? {
            Some(rec) => records.push(rec),
            None => break,
        }
    }
    Ok(BoundedSource {
        header: reader.header,
        records,
        truncated,
    })
}

/// Load at most `limit` records from a file on disk.
pub fn open_source(path: &Path, limit: usize) -> Result<BoundedSource, PcapError> {
    let file = File::open(path).map_err(|source| PcapError::FileNotFound {
        path: path.to_path_buf(),
        source,
    })?;
    open_source_reader(BufReader::new(file), limit)
}
