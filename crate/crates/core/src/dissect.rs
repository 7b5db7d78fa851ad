//! Layered packet dissection: Ethernet, IPv4, and the TCP/UDP/ICMP
//! transports.
//!
//! Individual layer parsers are pure functions over byte slices and fail
//! with [`DissectError`]. [`dissect`] composes them over a capture record
//! and never fails: a malformed layer becomes a parse note and the packet
//! keeps whatever layers did decode, so one damaged packet cannot abort an
//! analysis pass.

use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::checksum::{fold, sum_words, verifies};
use crate::pcap::CaptureRecord;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_VLAN: u16 = 0x8100;

pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

const ETHERNET_HEADER_LEN: usize = 14;
const IPV4_MIN_HEADER_LEN: usize = 20;
const TCP_MIN_HEADER_LEN: usize = 20;
const UDP_HEADER_LEN: usize = 8;
const ICMP_MIN_LEN: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DissectError {
    #[error("{layer}: need {needed} bytes, got {got}")]
    TooShort {
        layer: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("ip version {0} is not IPv4")]
    BadVersion(u8),
    #[error("ihl {0} below the minimum of 5")]
    BadIhl(u8),
    #[error("total length {total_length} smaller than the {header_len}-byte header")]
    BadTotalLength { total_length: u16, header_len: usize },
    #[error("tcp data offset {0} below the minimum of 5")]
    BadDataOffset(u8),
    #[error("udp length field {0} below the minimum of 8")]
    BadUdpLength(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl From<[u8; 6]> for MacAddress {
    fn from(octets: [u8; 6]) -> Self {
        MacAddress(octets)
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EthernetFrame {
    pub dst_mac: MacAddress,
    pub src_mac: MacAddress,
    pub ethertype: u16,
    pub payload: Vec<u8>,
}

pub fn parse_ethernet(bytes: &[u8]) -> Result<EthernetFrame, DissectError> {
    if bytes.len() < ETHERNET_HEADER_LEN {
        return Err(DissectError::TooShort {
            layer: "ethernet",
            needed: ETHERNET_HEADER_LEN,
            got: bytes.len(),
        });
    }
    Ok(EthernetFrame {
        dst_mac: MacAddress(bytes[0..6].try_into().unwrap()),
        src_mac: MacAddress(bytes[6..12].try_into().unwrap()),
        ethertype: u16::from_be_bytes([bytes[12], bytes[13]]),
        payload: bytes[ETHERNET_HEADER_LEN..].to_vec(),
    })
}

/// Decoded IPv4 packet. `payload` is bounded by the total-length field,
/// never by trailing link-layer padding; a capture shorter than the total
/// length sets `truncated` and yields the bytes that are present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Packet {
    pub version: u8,
    pub ihl: u8,
    pub dscp_ecn: u8,
    pub total_length: u16,
    pub identification: u16,
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub header_checksum: u16,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    /// Header bytes exactly as captured, options included.
    pub raw_header: Vec<u8>,
    pub payload: Vec<u8>,
    pub truncated: bool,
}

impl Ipv4Packet {
    pub fn header_len(&self) -> usize {
        usize::from(self.ihl) * 4
    }
}

pub fn parse_ipv4(bytes: &[u8]) -> Result<Ipv4Packet, DissectError> {
    if bytes.len() < IPV4_MIN_HEADER_LEN {
        return Err(DissectError::TooShort {
            layer: "ipv4",
            needed: IPV4_MIN_HEADER_LEN,
            got: bytes.len(),
        });
    }
    let version = bytes[0] >> 4;
    if version != 4 {
        return Err(DissectError::BadVersion(version));
    }
    let ihl = bytes[0] & 0x0f;
    if ihl < 5 {
        return Err(DissectError::BadIhl(ihl));
    }
    let header_len = usize::from(ihl) * 4;
    if bytes.len() < header_len {
        return Err(DissectError::TooShort {
            layer: "ipv4 options",
            needed: header_len,
            got: bytes.len(),
        });
    }
    let total_length = u16::from_be_bytes([bytes[2], bytes[3]]);
    if usize::from(total_length) < header_len {
        return Err(DissectError::BadTotalLength {
            total_length,
            header_len,
        });
    }
    let payload_end = usize::from(total_length).min(bytes.len());
    Ok(Ipv4Packet {
        version,
        ihl,
        dscp_ecn: bytes[1],
        total_length,
        identification: u16::from_be_bytes([bytes[4], bytes[5]]),
        flags_fragment: u16::from_be_bytes([bytes[6], bytes[7]]),
        ttl: bytes[8],
        protocol: bytes[9],
        header_checksum: u16::from_be_bytes([bytes[10], bytes[11]]),
        src_ip: Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]),
        dst_ip: Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]),
        raw_header: bytes[..header_len].to_vec(),
        payload: bytes[header_len..payload_end].to_vec(),
        truncated: usize::from(total_length) > bytes.len(),
    })
}

/// The six classic TCP flags, the low six bits of header byte 13.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TcpFlags {
    pub fin: bool,
    pub syn: bool,
    pub rst: bool,
    pub psh: bool,
    pub ack: bool,
    pub urg: bool,
}

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;

    /// Decode the low six bits; reserved upper bits are ignored.
    pub fn from_byte(byte: u8) -> Self {
        TcpFlags {
            fin: byte & Self::FIN != 0,
            syn: byte & Self::SYN != 0,
            rst: byte & Self::RST != 0,
            psh: byte & Self::PSH != 0,
            ack: byte & Self::ACK != 0,
            urg: byte & Self::URG != 0,
        }
    }

    pub fn to_byte(self) -> u8 {
        let mut byte = 0;
        if self.fin {
            byte |= Self::FIN;
        }
        if self.syn {
            byte |= Self::SYN;
        }
        if self.rst {
            byte |= Self::RST;
        }
        if self.psh {
            byte |= Self::PSH;
        }
        if self.ack {
            byte |= Self::ACK;
        }
        if self.urg {
            byte |= Self::URG;
        }
        byte
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [
            (self.fin, "FIN"),
            (self.syn, "SYN"),
            (self.rst, "RST"),
            (self.psh, "PSH"),
            (self.ack, "ACK"),
            (self.urg, "URG"),
        ];
        let mut any = false;
        for (set, name) in names {
            if set {
                if any {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                any = true;
            }
        }
        if !any {
            f.write_str("none")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpSegment {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub data_offset: u8,
    pub flags: TcpFlags,
    pub window: u16,
    pub checksum: u16,
    pub urgent: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpDatagram {
    pub src_port: u16,
    pub dst_port: u16,
    /// Length field from the header; may promise more than was captured.
    pub length: u16,
    pub checksum: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcmpMessage {
    pub icmp_type: u8,
    pub code: u8,
    pub checksum: u16,
    pub rest: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Tcp(TcpSegment),
    Udp(UdpDatagram),
    Icmp(IcmpMessage),
    /// Any IP protocol this toolkit does not dissect.
    Opaque { protocol: u8, data: Vec<u8> },
}

pub fn parse_tcp(bytes: &[u8]) -> Result<TcpSegment, DissectError> {
    if bytes.len() < TCP_MIN_HEADER_LEN {
        return Err(DissectError::TooShort {
            layer: "tcp",
            needed: TCP_MIN_HEADER_LEN,
            got: bytes.len(),
        });
    }
    let data_offset = bytes[12] >> 4;
    if data_offset < 5 {
        return Err(DissectError::BadDataOffset(data_offset));
    }
    let header_len = usize::from(data_offset) * 4;
    if bytes.len() < header_len {
        return Err(DissectError::TooShort {
            layer: "tcp options",
            needed: header_len,
            got: bytes.len(),
        });
    }
    Ok(TcpSegment {
        src_port: u16::from_be_bytes([bytes[0], bytes[1]]),
        dst_port: u16::from_be_bytes([bytes[2], bytes[3]]),
        seq: u32::from_be_bytes(bytes[4..8].try_into().unwrap()),
        ack: u32::from_be_bytes(bytes[8..12].try_into().unwrap()),
        data_offset,
        flags: TcpFlags::from_byte(bytes[13]),
        window: u16::from_be_bytes([bytes[14], bytes[15]]),
        checksum: u16::from_be_bytes([bytes[16], bytes[17]]),
        urgent: u16::from_be_bytes([bytes[18], bytes[19]]),
        payload: bytes[header_len..].to_vec(),
    })
}

pub fn parse_udp(bytes: &[u8]) -> Result<UdpDatagram, DissectError> {
    if bytes.len() < UDP_HEADER_LEN {
        return Err(DissectError::TooShort {
            layer: "udp",
            needed: UDP_HEADER_LEN,
            got: bytes.len(),
        });
    }
    let length = u16::from_be_bytes([bytes[4], bytes[5]]);
    if length < UDP_HEADER_LEN as u16 {
        return Err(DissectError::BadUdpLength(length));
    }
    let payload_end = usize::from(length).min(bytes.len());
    Ok(UdpDatagram {
        src_port: u16::from_be_bytes([bytes[0], bytes[1]]),
        dst_port: u16::from_be_bytes([bytes[2], bytes[3]]),
        length,
        checksum: u16::from_be_bytes([bytes[6], bytes[7]]),
        payload: bytes[UDP_HEADER_LEN..payload_end].to_vec(),
    })
}

pub fn parse_icmp(bytes: &[u8]) -> Result<IcmpMessage, DissectError> {
    if bytes.len() < ICMP_MIN_LEN {
        return Err(DissectError::TooShort {
            layer: "icmp",
            needed: ICMP_MIN_LEN,
            got: bytes.len(),
        });
    }
    Ok(IcmpMessage {
        icmp_type: bytes[0],
        code: bytes[1],
        checksum: u16::from_be_bytes([bytes[2], bytes[3]]),
        rest: bytes[ICMP_MIN_LEN..].to_vec(),
    })
}

/// Dispatch on the IP protocol number. Unknown protocols decode as
/// [`Transport::Opaque`]; known protocols that are too short fail.
pub fn parse_transport(protocol: u8, bytes: &[u8]) -> Result<Transport, DissectError> {
    match protocol {
        IPPROTO_TCP => parse_tcp(bytes).map(Transport::Tcp),
        IPPROTO_UDP => parse_udp(bytes).map(Transport::Udp),
        IPPROTO_ICMP => parse_icmp(bytes).map(Transport::Icmp),
        other => Ok(Transport::Opaque {
            protocol: other,
            data: bytes.to_vec(),
        }),
    }
}

/// The IPv4 header checksum covers the header alone and verifies to zero.
pub fn verify_ipv4_checksum(packet: &Ipv4Packet) -> bool {
    verifies(&packet.raw_header)
}

fn pseudo_header_sum(packet: &Ipv4Packet) -> u32 {
    let mut sum = sum_words(&packet.src_ip.octets(), 0);
    sum = sum_words(&packet.dst_ip.octets(), sum);
    sum += u32::from(packet.protocol);
    sum += packet.payload.len() as u32;
    sum
}

/// TCP checksum over the pseudo-header and the entire segment.
pub fn verify_tcp_checksum(packet: &Ipv4Packet) -> bool {
    fold(sum_words(&packet.payload, pseudo_header_sum(packet))) == 0
}

/// UDP checksum over the pseudo-header and the datagram. A zero checksum
/// field means the sender disabled checksumming, which verifies as true.
pub fn verify_udp_checksum(packet: &Ipv4Packet) -> bool {
    if packet.payload.len() >= UDP_HEADER_LEN {
        let stored = u16::from_be_bytes([packet.payload[6], packet.payload[7]]);
        if stored == 0 {
            return true;
        }
    }
    fold(sum_words(&packet.payload, pseudo_header_sum(packet))) == 0
}

/// One capture record with every layer that could be decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DissectedPacket {
    pub index: usize,
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub ethernet: Option<EthernetFrame>,
    pub ip: Option<Ipv4Packet>,
    pub transport: Option<Transport>,
    /// Human-readable anomalies: undecodable layers, non-IPv4 traffic,
    /// truncation, checksum failures.
    pub parse_notes: Vec<String>,
}

impl DissectedPacket {
    pub fn timestamp_micros(&self) -> u64 {
        u64::from(self.ts_sec) * 1_000_000 + u64::from(self.ts_usec)
    }

    pub fn tcp(&self) -> Option<&TcpSegment> {
        match &self.transport {
            Some(Transport::Tcp(seg)) => Some(seg),
            _ => None,
        }
    }
}

/// Dissect one record. Never fails; see [`DissectedPacket::parse_notes`].
pub fn dissect(record: &CaptureRecord, index: usize) -> DissectedPacket {
    let mut notes = Vec::new();
    let mut ip = None;

    let ethernet = match parse_ethernet(&record.data) {
        Ok(frame) => Some(frame),
        Err(e) => {
            notes.push(format!("ethernet: {e}"));
            None
        }
    };

    if let Some(frame) = &ethernet {
        match frame.ethertype {
            ETHERTYPE_IPV4 => match parse_ipv4(&frame.payload) {
                Ok(packet) => {
                    if packet.truncated {
                        notes.push(format!(
                            "ipv4: capture holds {} of {} payload bytes",
                            packet.payload.len(),
                            usize::from(packet.total_length) - packet.header_len(),
                        ));
                    }
                    ip = Some(packet);
                }
                Err(e) => notes.push(format!("ipv4: {e}")),
            },
            ETHERTYPE_ARP => notes.push("non-IPv4: arp frame".to_string()),
            ETHERTYPE_VLAN => notes.push("non-IPv4: vlan-tagged frame".to_string()),
            other => notes.push(format!("non-IPv4: ethertype {other:#06x}")),
        }
    }

    let mut transport = None;
    if let Some(packet) = &ip {
        if !verify_ipv4_checksum(packet) {
            notes.push("ipv4: header checksum invalid".to_string());
        }
        match parse_transport(packet.protocol, &packet.payload) {
            Ok(t) => {
                match &t {
                    Transport::Tcp(_) => {
                        // A clipped segment cannot checksum; the
                        // truncation note already covers it.
                        if !packet.truncated && !verify_tcp_checksum(packet) {
                            notes.push("tcp: checksum invalid".to_string());
                        }
                    }
                    Transport::Udp(datagram) => {
                        if datagram.checksum == 0 {
                            notes.push("udp: checksum disabled".to_string());
                        } else if !packet.truncated && !verify_udp_checksum(packet) {
                            notes.push("udp: checksum invalid".to_string());
                        }
                        if usize::from(datagram.length) > packet.payload.len() {
                            notes.push(format!(
                                "udp: length field {} exceeds captured {} bytes",
                                datagram.length,
                                packet.payload.len(),
                            ));
                        }
                    }
                    _ => {}
                }
                transport = Some(t);
            }
            Err(e) => {
                notes.push(format!("transport: {e}"));
                transport = Some(Transport::Opaque {
                    protocol: packet.protocol,
                    data: packet.payload.clone(),
                });
            }
        }
    }

    DissectedPacket {
        index,
        ts_sec: record.ts_sec,
        ts_usec: record.ts_usec,
        ethernet,
        ip,
        transport,
        parse_notes: notes,
    }
}
