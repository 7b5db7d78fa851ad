//! Packet-trace analysis toolkit.
//!
//! Reads classic pcap captures, dissects Ethernet/IPv4/TCP/UDP/ICMP
//! layers, tracks per-conversation TCP state, and flags trojan and
//! backdoor indicators: known payload signatures, half-open handshakes,
//! listening-port changes on a live address pair, empty-ACK floods, and
//! zeroed sequence/acknowledgment fields. Findings land in an append-mode
//! evidence log from which static HTML and JSON reports are rendered.
//! A deterministic scenario generator produces traces with manifests of
//! the detections they are built to trigger.

pub mod checksum;
pub mod dissect;
pub mod engine;
pub mod evidence;
pub mod flow;
pub mod hexdump;
pub mod pcap;
pub mod report;
pub mod signatures;
pub mod synth;
