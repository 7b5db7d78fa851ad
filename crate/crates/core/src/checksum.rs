//! Internet checksum (RFC 1071).
//!
//! The ones-complement 16-bit word sum used by the IPv4 header checksum
//! and, combined with a pseudo-header, by TCP and UDP.

/// Accumulate big-endian 16-bit words of `data` onto `sum` without folding.
///
/// Odd-length input is treated as if padded with one trailing zero byte.
/// Carries are left in the upper bits so multi-region sums (pseudo-header
/// plus segment) can be chained before a single [`fold`].
pub fn sum_words(data: &[u8], mut sum: u32) -> u32 {
    let mut chunks = data.chunks_exact(2);
    for pair in &mut chunks {
        sum += u32::from(u16::from_be_bytes([pair[0], pair[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    sum
}

/// Fold accumulated carries back into 16 bits and complement.
pub fn fold(mut sum: u32) -> u16 {
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Checksum of a single contiguous region.
pub fn internet_checksum(data: &[u8]) -> u16 {
    fold(sum_words(data, 0))
}

/// A region checksums as valid when summing it, checksum field included,
/// folds to zero.
pub fn verifies(data: &[u8]) -> bool {
    internet_checksum(data) == 0
}
