//! Side-by-side hex and ASCII rendering, 16 bytes per row.
//!
//! Row layout is frozen: a four-digit lowercase hex offset, two spaces, a
//! 48-character hex column (16 space-separated byte pairs with one extra
//! space after the eighth, short rows padded with blanks), two spaces,
//! then the ASCII column where printable bytes 0x20..=0x7e appear
//! verbatim and everything else as `.`.

pub const BYTES_PER_ROW: usize = 16;

const HEX_COLUMN_WIDTH: usize = 48;

/// One rendered row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpLine {
    pub offset: usize,
    pub hex: String,
    pub ascii: String,
}

fn ascii_cell(byte: u8) -> char {
    if (0x20..=0x7e).contains(&byte) {
        byte as char
    } else {
        '.'
    }
}

/// Render `data` into rows. `base_offset` shifts the printed offsets so a
/// dump can be labeled with its position inside a larger buffer.
pub fn dump_lines(data: &[u8], base_offset: usize) -> Vec<DumpLine> {
    data.chunks(BYTES_PER_ROW)
        .enumerate()
        .map(|(row, chunk)| {
            let mut hex = String::with_capacity(HEX_COLUMN_WIDTH);
            for (i, byte) in chunk.iter().enumerate() {
                if i > 0 {
                    hex.push(' ');
                    if i == 8 {
                        hex.push(' ');
                    }
                }
                hex.push_str(&format!("{byte:02x}"));
            }
            while hex.len() < HEX_COLUMN_WIDTH {
                hex.push(' ');
            }
            DumpLine {
                offset: base_offset + row * BYTES_PER_ROW,
                hex,
                ascii: chunk.iter().copied().map(ascii_cell).collect(),
            }
        })
        .collect()
}

/// Render `data` as newline-terminated rows; empty input renders as the
/// empty string.
pub fn hexdump(data: &[u8], base_offset: usize) -> String {
    let mut out = String::new();
    for line in dump_lines(data, base_offset) {
        out.push_str(&format!("{:04x}  {}  {}\n", line.offset, line.hex, line.ascii));
    }
    out
}
