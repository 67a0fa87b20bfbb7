//! Grayscale PGM images and PBM masks.
//!
//! Writes binary P5 (8-bit) and P4. Reads P2/P5 (8- or 16-bit) and P1/P4.
//! In mask files a set bit marks a missing pixel.

use std::fs;
use std::path::Path;

use crate::error::{GglrError, Result};
use crate::grid::{ImageGrid, PixelMask};

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(GglrError::Format(msg.into()))
}

struct Header<'a> {
    magic: [u8; 2],
    fields: Vec<usize>,
    body: &'a [u8],
}

/// Parses the magic number and `count` ASCII integers, skipping comments.
/// For binary formats the body starts after exactly one whitespace byte.
fn parse_header(data: &[u8], count: usize) -> Result<Header<'_>> {
    if data.len() < 2 || data[0] != b'P' {
        return format_err("missing netpbm magic number");
    }
    let magic = [data[0], data[1]];
    let mut pos = 2;
    let mut fields = Vec::with_capacity(count);
    while fields.len() < count {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return format_err("truncated or malformed header");
        }
        let text = std::str::from_utf8(&data[start..pos]).expect("ascii digits");
        fields.push(text.parse().map_err(|_| GglrError::Format(format!("bad header value {text}")))?);
    }
    if pos < data.len() {
        if !data[pos].is_ascii_whitespace() {
            return format_err("header not terminated by whitespace");
        }
        pos += 1;
    }
    Ok(Header {
        magic,
        fields,
        body: &data[pos..],
    })
}

fn ascii_values(body: &[u8]) -> impl Iterator<Item = &[u8]> {
    body.split(|b| b.is_ascii_whitespace()).filter(|t| !t.is_empty())
}

pub fn decode_pgm(data: &[u8]) -> Result<ImageGrid> {
    let h = parse_header(data, 3)?;
    let (cols, rows, maxval) = (h.fields[0], h.fields[1], h.fields[2]);
    if maxval == 0 || maxval > 65535 {
        return format_err(format!("maxval {maxval} out of range"));
    }
    let n = rows * cols;
    let scale = maxval as f64;
    let raw: Vec<u16> = match &h.magic {
        b"P5" => {
            let width = if maxval < 256 { 1 } else { 2 };
            if h.body.len() < n * width {
                return format_err(format!("expected {} bytes of pixel data, found {}", n * width, h.body.len()));
            }
            if width == 1 {
                h.body[..n].iter().map(|&b| b as u16).collect()
            } else {
                h.body[..2 * n].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            }
        }
        b"P2" => {
            let vals: Vec<u16> = ascii_values(h.body)
                .take(n)
                .map(|t| {
                    std::str::from_utf8(t)
                        .ok()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| GglrError::Format("bad pixel value".into()))
                })
                .collect::<Result<_>>()?;
            if vals.len() < n {
                return format_err("too few pixel values");
            }
            vals
        }
        m => return format_err(format!("not a PGM file (magic {}{})", m[0] as char, m[1] as char)),
    };
    if raw.iter().any(|&v| v as usize > maxval) {
        return format_err("pixel value exceeds maxval");
    }
    let row_major: Vec<f64> = raw.iter().map(|&v| v as f64 / scale).collect();
    ImageGrid::from_row_major(rows, cols, &row_major)
}

/// 8-bit P5; values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(img: &ImageGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(
        img.to_row_major()
            .into_iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn decode_pbm(data: &[u8]) -> Result<PixelMask> {
    let h = parse_header(data, 2)?;
    let (cols, rows) = (h.fields[0], h.fields[1]);
    let mut missing = Vec::with_capacity(rows * cols);
    match &h.magic {
        b"P4" => {
            let stride = cols.div_ceil(8);
            if h.body.len() < stride * rows {
                return format_err(format!("expected {} bytes of mask data, found {}", stride * rows, h.body.len()));
            }
            for r in 0..rows {
                let line = &h.body[r * stride..(r + 1) * stride];
                missing.extend((0..cols).map(|c| line[c / 8] >> (7 - c % 8) & 1 == 1));
            }
        }
        b"P1" => {
            // P1 allows digits without separators
            for &b in h.body {
                match b {
                    b'0' => missing.push(false),
                    b'1' => missing.push(true),
                    b if b.is_ascii_whitespace() => {}
                    _ => return format_err("bad PBM value"),
                }
                if missing.len() == rows * cols {
                    break;
                }
            }
            if missing.len() < rows * cols {
                return format_err("too few mask values");
            }
        }
        m => return format_err(format!("not a PBM file (magic {}{})", m[0] as char, m[1] as char)),
    }
    PixelMask::from_fn(rows, cols, |k, l| !missing[k * cols + l])
}

pub fn encode_pbm(mask: &PixelMask) -> Vec<u8> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut out = format!("P4\n{cols} {rows}\n").into_bytes();
    let stride = cols.div_ceil(8);
    for r in 0..rows {
        let mut line = vec![0u8; stride];
        for c in 0..cols {
            if !mask.is_known(r, c) {
                line[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend(line);
    }
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &ImageGrid) -> Result<()> {
    Ok(fs::write(path, encode_pgm(img))?)
}

pub fn read_pbm(path: impl AsRef<Path>) -> Result<PixelMask> {
    decode_pbm(&fs::read(path)?)
}

pub fn write_pbm(path: impl AsRef<Path>, mask: &PixelMask) -> Result<()> {
    Ok(fs::write(path, encode_pbm(mask))?)
}
