//! Netpbm grayscale (PGM, `P2`/`P5`) and color (PPM, `P3`/`P6`) codec.
//!
//! Samples are scaled by `1 / maxval` on decode. Binary payloads with
//! `maxval > 255` use two big-endian bytes per sample.

use super::{ColorImage, GrayImage};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetpbmError {
    #[error("unsupported magic number {magic:?} at byte 0")]
    UnsupportedMagic { magic: String },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("truncated payload at byte {offset}: expected {expected} more bytes")]
    Truncated { offset: usize, expected: usize },
    #[error("malformed sample at byte {offset}: {reason}")]
    MalformedSample { offset: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodedImage {
    Gray(GrayImage),
    Color(ColorImage),
}

impl DecodedImage {
    /// Grayscale view; color images are converted through Rec.601 luma.
    pub fn into_gray(self) -> GrayImage {
        match self {
            DecodedImage::Gray(g) => g,
            DecodedImage::Color(c) => c.to_grayscale(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    AsciiGray,
    AsciiColor,
    BinaryGray,
    BinaryColor,
}

impl Kind {
    fn channels(self) -> usize {
        match self {
            Kind::AsciiGray | Kind::BinaryGray => 1,
            Kind::AsciiColor | Kind::BinaryColor => 3,
        }
    }

    fn is_binary(self) -> bool {
        matches!(self, Kind::BinaryGray | Kind::BinaryColor)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Reads an unsigned decimal token. Returns the value and its starting offset.
    fn read_uint(&mut self) -> Option<(u64, usize)> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)?
                .checked_add((self.bytes[self.pos] - b'0') as u64)?;
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            Some((value, start))
        }
    }
}

fn header_field(cur: &mut Cursor<'_>, name: &str) -> Result<u64, NetpbmError> {
    match cur.read_uint() {
        Some((v, _)) => Ok(v),
        None => {
            cur.skip_whitespace_and_comments();
            Err(NetpbmError::MalformedHeader {
                offset: cur.pos,
                reason: format!("expected {name}"),
            })
        }
    }
}

pub fn decode_netpbm(bytes: &[u8]) -> Result<DecodedImage, NetpbmError> {
    if bytes.len() < 2 {
        return Err(NetpbmError::MalformedHeader {
            offset: 0,
            reason: "missing magic number".into(),
        });
    }
    let kind = match &bytes[..2] {
        b"P2" => Kind::AsciiGray,
        b"P3" => Kind::AsciiColor,
        b"P5" => Kind::BinaryGray,
        b"P6" => Kind::BinaryColor,
        other => {
            return Err(NetpbmError::UnsupportedMagic {
                magic: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = header_field(&mut cur, "width")? as usize;
    let height = header_field(&mut cur, "height")? as usize;
    cur.skip_whitespace_and_comments();
    let maxval_offset = cur.pos;
    let maxval = header_field(&mut cur, "maxval")?;
    if width == 0 || height == 0 {
        return Err(NetpbmError::MalformedHeader {
            offset: 2,
            reason: format!("zero dimension {width}x{height}"),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(NetpbmError::MalformedHeader {
            offset: maxval_offset,
            reason: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(kind.channels()))
        .ok_or_else(|| NetpbmError::MalformedHeader {
            offset: 2,
            reason: "image dimensions overflow".into(),
        })?;

    let samples = if kind.is_binary() {
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(NetpbmError::MalformedHeader {
                    offset: cur.pos,
                    reason: "expected whitespace after maxval".into(),
                })
            }
        }
        let bps = if maxval > 255 { 2 } else { 1 };
        let needed = count * bps;
        let payload = &bytes[cur.pos..];
        if payload.len() < needed {
            return Err(NetpbmError::Truncated {
                offset: bytes.len(),
                expected: needed - payload.len(),
            });
        }
        let raw: Vec<u64> = if bps == 1 {
            payload[..needed].iter().map(|&b| b as u64).collect()
        } else {
            payload[..needed]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as u64)
                .collect()
        };
        if let Some(i) = raw.iter().position(|&v| v > maxval) {
            return Err(NetpbmError::MalformedSample {
                offset: cur.pos + i * bps,
                reason: format!("sample {} exceeds maxval {maxval}", raw[i]),
            });
        }
        raw
    } else {
        let mut raw = Vec::with_capacity(count);
        for _ in 0..count {
            match cur.read_uint() {
                Some((v, off)) if v > maxval => {
                    return Err(NetpbmError::MalformedSample {
                        offset: off,
                        reason: format!("sample {v} exceeds maxval {maxval}"),
                    })
                }
                Some((v, _)) => raw.push(v),
                None if cur.pos >= bytes.len() => {
                    return Err(NetpbmError::Truncated {
                        offset: cur.pos,
                        expected: count - raw.len(),
                    })
                }
                None => {
                    return Err(NetpbmError::MalformedSample {
                        offset: cur.pos,
                        reason: "expected decimal sample".into(),
                    })
                }
            }
        }
        raw
    };

    let scale = maxval as f32;
    if kind.channels() == 1 {
        let data = samples.iter().map(|&v| v as f32 / scale).collect();
        Ok(DecodedImage::Gray(GrayImage::from_raw(width, height, data)))
    } else {
        let data = samples
            .chunks_exact(3)
            .map(|c| {
                [
                    c[0] as f32 / scale,
                    c[1] as f32 / scale,
                    c[2] as f32 / scale,
                ]
            })
            .collect();
        Ok(DecodedImage::Color(ColorImage {
            width,
            height,
            data,
        }))
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary `P5` at maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

/// Binary `P6` at maxval 255.
pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for px in &img.data {
        out.extend(px.iter().map(|&v| quantize(v)));
    }
    out
}
