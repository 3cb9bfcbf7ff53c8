//! Binary PGM (`P5`, maxval 255) frames.
//!
//! Frames are always written with the header `P5\n<w> <h>\n255\n`, so files in that form
//! round-trip byte for byte.

use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};
use crate::io;

pub fn load_frame(path: &Path) -> Result<Frame> {
    let bytes = io::read(path)?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    io::write_atomic(path, &encode_pgm(frame))
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c.is_ascii_whitespace() {
                self.pos += 1;
            } else if c == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                Error::format("unexpected end of data")
            } else {
                Error::format(format!("malformed PGM header: expected {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("malformed PGM header: {what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 {
        return Err(Error::format("unexpected end of data"));
    }
    if &bytes[..2] != b"P5" {
        return Err(Error::format("malformed PGM header: not a binary (P5) PGM"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!(
            "unsupported PGM maxval {maxval} (only 255 is accepted)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("malformed PGM header: zero dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        Some(_) => return Err(Error::format("malformed PGM header: missing separator")),
        None => return Err(Error::format("unexpected end of data")),
    }
    let len = width
        .checked_mul(height)
        .ok_or_else(|| Error::format("malformed PGM header: dimension overflow"))?;
    let payload = &bytes[h.pos..];
    if payload.len() < len {
        return Err(Error::format("unexpected end of data"));
    }
    if payload.len() > len {
        return Err(Error::format("trailing data after PGM raster"));
    }
    Frame::new(width, height, payload.to_vec())
}
