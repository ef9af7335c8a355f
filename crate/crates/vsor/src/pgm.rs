//! Binary 16-bit greyscale PGM (`P5`, maxval 65535, big-endian samples).

use std::path::Path;

use crate::error::{Error, Result};

pub const MAXVAL: u32 = 65535;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray16 {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<u32, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format!("{what} out of range"))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Gray16, String> {
    if !bytes.starts_with(b"P5") {
        return Err("missing P5 magic".into());
    }
    let mut h = Header { bytes, pos: 2 };
    if !h
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err("missing P5 magic".into());
    }
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero image extent".into());
    }
    if maxval != MAXVAL {
        return Err(format!("maxval {maxval}, expected {MAXVAL}"));
    }
    if !h.bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("header not terminated by whitespace".into());
    }
    let data = &bytes[h.pos + 1..];
    let expected = width * height * 2;
    if data.len() != expected {
        return Err(format!("{} sample bytes, expected {expected}", data.len()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Gray16 {
        width,
        height,
        samples,
    })
}

pub fn encode(img: &Gray16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, MAXVAL).into_bytes();
    out.reserve(img.samples.len() * 2);
    for s in &img.samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn read(path: &Path) -> Result<Gray16> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Pgm {
        path: path.into(),
        reason,
    })
}

pub fn write(path: &Path, img: &Gray16) -> Result<()> {
    std::fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}
