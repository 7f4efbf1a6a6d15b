//! Binary PGM (P5) and PPM (P6) with maxval 255.
//!
//! Loading maps bytes to `v / 255`; saving clamps to [0, 1] and stores
//! `round(255 v)`.

use std::fs;
use std::path::Path;

use srnet_core::{Error, Result, Shape, Tensor};

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    data_offset: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_number(bytes: &[u8], pos: usize) -> Result<(usize, usize)> {
    let start = skip_space_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(parse_err(start, "expected a decimal number"));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let v = text
        .parse()
        .map_err(|_| parse_err(start, format!("number `{text}` out of range")))?;
    Ok((v, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(parse_err(0, "expected magic P5 or P6")),
    };
    let (width, pos) = read_number(bytes, 2)?;
    let (height, pos) = read_number(bytes, pos)?;
    let maxval_at = skip_space_and_comments(bytes, pos);
    let (maxval, pos) = read_number(bytes, pos)?;
    if width == 0 || height == 0 {
        return Err(parse_err(pos, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(parse_err(maxval_at, format!("maxval {maxval} unsupported, only 255")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(parse_err(pos, "expected a single whitespace byte after maxval")),
    }
    Ok(Header {
        channels,
        width,
        height,
        data_offset: pos + 1,
    })
}

/// Decode a P5 image to `(1, 1, H, W)` or a P6 image to `(1, 3, H, W)`.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    let plane = h.width * h.height;
    let need = plane * h.channels;
    let payload = &bytes[h.data_offset..];
    if payload.len() < need {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    if payload.len() > need {
        return Err(parse_err(h.data_offset + need, "trailing bytes after payload"));
    }
    let mut data = vec![0.0; need];
    for (k, px) in payload.chunks_exact(h.channels).enumerate() {
        for (c, &b) in px.iter().enumerate() {
            data[c * plane + k] = f64::from(b) / 255.0;
        }
    }
    Tensor::new(Shape::new(1, h.channels, h.height, h.width)?, data)
}

pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Encode a `(1, 1, H, W)` map as P5 or a `(1, 3, H, W)` image as P6.
pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let s = t.shape();
    let magic = match (s.n, s.c) {
        (1, 1) => "P5",
        (1, 3) => "P6",
        _ => return Err(Error::InvalidShape(s.dims())),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", s.w, s.h).into_bytes();
    let plane = s.plane();
    out.reserve(plane * s.c);
    for k in 0..plane {
        for c in 0..s.c {
            out.push(quantize(t.data()[c * plane + k]));
        }
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn save(path: &Path, t: &Tensor) -> Result<()> {
    fs::write(path, encode(t)?).map_err(|e| Error::io(path, e))
}
