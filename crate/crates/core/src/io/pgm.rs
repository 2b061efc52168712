//! Binary (P5) PGM, 8 or 16 bits per sample.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Mat;

/// Parses a P5 image into raw sample values (not rescaled).
pub fn decode_pgm(bytes: &[u8]) -> Result<Mat> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("PGM header truncated".into()));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .unwrap_or("")
                .to_owned(),
        );
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!(
            "not a binary PGM (magic {:?})",
            fields[0]
        )));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM {what} {s:?}")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!(
            "unsupported PGM geometry {width}x{height}, maxval {maxval}"
        )));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let sample = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < expected {
        return Err(Error::Corruption {
            expected,
            actual: payload.len(),
        });
    }
    let data = if sample == 1 {
        payload[..expected].iter().map(|&b| b as f64).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Mat::new(height, width, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Mat> {
    decode_pgm(&fs::read(path)?)
}

/// Encodes `img` as an 8-bit P5 image, min-max stretched to 0..=255.
pub fn encode_pgm_preview(img: &Mat) -> Vec<u8> {
    let lo = img.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img
        .as_slice()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(
        img.as_slice()
            .iter()
            .map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_pgm_preview(path: impl AsRef<Path>, img: &Mat) -> Result<()> {
    fs::write(path, encode_pgm_preview(img))?;
    Ok(())
}
