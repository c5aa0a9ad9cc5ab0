//! Image file formats.
//!
//! - PGM, binary (P5) and ASCII (P2). Reading maps samples to `[0, 1]` by
//!   dividing by maxval; writing maps the image's `[min, max]` linearly onto
//!   `0..=255`, so it is a lossy visualization format.
//! - A lossless raw format: the magic `NLPI`, then `u32` width, `u32` height
//!   and a reserved `u32` (zero), all little-endian, followed by the pixels
//!   as little-endian `f64` in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Image;
use crate::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"NLPI";
const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// P2
    Ascii,
    /// P5
    Binary,
}

pub fn encode_raw(img: &Image) -> Vec<u8> {
    let mut buf = Vec::with_capacity(RAW_HEADER_LEN + 8 * img.len());
    buf.extend_from_slice(RAW_MAGIC);
    buf.extend_from_slice(&(img.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(img.height() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in img.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_raw(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < RAW_HEADER_LEN || &bytes[..4] != RAW_MAGIC {
        return Err(Error::Format("missing NLPI raw header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != 8 * w * h {
        return Err(Error::Format(format!(
            "raw body holds {} bytes, expected {} for {w}x{h}",
            body.len(),
            8 * w * h
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(w, h, data)
}

pub fn write_raw(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode_raw(img))?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Image> {
    decode_raw(&fs::read(path)?)
}

/// Encodes as 8-bit PGM with `[min, max]` stretched to `[0, 255]`.
/// Constant images encode as all zeros.
pub fn encode_pgm(img: &Image, encoding: PgmEncoding) -> Vec<u8> {
    let (lo, hi) = img.min_max();
    let span = hi - lo;
    let samples: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();

    let mut out = Vec::new();
    let magic = match encoding {
        PgmEncoding::Ascii => "P2",
        PgmEncoding::Binary => "P5",
    };
    write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height()).unwrap();
    match encoding {
        PgmEncoding::Binary => out.extend_from_slice(&samples),
        PgmEncoding::Ascii => {
            for row in samples.chunks(img.width()) {
                let line: Vec<String> = row.iter().map(|s| s.to_string()).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
    }
    out
}

/// Decodes P2 or P5 (8- or 16-bit) into `[0, 1]` intensities.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let ascii = match magic.as_str() {
        "P2" => true,
        "P5" => false,
        other => return Err(Error::Format(format!("unsupported PGM magic `{other}`"))),
    };
    let width = parse_header_number(bytes, &mut pos)?;
    let height = parse_header_number(bytes, &mut pos)?;
    let maxval = parse_header_number(bytes, &mut pos)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("invalid PGM maxval {maxval}")));
    }
    let n = width * height;
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if ascii {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(parse_header_number(bytes, &mut pos)? as f64 * scale);
        }
        v
    } else {
        // Exactly one whitespace byte separates maxval from the raster.
        pos += 1;
        let bytes_per = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(pos..pos + n * bytes_per)
            .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
        if bytes_per == 1 {
            raster.iter().map(|&b| b as f64 * scale).collect()
        } else {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
                .collect()
        }
    };
    Image::new(width, height, data)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of PGM data".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::Format(format!("expected a number in PGM, found `{tok}`")))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image, encoding: PgmEncoding) -> Result<()> {
    fs::write(path, encode_pgm(img, encoding))?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pgm(&fs::read(path)?)
}

/// Reads either format, choosing by content (the raw magic or a PGM header).
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(RAW_MAGIC) {
        decode_raw(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Maps a PGM-decoded image to `{0, 1}` by thresholding at mid-range.
pub fn binarize_mid_range(img: &Image) -> Image {
    img.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn raw_round_trip_is_exact(
            (w, h, data) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), prop::collection::vec(-1e300f64..1e300, w * h))
            })
        ) {
            let img = Image::new(w, h, data).unwrap();
            let back = decode_raw(&encode_raw(&img)).unwrap();
            prop_assert!(img.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.dims(), (w, h));
        }
    }

    #[test]
    fn raw_header_layout() {
        let img = Image::from_vector(vec![1.5]).unwrap();
        let bytes = encode_raw(&img);
        assert_eq!(&bytes[..4], b"NLPI");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[16..], &1.5f64.to_le_bytes());
        assert!(decode_raw(&bytes[..20]).is_err());
        assert!(decode_raw(b"XXXX000000000000").is_err());
    }

    #[test]
    fn pgm_stretches_and_round_trips_8bit_levels() {
        let img = Image::from_fn(4, 3, |x, y| (x + 4 * y) as f64 / 11.0 * 2.0 - 1.0);
        for enc in [PgmEncoding::Ascii, PgmEncoding::Binary] {
            let back = decode_pgm(&encode_pgm(&img, enc)).unwrap();
            assert_eq!(back.dims(), (4, 3));
            assert_eq!(back.get(0, 0), 0.0);
            assert_eq!(back.get(3, 2), 1.0);
            // Range-stretched values come back in [0, 1] at 8-bit precision.
            for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
                assert!(((a + 1.0) / 2.0 - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_parses_comments_and_16_bit() {
        let ascii = b"P2\n# comment\n2 1\n# another\n10\n0 10\n";
        let img = decode_pgm(ascii).unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0]);

        let mut p5 = b"P5 2 1 65535\n".to_vec();
        p5.extend_from_slice(&[0, 0, 0xff, 0xff]);
        assert_eq!(decode_pgm(&p5).unwrap().as_slice(), &[0.0, 1.0]);

        assert!(decode_pgm(b"P6 1 1 255\n\0\0\0").is_err());
        assert!(decode_pgm(b"P5 4 4 255\n\0").is_err());
    }

    #[test]
    fn binarize_threshold() {
        let img = Image::from_vector(vec![0.0, 0.49, 0.5, 1.0]).unwrap();
        assert_eq!(binarize_mid_range(&img).as_slice(), &[0.0, 0.0, 1.0, 1.0]);
    }
}
