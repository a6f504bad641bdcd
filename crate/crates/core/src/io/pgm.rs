//! Netpbm grayscale (PGM) reading and writing.
//!
//! Binary `P5` is the canonical interchange format; plain `P2` is accepted on
//! input. Samples wider than 8 bits are stored big-endian as the format
//! requires. Writers always emit the canonical header `P5\n<w> <h>\n<maxval>\n`,
//! so files produced by this module round-trip byte for byte.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{LabelGrid, PixelGrid};

/// A decoded PGM: intensities in their native range plus the declared maxval.
#[derive(Clone, Debug, PartialEq)]
pub struct PgmImage {
    pub grid: PixelGrid,
    pub maxval: u16,
}

/// Read a grayscale PGM and return its intensities.
pub fn load_image(path: impl AsRef<Path>) -> Result<PixelGrid> {
    read_pgm(path).map(|img| img.grid)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PgmImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedImage(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::MalformedImage("missing netpbm magic".into()));
    }
    let ascii = match bytes[1] {
        b'5' => false,
        b'2' => true,
        b'1' | b'3' | b'4' | b'6' | b'7' => {
            return Err(Error::NotGrayscale(format!(
                "netpbm variant P{} is not a grayscale map",
                bytes[1] as char
            )))
        }
        _ => return Err(Error::MalformedImage("unknown netpbm magic".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage("zero image dimension".into()));
    }
    if maxval == 0 || maxval > u16::MAX as u32 {
        return Err(Error::MalformedImage(format!("invalid maxval {maxval}")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedImage("image too large".into()))?;

    let mut values = Vec::with_capacity(n);
    if ascii {
        for _ in 0..n {
            let v = cur
                .number("sample")
                .map_err(|_| Error::MalformedImage("truncated raster".into()))?;
            if v > maxval {
                return Err(Error::MalformedImage(format!("sample {v} exceeds maxval")));
            }
            values.push(v as f64);
        }
    } else {
        // exactly one whitespace byte separates maxval from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::MalformedImage("truncated header".into()));
        }
        let raster = &bytes[cur.pos + 1..];
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        if raster.len() < need {
            return Err(Error::MalformedImage(format!(
                "truncated raster: expected {need} bytes, found {}",
                raster.len()
            )));
        }
        if wide {
            values.extend(
                raster[..need]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64),
            );
        } else {
            values.extend(raster[..n].iter().map(|&b| b as f64));
        }
        if let Some(v) = values.iter().find(|&&v| v > maxval as f64) {
            return Err(Error::MalformedImage(format!("sample {v} exceeds maxval")));
        }
    }
    Ok(PgmImage {
        grid: PixelGrid::new(width, height, values)?,
        maxval: maxval as u16,
    })
}

/// Encode as binary PGM; samples are rounded and clamped to `[0, maxval]`.
pub fn encode_pgm(grid: &PixelGrid, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let header = format!("P5\n{} {}\n{}\n", grid.width(), grid.height(), maxval);
    let wide = maxval > 255;
    let mut out = Vec::with_capacity(header.len() + grid.values().len() * (1 + wide as usize));
    out.extend_from_slice(header.as_bytes());
    for &v in grid.values() {
        let s = v.round().clamp(0.0, maxval as f64) as u16;
        if wide {
            out.extend_from_slice(&s.to_be_bytes());
        } else {
            out.push(s as u8);
        }
    }
    out
}

/// Smallest canonical maxval (255 or 65535) that holds every sample.
pub fn natural_maxval(grid: &PixelGrid) -> u16 {
    let max = grid.values().iter().cloned().fold(0.0f64, f64::max).round();
    if max <= 255.0 {
        255
    } else {
        u16::MAX
    }
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &PixelGrid, maxval: u16) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(grid, maxval)).map_err(|e| Error::io(path, e))
}

/// Write a binary label grid as an 8-bit PGM with values {0, 255}.
pub fn write_label_pgm(path: impl AsRef<Path>, labels: &LabelGrid) -> Result<()> {
    let values = labels.labels().iter().map(|&l| l as f64 * 255.0).collect();
    let grid = PixelGrid::new(labels.width(), labels.height(), values)?;
    write_pgm(path, &grid, 255)
}

/// Read a {0, 255} (or any nonzero-is-set) PGM back into a label grid.
pub fn read_label_pgm(path: impl AsRef<Path>) -> Result<LabelGrid> {
    let img = load_image(path)?;
    let labels = img.values().iter().map(|&v| (v > 0.0) as u8).collect();
    LabelGrid::new(img.width(), img.height(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_small_8bit_image() {
        let bytes = b"P5\n2 2\n255\n\x00\xff\x80\x40";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.grid.values(), &[0.0, 255.0, 128.0, 64.0]);
        assert_eq!((img.grid.width(), img.grid.height()), (2, 2));
    }

    #[test]
    fn decodes_16bit_maximal_sample() {
        let bytes = b"P5 1 1 65535\n\xff\xff";
        assert_eq!(decode_pgm(bytes).unwrap().grid.values(), &[65535.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n1 # width done\n1\n255\n\x07";
        assert_eq!(decode_pgm(bytes).unwrap().grid.values(), &[7.0]);
    }

    #[test]
    fn ascii_variant_is_accepted() {
        let img = decode_pgm(b"P2\n2 1\n15\n3 15\n").unwrap();
        assert_eq!(img.grid.values(), &[3.0, 15.0]);
    }

    #[test]
    fn truncated_raster_is_malformed() {
        let err = decode_pgm(b"P5\n2 2\n255\n\x00\x01").unwrap_err();
        assert!(matches!(err, Error::MalformedImage(_)));
        assert!(err.to_string().contains("malformed image"));
    }

    #[test]
    fn color_input_is_rejected_distinctly() {
        assert!(matches!(
            decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00").unwrap_err(),
            Error::NotGrayscale(_)
        ));
        assert!(matches!(
            decode_pgm(b"JFIF").unwrap_err(),
            Error::MalformedImage(_)
        ));
    }

    #[test]
    fn missing_file_is_its_own_error() {
        let err = load_image("/definitely/not/here.pgm").unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    proptest! {
        #[test]
        fn canonical_files_round_trip(w in 1usize..6, h in 1usize..6, wide in any::<bool>(),
                                      raw in proptest::collection::vec(any::<u16>(), 36)) {
            let maxval = if wide { u16::MAX } else { 255 };
            let values: Vec<f64> = raw[..w * h]
                .iter()
                .map(|&v| if wide { v as f64 } else { (v % 256) as f64 })
                .collect();
            let grid = PixelGrid::new(w, h, values).unwrap();
            let bytes = encode_pgm(&grid, maxval);
            let back = decode_pgm(&bytes).unwrap();
            prop_assert_eq!(&back.grid, &grid);
            prop_assert_eq!(encode_pgm(&back.grid, back.maxval), bytes);
        }
    }
}
