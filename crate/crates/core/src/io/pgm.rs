//! 8-bit binary PGM (P5).

use std::path::Path;

use super::binary::{read_file, write_file};
use crate::aggregate::Mask;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        check_dim("image pixels", width as usize * height as usize, pixels.len())?;
        Ok(GrayImage { width, height, pixels })
    }

    pub fn from_mask(m: &Mask) -> Self {
        GrayImage {
            width: m.width,
            height: m.height,
            pixels: m.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    /// Values in `[0, 1]` quantized to 0..=255.
    pub fn from_unit(width: u32, height: u32, values: &[f64]) -> Result<Self> {
        let px = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        GrayImage::new(width, height, px)
    }

    /// Pixels at or above half intensity are set.
    pub fn to_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.pixels.iter().map(|&p| p >= 128).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |m: String| Error::format(path, "pgm header", m);
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
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(err("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(err(format!("magic '{}' is not P5", fields[0])));
        }
        let num = |s: &str, what: &str| s.parse::<u32>().map_err(|_| err(format!("bad {what} '{s}'")));
        let (width, height, maxval) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
        if maxval == 0 || maxval > 255 {
            return Err(err(format!("maxval {maxval} unsupported (need 1..=255)")));
        }
        let n = width as usize * height as usize;
        if bytes.len() < pos || bytes.len() - pos != n {
            return Err(Error::format(
                path,
                "pgm raster",
                format!("expected {n} bytes, found {}", bytes.len().saturating_sub(pos)),
            ));
        }
        let mut pixels = bytes[pos..].to_vec();
        if maxval != 255 {
            for p in &mut pixels {
                *p = ((*p as u32).min(maxval) * 255 / maxval) as u8;
            }
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn read(path: &Path) -> Result<Self> {
        GrayImage::decode(&read_file(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_comments_and_maxval() {
        let mut b = b"P5 # made by hand\n2 1\n# note\n1\n".to_vec();
        b.extend_from_slice(&[0, 1]);
        let g = GrayImage::decode(&b, Path::new("m.pgm")).unwrap();
        assert_eq!(g.pixels, vec![0, 255]);
        assert!(GrayImage::decode(b"P2\n1 1\n255\n\x00", Path::new("m.pgm")).is_err());
        assert!(GrayImage::decode(b"P5\n2 2\n255\n\x00", Path::new("m.pgm")).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(bits in proptest::collection::vec(any::<bool>(), 1..60)) {
            let m = Mask::new(bits.len() as u32, 1, bits).unwrap();
            let g = GrayImage::from_mask(&m);
            let back = GrayImage::decode(&g.encode(), Path::new("m.pgm")).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_mask(), m);
        }
    }
}
