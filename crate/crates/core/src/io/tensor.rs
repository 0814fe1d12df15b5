use std::collections::BTreeMap;
use std::path::Path;

use super::binary::{product, read_file, write_file, Cursor};
use crate::error::{check_dim, Error, Result};
use crate::model::RowMatrix;
use crate::solver::{FeatureField, LabelTable, COVERAGE_EPS};

pub const TENSOR_VERSION: u32 = 1;
pub const LABEL_VERSION: u32 = 1;

/// Dense `H x W x F` float tensor, row-major over (row, column, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(height: u32, width: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        let n = height as usize * width as usize * channels as usize;
        check_dim("tensor payload", n, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor contains non-finite values"));
        }
        Ok(FeatureTensor { height, width, channels, data })
    }

    /// Rows of `m` become pixels of an `height x width` image; values are rounded to f32.
    pub fn from_rows(height: u32, width: u32, m: &RowMatrix) -> Result<Self> {
        check_dim("tensor pixels", height as usize * width as usize, m.rows())?;
        FeatureTensor::new(height, width, m.cols() as u32, m.as_slice().iter().map(|&v| v as f32).collect())
    }

    pub fn pixels(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn to_rows(&self) -> RowMatrix {
        RowMatrix::from_vec(self.pixels(), self.channels as usize, self.data.iter().map(|&v| v as f64).collect())
            .expect("tensor shape is consistent")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.data.len());
        out.extend_from_slice(b"FLT1");
        for v in [TENSOR_VERSION, self.height, self.width, self.channels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut c = Cursor::new(bytes, path);
        c.magic(b"FLT1")?;
        let version = c.u32("version")?;
        if version != TENSOR_VERSION {
            return Err(c.err("version", format!("unsupported version {version}")));
        }
        let (height, width, channels) = (c.u32("height")?, c.u32("width")?, c.u32("channels")?);
        let n = product(&[height, width, channels], path)?;
        let data = c.f32s(n, "payload")?;
        c.finish()?;
        Ok(FeatureTensor { height, width, channels, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        FeatureTensor::decode(&read_file(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }
}

/// Per-pixel integer labels; -1 marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: u32,
    pub width: u32,
    pub labels: Vec<i32>,
}

impl LabelMap {
    pub fn new(height: u32, width: u32, labels: Vec<i32>) -> Result<Self> {
        check_dim("label map payload", height as usize * width as usize, labels.len())?;
        Ok(LabelMap { height, width, labels })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.labels.len());
        out.extend_from_slice(b"LBL1");
        for v in [LABEL_VERSION, self.height, self.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.labels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut c = Cursor::new(bytes, path);
        c.magic(b"LBL1")?;
        let version = c.u32("version")?;
        if version != LABEL_VERSION {
            return Err(c.err("version", format!("unsupported version {version}")));
        }
        let (height, width) = (c.u32("height")?, c.u32("width")?);
        let n = product(&[height, width], path)?;
        let labels = (0..n).map(|_| c.i32("payload")).collect::<Result<Vec<_>>>()?;
        c.finish()?;
        if let Some(&l) = labels.iter().find(|&&l| l < -1) {
            return Err(c.err("payload", format!("label {l} below -1")));
        }
        Ok(LabelMap { height, width, labels })
    }

    pub fn read(path: &Path) -> Result<Self> {
        LabelMap::decode(&read_file(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }
}

/// Label id to feature vector table stored next to a [`LabelMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFeatures {
    pub dim: u32,
    pub entries: BTreeMap<i32, Vec<f32>>,
}

impl LabelFeatures {
    /// Values are rounded to f32.
    pub fn from_table(table: &LabelTable, dim: usize) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (&id, f) in table {
            check_dim("label feature dimension", dim, f.len())?;
            entries.insert(id, f.iter().map(|&v| v as f32).collect());
        }
        Ok(LabelFeatures { dim: dim as u32, entries })
    }

    pub fn to_table(&self) -> LabelTable {
        self.entries
            .iter()
            .map(|(&id, f)| (id, f.iter().map(|&v| v as f64).collect()))
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"LFT1");
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        for (id, f) in &self.entries {
            out.extend_from_slice(&id.to_le_bytes());
            for v in f {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut c = Cursor::new(bytes, path);
        c.magic(b"LFT1")?;
        let count = c.u32("count")?;
        let dim = c.u32("dim")?;
        let mut entries = BTreeMap::new();
        for k in 0..count {
            let id = c.i32("record id")?;
            if id < 0 {
                return Err(c.err("record id", format!("record {k} has negative id {id}")));
            }
            let f = c.f32s(dim as usize, "record features")?;
            if entries.insert(id, f).is_some() {
                return Err(c.err("record id", format!("id {id} appears twice")));
            }
        }
        c.finish()?;
        Ok(LabelFeatures { dim, entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        LabelFeatures::decode(&read_file(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }
}

/// Coverage sidecar path for a field file: `field.flt` -> `field.coverage.flt`.
pub fn coverage_path(field: &Path) -> std::path::PathBuf {
    let stem = field.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    field.with_file_name(format!("{stem}.coverage.flt"))
}

// Rounds coverage to f32 without moving it across the observed threshold.
fn coverage_f32(c: f64) -> f32 {
    let r = c as f32;
    let observed = c >= COVERAGE_EPS;
    if observed && (r as f64) < COVERAGE_EPS {
        r.next_up()
    } else if !observed && (r as f64) >= COVERAGE_EPS {
        r.next_down()
    } else {
        r
    }
}

/// Write a field as a `P x 1 x F` tensor plus a `P x 1 x 1` coverage sidecar.
pub fn write_field(path: &Path, x: &FeatureField) -> Result<()> {
    let p = x.len() as u32;
    FeatureTensor::from_rows(p, 1, x.values())?.write(path)?;
    let cov = x.coverage().iter().map(|&c| coverage_f32(c)).collect();
    FeatureTensor::new(p, 1, 1, cov)?.write(&coverage_path(path))
}

/// Read a field; without a coverage sidecar, zero rows count as unobserved.
pub fn read_field(path: &Path) -> Result<FeatureField> {
    let t = FeatureTensor::read(path)?;
    if t.width != 1 {
        return Err(Error::format(path, "width", format!("feature field must have width 1, found {}", t.width)));
    }
    let values = t.to_rows();
    let cpath = coverage_path(path);
    if !cpath.exists() {
        log::warn!("{}: no coverage sidecar, treating zero rows as unobserved", path.display());
        return FeatureField::from_values(values);
    }
    let c = FeatureTensor::read(&cpath)?;
    if c.height != t.height || c.width != 1 || c.channels != 1 {
        return Err(Error::format(
            &cpath,
            "header",
            format!("coverage must be {}x1x1, found {}x{}x{}", t.height, c.height, c.width, c.channels),
        ));
    }
    FeatureField::new(values, c.data.iter().map(|&v| v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn tensor_header_layout() {
        let t = FeatureTensor::new(1, 2, 1, vec![1.0, -2.5]).unwrap();
        let b = t.encode();
        assert_eq!(&b[..4], b"FLT1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(b.len(), 20 + 8);
        assert_eq!(f32::from_le_bytes(b[24..28].try_into().unwrap()), -2.5);
    }

    #[test]
    fn tensor_rejects_bad_files() {
        let good = FeatureTensor::new(2, 2, 2, vec![0.5; 8]).unwrap().encode();
        assert!(FeatureTensor::decode(&good[..good.len() - 1], p()).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(FeatureTensor::decode(&extra, p()).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(FeatureTensor::decode(&magic, p()).is_err());
        let mut nan = good.clone();
        nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        let e = FeatureTensor::decode(&nan, p()).unwrap_err().to_string();
        assert!(e.contains("payload"), "{e}");
        let mut ver = good;
        ver[4] = 9;
        assert!(FeatureTensor::decode(&ver, p()).is_err());
    }

    #[test]
    fn label_files_validate() {
        let m = LabelMap::new(1, 3, vec![-1, 0, 4]).unwrap();
        assert_eq!(LabelMap::decode(&m.encode(), p()).unwrap(), m);
        let bad = LabelMap::new(1, 1, vec![-2]).unwrap().encode();
        assert!(LabelMap::decode(&bad, p()).is_err());
        let mut t = LabelFeatures { dim: 2, entries: BTreeMap::new() };
        t.entries.insert(4, vec![1.0, 0.0]);
        t.entries.insert(0, vec![0.0, 1.0]);
        assert_eq!(LabelFeatures::decode(&t.encode(), p()).unwrap(), t);
        let mut dup = t.encode();
        // rewrite the second record id to collide with the first
        dup[12 + 12..12 + 16].copy_from_slice(&0i32.to_le_bytes());
        assert!(LabelFeatures::decode(&dup, p()).is_err());
    }

    #[test]
    fn coverage_rounding_keeps_observed_flags() {
        for c in [COVERAGE_EPS, COVERAGE_EPS * (1.0 + 1e-12), COVERAGE_EPS * (1.0 - 1e-12), 0.0, 0.5] {
            assert_eq!(coverage_f32(c) as f64 >= COVERAGE_EPS, c >= COVERAGE_EPS, "{c}");
        }
    }

    proptest! {
        #[test]
        fn tensor_round_trip_is_bit_exact(h in 0u32..5, w in 0u32..5, f in 0u32..4, seed in any::<u64>()) {
            let n = (h * w * f) as usize;
            let mut s = seed;
            let data: Vec<f32> = (0..n).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = f32::from_bits((s >> 32) as u32);
                if v.is_finite() { v } else { 0.0 }
            }).collect();
            let t = FeatureTensor::new(h, w, f, data).unwrap();
            let back = FeatureTensor::decode(&t.encode(), p()).unwrap();
            prop_assert_eq!(back.height, h);
            prop_assert!(t.data.iter().zip(&back.data).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.encode(), t.encode());
        }

        #[test]
        fn label_round_trip(labels in proptest::collection::vec(-1i32..1000, 0..40)) {
            let m = LabelMap::new(1, labels.len() as u32, labels).unwrap();
            prop_assert_eq!(LabelMap::decode(&m.encode(), p()).unwrap(), m);
        }
    }
}
