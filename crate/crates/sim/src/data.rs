//! Dataset readers: IDX (the MNIST distribution format) and plain CSV.

use std::fmt;
use std::fs;
use std::path::Path;

use robustfed_core::Dataset;

use crate::error::{Result, SimError};

/// A decoded unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parse failure with the byte offset where the problem starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxError {
    pub offset: usize,
    pub reason: String,
}

impl fmt::Display for IdxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed IDX at byte {}: {}", self.offset, self.reason)
    }
}

impl std::error::Error for IdxError {}

fn idx_err(offset: usize, reason: impl Into<String>) -> IdxError {
    IdxError {
        offset,
        reason: reason.into(),
    }
}

/// Decodes an IDX buffer: two zero bytes, type code 0x08 (unsigned byte),
/// dimension count, big-endian `u32` sizes, then the payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, IdxError> {
    if bytes.len() < 4 {
        return Err(idx_err(
            bytes.len(),
            "file shorter than the 4-byte magic number",
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(idx_err(
            0,
            format!(
                "bad magic number {:02x}{:02x}{:02x}{:02x}",
                bytes[0], bytes[1], bytes[2], bytes[3]
            ),
        ));
    }
    if bytes[2] != 0x08 {
        return Err(idx_err(
            2,
            format!(
                "unsupported element type 0x{:02x} (only 0x08 unsigned byte)",
                bytes[2]
            ),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(idx_err(3, "zero dimensions"));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(idx_err(bytes.len(), format!("header needs {header} bytes")));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| idx_err(4, "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(idx_err(
            bytes.len(),
            format!(
                "truncated payload: expected {len} bytes after the header, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > len {
        return Err(idx_err(
            header + len,
            format!("{} trailing bytes", payload.len() - len),
        ));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| SimError::data(path, e.to_string()))?;
    parse_idx(&bytes).map_err(|e| SimError::data(path, e.to_string()))
}

/// Loads an image file (`n x d1 x d2 ...`) and a label file (`n`), scaling
/// pixels by 1/255.
pub fn load_idx(images: &Path, labels: &Path, num_classes: u32) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() < 2 {
        return Err(SimError::data(
            images,
            format!("expected at least 2 dimensions, found {}", img.dims.len()),
        ));
    }
    if lab.dims.len() != 1 {
        return Err(SimError::data(
            labels,
            format!("expected 1 dimension, found {}", lab.dims.len()),
        ));
    }
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(SimError::data(
            labels,
            format!("{} labels for {n} images", lab.dims[0]),
        ));
    }
    let dim: usize = img.dims[1..].iter().product();
    let features = img.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels_u32: Vec<u32> = lab.data.iter().map(|&b| u32::from(b)).collect();
    if let Some(i) = labels_u32.iter().position(|&l| l >= num_classes) {
        return Err(SimError::data(
            labels,
            format!(
                "label {} at index {i} outside 0..{num_classes}",
                labels_u32[i]
            ),
        ));
    }
    Dataset::new(features, labels_u32, dim, num_classes)
        .map_err(|e| SimError::data(images, e.to_string()))
}

/// Reads `label,f1,f2,...` rows. A first row whose label field is not an
/// integer is taken as a header. Features are divided by `scale` and must then
/// lie in `[0, 1]`.
pub fn load_csv(path: &Path, num_classes: u32, scale: f64) -> Result<Dataset> {
    let err = |reason: String| SimError::data(path, reason);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SimError::config(format!(
            "data.csv_scale: must be positive, got {scale}"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let line = row + 1;
        let Some(first) = record.get(0) else { continue };
        let label: u32 = match first.parse() {
            Ok(l) => l,
            Err(_) if row == 0 => continue,
            Err(_) => {
                return Err(err(format!(
                    "line {line}: label {first:?} is not a class index"
                )))
            }
        };
        if label >= num_classes {
            return Err(err(format!(
                "line {line}: label {label} outside 0..{num_classes}"
            )));
        }
        let width = record.len() - 1;
        if width == 0 {
            return Err(err(format!("line {line}: no features")));
        }
        if *dim.get_or_insert(width) != width {
            return Err(err(format!(
                "line {line}: {width} features, expected {}",
                dim.unwrap_or(0)
            )));
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| err(format!("line {line}: feature {field:?} is not a number")))?;
            let x = v / scale;
            if !(0.0..=1.0).contains(&x) {
                return Err(err(format!(
                    "line {line}: feature {v} is outside [0, 1] after dividing by {scale}"
                )));
            }
            features.push(x);
        }
        labels.push(label);
    }
    let dim = dim.ok_or_else(|| err("no data rows".into()))?;
    Dataset::new(features, labels, dim, num_classes).map_err(|e| err(e.to_string()))
}
