//! `FSEQ` binary feature files and CSV export.
//!
//! Layout (little-endian): magic `FSEQ`, version `u16`, modality `u8`,
//! rate `u16` (Hz), `T: u32`, `D: u32`, then `T*D` `f32` values row-major.

use std::fmt::Write as _;
use std::path::Path;

use super::{FeatureSequence, Modality};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &[u8; 4] = b"FSEQ";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 2 + 4 + 4;

pub fn encode_fseq(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + seq.frames().data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(seq.modality().code());
    out.extend_from_slice(&(seq.rate_hz().round() as u16).to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    for &v in seq.frames().data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// `origin` is only used in error messages.
pub fn decode_fseq(bytes: &[u8], utterance_id: &str, origin: &Path) -> Result<FeatureSequence> {
    let bad = |d: &str| Error::format(origin, d.to_string());
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing FSEQ header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let modality = Modality::from_code(bytes[6]).ok_or_else(|| bad("unknown modality code"))?;
    let rate = u16::from_le_bytes([bytes[7], bytes[8]]) as f64;
    let t = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != t * d * 4 {
        return Err(bad(&format!("expected {} data bytes, found {}", t * d * 4, body.len())));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureSequence::new(Matrix::new(t, d, data)?, rate, modality, utterance_id).map_err(|e| bad(&e.to_string()))
}

pub fn write_fseq(path: &Path, seq: &FeatureSequence) -> Result<()> {
    std::fs::write(path, encode_fseq(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_fseq(path: &Path, utterance_id: &str) -> Result<FeatureSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fseq(&bytes, utterance_id, path)
}

/// Header row of dimension indices, then one row per frame.
pub fn to_csv(seq: &FeatureSequence) -> String {
    let mut out = (0..seq.dim()).map(|d| d.to_string()).collect::<Vec<_>>().join(",");
    out.push('\n');
    for t in 0..seq.len() {
        let row = seq.frames().row(t);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let seq = FeatureSequence::new(Matrix::zeros(2, 13), 100.0, Modality::Mfcc13, "u").unwrap();
        let b = encode_fseq(&seq);
        assert_eq!(&b[..4], b"FSEQ");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(b[6], 0);
        assert_eq!(u16::from_le_bytes([b[7], b[8]]), 100);
        assert_eq!(u32::from_le_bytes(b[9..13].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[13..17].try_into().unwrap()), 13);
        assert_eq!(b.len(), 17 + 2 * 13 * 4);
    }

    #[test]
    fn corrupt_input_rejected() {
        let p = Path::new("x.fseq");
        assert!(matches!(decode_fseq(b"NOPE", "u", p), Err(Error::Format { .. })));
        let seq = FeatureSequence::new(Matrix::zeros(2, 30), 100.0, Modality::Eeg30, "u").unwrap();
        let mut b = encode_fseq(&seq);
        b.pop();
        assert!(matches!(decode_fseq(&b, "u", p), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_header_is_dim_indices() {
        let seq = FeatureSequence::new(Matrix::zeros(1, 13), 100.0, Modality::Mfcc13, "u").unwrap();
        let csv = to_csv(&seq);
        assert!(csv.starts_with("0,1,2,3,4,5,6,7,8,9,10,11,12\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn round_trip_is_f32_exact(t in 0usize..20, vals in proptest::collection::vec(-1e6f32..1e6, 30 * 20)) {
            let data: Vec<f64> = vals[..t * 30].iter().map(|&v| v as f64).collect();
            let seq = FeatureSequence::new(Matrix::new(t, 30, data).unwrap(), 100.0, Modality::Eeg30, "u").unwrap();
            let back = decode_fseq(&encode_fseq(&seq), "u", Path::new("m")).unwrap();
            prop_assert_eq!(back, seq);
        }
    }
}
