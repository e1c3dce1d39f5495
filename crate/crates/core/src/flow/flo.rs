//! Middlebury `.flo` files: little-endian `f32` sentinel 202021.25 ("PIEH"),
//! `i32` width, `i32` height, then `height * width` interleaved `(u, v)`
//! `f32` pairs in row-major order.

use std::path::Path;

use super::{FlowError, FlowField};

pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_HEADER_BYTES: usize = 12;
/// Components at or above this magnitude mark unknown flow.
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;
/// Sanity cap on either side of a flow file.
pub const MAX_FLO_SIDE: usize = 1 << 15;
const MAX_FLO_PIXELS: usize = 1 << 26;

/// Expected byte length of a `.flo` file for a `width × height` field.
pub fn flo_file_len(width: usize, height: usize) -> usize {
    FLO_HEADER_BYTES + 8 * width * height
}

/// Serializes two component grids. Both slices must hold `width * height`
/// values.
pub fn encode_flo(width: usize, height: usize, u: &[f32], v: &[f32]) -> Vec<u8> {
    assert_eq!(u.len(), width * height);
    assert_eq!(v.len(), width * height);
    let mut out = Vec::with_capacity(flo_file_len(width, height));
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(width as i32).to_le_bytes());
    out.extend_from_slice(&(height as i32).to_le_bytes());
    for (a, b) in u.iter().zip(v) {
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

/// Decoded `.flo` payload: `(width, height, u, v)`.
pub type FloPayload = (usize, usize, Vec<f32>, Vec<f32>);

pub fn decode_flo(bytes: &[u8]) -> Result<FloPayload, FlowError> {
    if bytes.len() < FLO_HEADER_BYTES {
        if bytes.len() >= 4 {
            check_magic(bytes)?;
        }
        return Err(FlowError::TruncatedFile {
            expected: FLO_HEADER_BYTES,
            found: bytes.len(),
        });
    }
    check_magic(bytes)?;
    let width = i32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let height = i32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if width <= 0
        || height <= 0
        || width as usize > MAX_FLO_SIDE
        || height as usize > MAX_FLO_SIDE
        || (width as usize) * (height as usize) > MAX_FLO_PIXELS
    {
        return Err(FlowError::OversizeDimensions {
            width: i64::from(width),
            height: i64::from(height),
        });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = flo_file_len(w, h);
    if bytes.len() != expected {
        return Err(FlowError::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for pair in bytes[FLO_HEADER_BYTES..].chunks_exact(8) {
        u.push(f32::from_le_bytes(pair[0..4].try_into().expect("4 bytes")));
        v.push(f32::from_le_bytes(pair[4..8].try_into().expect("4 bytes")));
    }
    Ok((w, h, u, v))
}

fn check_magic(bytes: &[u8]) -> Result<(), FlowError> {
    let magic = f32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(FlowError::BadMagic(magic));
    }
    Ok(())
}

pub fn write_flo(field: &FlowField, path: &Path) -> Result<(), FlowError> {
    let bytes = encode_flo(field.width(), field.height(), field.u(), field.v());
    std::fs::write(path, bytes).map_err(|e| FlowError::io(path, e))
}

/// Reads a `.flo` file; `src_index` is recorded on the returned field.
/// Pixels with non-finite or "unknown" components are marked invalid.
pub fn read_flo(path: &Path, src_index: usize) -> Result<FlowField, FlowError> {
    let bytes = std::fs::read(path).map_err(|e| FlowError::io(path, e))?;
    let (w, h, u, v) = decode_flo(&bytes)?;
    let validity = u
        .iter()
        .zip(&v)
        .map(|(a, b)| {
            a.is_finite()
                && b.is_finite()
                && a.abs() < UNKNOWN_FLOW_THRESHOLD
                && b.abs() < UNKNOWN_FLOW_THRESHOLD
        })
        .collect();
    Ok(FlowField::with_validity(w, h, u, v, src_index, validity))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.flo");
        let f = FlowField::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4], 0);
        write_flo(&f, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 12 + 8 * 4);
        let g = read_flo(&path, 0).unwrap();
        assert_eq!(g.u(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.v(), &[0.0; 4]);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_flo(3, 1, &[0.5; 3], &[-0.5; 3]);
        assert_eq!(&bytes[0..4], b"PIEH");
        assert_eq!(&bytes[4..8], &3i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1i32.to_le_bytes());
        assert_eq!(&bytes[12..16], &0.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_flo(1, 1, &[0.0], &[0.0]);
        bytes[0..4].copy_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(decode_flo(&bytes), Err(FlowError::BadMagic(m)) if m == 1.0));
    }

    #[test]
    fn truncated_and_oversize() {
        let bytes = encode_flo(4, 4, &[0.0; 16], &[0.0; 16]);
        assert!(matches!(
            decode_flo(&bytes[..bytes.len() - 1]),
            Err(FlowError::TruncatedFile { .. })
        ));
        assert!(matches!(decode_flo(&bytes[..6]), Err(FlowError::TruncatedFile { .. })));
        let mut huge = bytes.clone();
        huge[4..8].copy_from_slice(&(1i32 << 20).to_le_bytes());
        assert!(matches!(decode_flo(&huge), Err(FlowError::OversizeDimensions { .. })));
        let mut neg = bytes;
        neg[8..12].copy_from_slice(&(-3i32).to_le_bytes());
        assert!(matches!(decode_flo(&neg), Err(FlowError::OversizeDimensions { .. })));
    }

    #[test]
    fn unknown_flow_marked_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.flo");
        std::fs::write(&path, encode_flo(2, 1, &[1e10, 0.0], &[0.0, 0.0])).unwrap();
        let f = read_flo(&path, 3).unwrap();
        assert_eq!(f.validity(), &[false, true]);
        assert_eq!(f.src_index(), 3);
    }
}
