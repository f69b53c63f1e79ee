//! Binary PGM (P5, maxval 255) frame I/O.
//!
//! The header is restricted to the exact canonical form this crate writes,
//! `P5\n{width} {height}\n255\n`, so that write(read(f)) reproduces any
//! accepted file byte for byte.

use super::Frame2D;
use crate::error::{CadxError, Result};
use std::io::Write;
use std::path::Path;

/// Reads a canonical P5 frame; 8-bit value v maps to v/255.
pub fn read_frame(path: &Path) -> Result<Frame2D> {
    let bytes = std::fs::read(path).map_err(|e| CadxError::io(path, e))?;
    decode_frame(&bytes).map_err(|msg| CadxError::parse(path, msg))
}

/// Writes a frame with intensities in [0, 1]; value v maps to round(v*255).
pub fn write_frame(frame: &Frame2D, path: &Path) -> Result<()> {
    let bytes = encode_frame(frame)?;
    let mut file = std::fs::File::create(path).map_err(|e| CadxError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| CadxError::io(path, e))
}

pub(crate) fn encode_frame(frame: &Frame2D) -> Result<Vec<u8>> {
    if frame.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(CadxError::validation(
            "frame intensity outside [0,1]; cannot quantize to 8-bit",
        ));
    }
    let mut out = Vec::with_capacity(32 + frame.data().len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", frame.width(), frame.height()).as_bytes());
    out.extend(frame.data().iter().map(|&v| (v * 255.0).round() as u8));
    Ok(out)
}

pub(crate) fn decode_frame(bytes: &[u8]) -> std::result::Result<Frame2D, String> {
    let rest = bytes
        .strip_prefix(b"P5\n")
        .ok_or_else(|| "not a canonical P5 file".to_string())?;
    let header_end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| "missing dimension line".to_string())?;
    let dim_line = std::str::from_utf8(&rest[..header_end])
        .map_err(|_| "dimension line is not UTF-8".to_string())?;
    let mut parts = dim_line.split(' ');
    let width: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| "malformed width".to_string())?;
    let height: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| "malformed height".to_string())?;
    if parts.next().is_some() {
        return Err("malformed dimension line".to_string());
    }
    let rest = &rest[header_end + 1..];
    let maxval_end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| "missing maxval line".to_string())?;
    let maxval = std::str::from_utf8(&rest[..maxval_end])
        .ok()
        .and_then(|t| t.parse::<u32>().ok())
        .ok_or_else(|| "malformed maxval".to_string())?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}; only 255 is supported"));
    }
    let payload = &rest[maxval_end + 1..];
    if width == 0 || height == 0 {
        return Err("zero frame dimension".to_string());
    }
    let expected = width * height;
    if payload.len() < expected {
        return Err(format!(
            "truncated payload: expected {expected} bytes, found {}",
            payload.len()
        ));
    }
    if payload.len() > expected {
        return Err(format!(
            "trailing data: expected {expected} bytes, found {}",
            payload.len()
        ));
    }
    let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Frame2D::new(width, height, data).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_maps_bytes_to_unit_interval() {
        let bytes = b"P5\n2 2\n255\n\x00\xff\x80\x40";
        let frame = decode_frame(bytes).unwrap();
        assert_eq!(
            frame.data(),
            &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0][..]
        );
    }

    #[test]
    fn encode_decode_identity_on_canonical_file() {
        let bytes: Vec<u8> = b"P5\n3 2\n255\n"
            .iter()
            .copied()
            .chain([0u8, 17, 255, 128, 6, 91])
            .collect();
        let frame = decode_frame(&bytes).unwrap();
        assert_eq!(encode_frame(&frame).unwrap(), bytes);
    }

    #[test]
    fn unsupported_maxval_is_reported() {
        let bytes = b"P5\n1 1\n65535\n\x00\x00";
        let err = decode_frame(bytes).unwrap_err();
        assert!(err.contains("unsupported maxval"), "{err}");
    }

    #[test]
    fn truncated_payload_is_reported() {
        let bytes = b"P5\n2 2\n255\n\x00\x01";
        let err = decode_frame(bytes).unwrap_err();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn malformed_header_is_reported() {
        assert!(decode_frame(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_frame(b"P5\n1\n255\n\x00").is_err());
        assert!(decode_frame(b"P5\n1 1 1\n255\n\x00").is_err());
    }

    #[test]
    fn out_of_range_intensity_rejected_on_write() {
        let frame = Frame2D::new(1, 1, vec![-0.25]).unwrap();
        assert!(encode_frame(&frame).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let frame = Frame2D::new(2, 1, vec![0.0, 1.0]).unwrap();
        write_frame(&frame, &path).unwrap();
        assert_eq!(read_frame(&path).unwrap(), frame);
    }

    proptest! {
        #[test]
        fn write_read_round_trips_bytes(
            w in 1usize..20,
            h in 1usize..20,
            seed in any::<u64>(),
        ) {
            let mut s = seed;
            let mut next = move || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            };
            let data: Vec<f64> = (0..w * h).map(|_| next() as f64 / 255.0).collect();
            let frame = Frame2D::new(w, h, data).unwrap();
            let encoded = encode_frame(&frame).unwrap();
            let decoded = decode_frame(&encoded).unwrap();
            prop_assert_eq!(encode_frame(&decoded).unwrap(), encoded);
        }
    }
}
