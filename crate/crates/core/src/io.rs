//! Binary field files (`EVF1`) and their text sidecars.
//!
//! Layout, little-endian:
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..4   | magic `EVF1`                              |
//! | 4..10  | nx, ny, nz as `u16`                       |
//! | 10..12 | nt as `u16`                               |
//! | 12..16 | nominal time step as `f32`, s             |
//! | 16..40 | axis origins, 3 × `f64`, µm               |
//! | 40..64 | axis spacings, 3 × `f64`, µm              |
//! | 64..   | samples, row-major (t, x, y, z), `f64`, µM |
//!
//! The sidecar (`<file>.meta`) holds `key = value` lines, including the exact
//! snapshot times, which the `f32` step cannot carry.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::channel::{Axis, ConcentrationField, Provenance};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EVF1";
pub const HEADER_LEN: usize = 64;

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "EVF1",
        message: message.into(),
    }
}

fn nominal_step(times: &[f64]) -> f64 {
    if times.len() < 2 {
        0.0
    } else {
        (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
    }
}

/// Serializes the header and samples.
pub fn encode_field(field: &ConcentrationField) -> Result<Vec<u8>> {
    let dims = [
        field.axes[0].len,
        field.axes[1].len,
        field.axes[2].len,
        field.times.len(),
    ];
    if let Some(d) = dims.iter().find(|&&d| d > u16::MAX as usize) {
        return Err(format_err(format!("dimension {d} exceeds the u16 header field")));
    }
    if field.values.len() != dims.iter().product::<usize>() {
        return Err(Error::LengthMismatch {
            what: "field values",
            expected: dims.iter().product(),
            found: field.values.len(),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * field.values.len());
    out.extend_from_slice(MAGIC);
    for d in dims {
        out.extend_from_slice(&(d as u16).to_le_bytes());
    }
    out.extend_from_slice(&(nominal_step(&field.times) as f32).to_le_bytes());
    for a in &field.axes {
        out.extend_from_slice(&a.origin.to_le_bytes());
    }
    for a in &field.axes {
        out.extend_from_slice(&a.spacing.to_le_bytes());
    }
    debug_assert_eq!(out.len(), HEADER_LEN);
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses a buffer written by [`encode_field`]. Times are reconstructed
/// from the nominal step; use [`read_field`] to pick up exact ones.
pub fn decode_field(bytes: &[u8], provenance: Provenance) -> Result<ConcentrationField> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (nx, ny, nz, nt) = (u16_at(4), u16_at(6), u16_at(8), u16_at(10));
    let dt = f32::from_le_bytes(bytes[12..16].try_into().unwrap()) as f64;
    let axes = [0, 1, 2].map(|a| Axis::new(f64_at(16 + 8 * a), f64_at(40 + 8 * a), [nx, ny, nz][a]));
    let count = nx * ny * nz * nt;
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(format_err(format!(
            "expected {} sample bytes for {nx}x{ny}x{nz}x{nt}, found {}",
            8 * count,
            bytes.len() - HEADER_LEN
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ConcentrationField {
        axes,
        times: (0..nt).map(|i| i as f64 * dt).collect(),
        values,
        provenance,
        clamped: 0,
    })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the field and its sidecar. `extra` entries are appended to the
/// sidecar after the built-in keys.
pub fn write_field(path: &Path, field: &ConcentrationField, extra: &[(&str, String)]) -> Result<()> {
    let bytes = encode_field(field)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta_path = sidecar_path(path);
    let mut meta = fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let times: Vec<String> = field.times.iter().map(|t| format!("{t:?}")).collect();
    let mut text = format!(
        "format = EVF1\nprovenance = {}\nunits = um, s, uM\nclamped = {}\ntimes = {}\n",
        field.provenance.tag(),
        field.clamped,
        times.join(",")
    );
    for (k, v) in extra {
        text.push_str(&format!("{k} = {v}\n"));
    }
    meta.write_all(text.as_bytes())
        .map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

/// Parses `key = value` lines.
pub fn read_sidecar(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            format: "EVF1 sidecar",
            message: format!("line {} has no `=`", n + 1),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Reads a field, taking exact times, provenance and clamp count from the
/// sidecar when present.
pub fn read_field(path: &Path) -> Result<ConcentrationField> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut field = decode_field(&bytes, Provenance::Analytic)?;
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Ok(field);
    }
    let meta = read_sidecar(&meta_path)?;
    let bad = |m: String| Error::Format {
        format: "EVF1 sidecar",
        message: m,
    };
    if let Some(p) = meta.get("provenance") {
        field.provenance = match p.as_str() {
            "analytic" => Provenance::Analytic,
            "grid" => Provenance::Grid,
            other => return Err(bad(format!("unknown provenance `{other}`"))),
        };
    }
    if let Some(c) = meta.get("clamped") {
        field.clamped = c.parse().map_err(|_| bad(format!("bad clamp count `{c}`")))?;
    }
    if let Some(t) = meta.get("times") {
        let times: Vec<f64> = if t.is_empty() {
            Vec::new()
        } else {
            t.split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("times: {e}")))?
        };
        if times.len() != field.times.len() {
            return Err(bad(format!(
                "sidecar lists {} times but the header has {}",
                times.len(),
                field.times.len()
            )));
        }
        field.times = times;
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_field() -> ConcentrationField {
        let axes = [Axis::new(-1.0, 0.5, 3), Axis::new(0.0, 1.0, 2), Axis::new(10.0, 0.25, 4)];
        let mut f = ConcentrationField::zeros(axes, vec![0.0, 0.1, 0.3], Provenance::Grid);
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = (i as f64).sin() * 1e-3;
        }
        f.clamped = 7;
        f
    }

    #[test]
    fn header_layout() {
        let b = encode_field(&sample_field()).unwrap();
        assert_eq!(&b[0..4], b"EVF1");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 3);
        assert_eq!(u16::from_le_bytes([b[10], b[11]]), 3);
        assert_eq!(f32::from_le_bytes(b[12..16].try_into().unwrap()), 0.15);
        assert_eq!(f64::from_le_bytes(b[32..40].try_into().unwrap()), 10.0);
        assert_eq!(f64::from_le_bytes(b[56..64].try_into().unwrap()), 0.25);
        assert_eq!(b.len(), 64 + 8 * 3 * 2 * 4 * 3);
    }

    #[test]
    fn round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.evf");
        let f = sample_field();
        write_field(&path, &f, &[("seed", "42".into())]).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back, f);
        assert_eq!(read_sidecar(&sidecar_path(&path)).unwrap()["seed"], "42");
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut b = encode_field(&sample_field()).unwrap();
        assert!(decode_field(&b[..40], Provenance::Grid).is_err());
        b.pop();
        assert!(decode_field(&b, Provenance::Grid).is_err());
        b[0] = b'X';
        assert!(decode_field(&b, Provenance::Grid).is_err());
    }
}
