//! `VF2D` dataset files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VF2D"
//! 4       4     u32 version (1)
//! 8       12    u32 nx, ny, nt
//! 20      48    f64 origin[2], spacing[2], t_min, t_max
//! 68      ...   nt·ny·nx·2 f32 (t-major, y-major, x-minor, (u, v) interleaved)
//! ```
//!
//! All values little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{FieldError, GridSpec, VectorField2D};
use crate::linalg::Vec2;

pub const VF2D_MAGIC: [u8; 4] = *b"VF2D";
pub const VF2D_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 68;

const CHUNK: usize = 1 << 20;

/// Parsed dataset header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub spec: GridSpec,
}

impl DatasetHeader {
    /// Expected payload size in bytes. Computed in `u64` so headers for
    /// multi-gigabyte datasets never overflow.
    pub fn payload_bytes(&self) -> Result<u64, FieldError> {
        let s = &self.spec;
        [s.ny as u64, s.nt as u64, 2, 4]
            .iter()
            .try_fold(s.nx as u64, |acc, &v| acc.checked_mul(v))
            .ok_or_else(|| FieldError::MalformedHeader("payload size overflows u64".into()))
    }

    pub fn value_count(&self) -> Result<u64, FieldError> {
        Ok(self.payload_bytes()? / 4)
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let s = &self.spec;
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&VF2D_MAGIC);
        out[4..8].copy_from_slice(&VF2D_VERSION.to_le_bytes());
        let dims = [s.nx as u32, s.ny as u32, s.nt as u32];
        for (i, d) in dims.iter().enumerate() {
            out[8 + 4 * i..12 + 4 * i].copy_from_slice(&d.to_le_bytes());
        }
        let reals = [
            s.origin.x,
            s.origin.y,
            s.spacing.x,
            s.spacing.y,
            s.t_min,
            s.t_max,
        ];
        for (i, r) in reals.iter().enumerate() {
            out[20 + 8 * i..28 + 8 * i].copy_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8; HEADER_LEN]) -> Result<Self, FieldError> {
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != VF2D_MAGIC {
            return Err(FieldError::BadMagic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VF2D_VERSION {
            return Err(FieldError::UnsupportedVersion(version));
        }
        let spec = GridSpec {
            nx: u32_at(8) as usize,
            ny: u32_at(12) as usize,
            nt: u32_at(16) as usize,
            origin: Vec2::new(f64_at(20), f64_at(28)),
            spacing: Vec2::new(f64_at(36), f64_at(44)),
            t_min: f64_at(52),
            t_max: f64_at(60),
        };
        spec.validate().map_err(|e| match e {
            FieldError::InvalidGrid(m) => FieldError::MalformedHeader(m),
            other => other,
        })?;
        Ok(DatasetHeader { spec })
    }
}

fn read_header<R: Read>(r: &mut R) -> Result<DatasetHeader, FieldError> {
    let mut buf = [0u8; HEADER_LEN];
    let got = read_full(r, &mut buf)?;
    if got < HEADER_LEN {
        return Err(FieldError::MalformedHeader(format!(
            "header truncated: {got} of {HEADER_LEN} bytes"
        )));
    }
    DatasetHeader::decode(&buf)
}

/// Like `read_exact`, but reports how many bytes were read before EOF.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn read_payload<R: Read>(r: &mut R, header: &DatasetHeader) -> Result<Vec<f32>, FieldError> {
    let expected = header.payload_bytes()?;
    let count = usize::try_from(expected / 4)
        .map_err(|_| FieldError::MalformedHeader("payload exceeds address space".into()))?;
    let mut data = Vec::with_capacity(count);
    let mut buf = vec![0u8; CHUNK];
    let mut remaining = expected;
    while remaining > 0 {
        let want = remaining.min(CHUNK as u64) as usize;
        let got = read_full(r, &mut buf[..want])?;
        for chunk in buf[..got - got % 4].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(FieldError::NonFinite(data.len() as u64));
            }
            data.push(v);
        }
        if got < want {
            return Err(FieldError::SizeMismatch {
                expected,
                actual: expected - remaining + got as u64,
            });
        }
        remaining -= got as u64;
    }
    let mut probe = [0u8; 1];
    if read_full(r, &mut probe)? > 0 {
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        return Err(FieldError::SizeMismatch {
            expected,
            actual: expected + 1 + rest.len() as u64,
        });
    }
    Ok(data)
}

/// Read a dataset from any byte stream.
pub fn read_dataset<R: Read>(mut r: R) -> Result<VectorField2D, FieldError> {
    let header = read_header(&mut r)?;
    let data = read_payload(&mut r, &header)?;
    VectorField2D::from_raw(header.spec, data)
}

/// Load a dataset file. The payload length is checked against the header
/// before any payload memory is allocated.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<VectorField2D, FieldError> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let header = read_header(&mut r)?;
    let expected = header.payload_bytes()?;
    let actual = len.saturating_sub(HEADER_LEN as u64);
    if actual != expected {
        return Err(FieldError::SizeMismatch { expected, actual });
    }
    let data = read_payload(&mut r, &header)?;
    VectorField2D::from_raw(header.spec, data)
}

pub fn write_dataset<W: Write>(field: &VectorField2D, mut w: W) -> Result<(), FieldError> {
    w.write_all(&DatasetHeader { spec: *field.spec() }.encode())?;
    for chunk in field.raw().chunks(CHUNK / 4) {
        let bytes: Vec<u8> = chunk.iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(field: &VectorField2D, path: impl AsRef<Path>) -> Result<(), FieldError> {
    write_dataset(field, BufWriter::new(File::create(path)?))
}

impl VectorField2D {
    /// SHA-256 of the field's canonical `VF2D` encoding. For a field loaded
    /// from disk this equals the hash of the file bytes.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DatasetHeader { spec: *self.spec() }.encode());
        let mut bytes = Vec::with_capacity(CHUNK);
        for chunk in self.raw().chunks(CHUNK / 4) {
            bytes.clear();
            bytes.extend(chunk.iter().flat_map(|v| v.to_le_bytes()));
            h.update(&bytes);
        }
        h.finalize().into()
    }
}
