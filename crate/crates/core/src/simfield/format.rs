//! SF2D scalar-field files.
//!
//! ```text
//! offset  size   field
//! 0       4      magic "SF2D"
//! 4       4      u32 version (1)
//! 8       4      u32 nx
//! 12      4      u32 ny
//! 16      4·n    f32 values, row-major (index j·nx + i), NaN = masked
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const SF2D_MAGIC: [u8; 4] = *b"SF2D";
pub const SF2D_VERSION: u32 = 1;
pub const SF2D_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not an SF2D file")]
    BadMagic,
    #[error("unsupported SF2D version {0}")]
    UnsupportedVersion(u32),
    #[error("SF2D payload has {actual} bytes, header needs {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("grid {nx}×{ny} does not match {len} values")]
    Shape { nx: usize, ny: usize, len: usize },
    #[error("provenance: {0}")]
    Provenance(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f32>,
}

pub fn write_scalar_grid<W: Write>(nx: usize, ny: usize, values: &[f32], mut w: W) -> Result<(), FormatError> {
    if values.len() != nx * ny || nx > u32::MAX as usize || ny > u32::MAX as usize {
        return Err(FormatError::Shape {
            nx,
            ny,
            len: values.len(),
        });
    }
    let mut buf = Vec::with_capacity(SF2D_HEADER_LEN + 4 * values.len());
    buf.extend_from_slice(&SF2D_MAGIC);
    buf.extend_from_slice(&SF2D_VERSION.to_le_bytes());
    buf.extend_from_slice(&(nx as u32).to_le_bytes());
    buf.extend_from_slice(&(ny as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_scalar_grid<R: Read>(mut r: R) -> Result<ScalarGrid, FormatError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < SF2D_HEADER_LEN {
        return Err(FormatError::SizeMismatch {
            expected: SF2D_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[..4] != SF2D_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != SF2D_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let (nx, ny) = (word(8) as usize, word(12) as usize);
    let expected = 4 * nx as u64 * ny as u64;
    let actual = (bytes.len() - SF2D_HEADER_LEN) as u64;
    if expected != actual {
        return Err(FormatError::SizeMismatch { expected, actual });
    }
    let values = bytes[SF2D_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(ScalarGrid { nx, ny, values })
}

pub fn load_scalar_grid(path: impl AsRef<Path>) -> Result<ScalarGrid, FormatError> {
    read_scalar_grid(io::BufReader::new(fs::File::open(path)?))
}

/// `<path>.meta.toml`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.toml");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let values = vec![0.0, 1.0, f32::NAN, 0.25, -0.0, 1e-30];
        let mut buf = Vec::new();
        write_scalar_grid(3, 2, &values, &mut buf).unwrap();
        assert_eq!(buf.len(), SF2D_HEADER_LEN + 24);
        let grid = read_scalar_grid(buf.as_slice()).unwrap();
        assert_eq!((grid.nx, grid.ny), (3, 2));
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&grid.values), bits(&values));
    }

    #[test]
    fn malformed_files() {
        let mut buf = Vec::new();
        write_scalar_grid(2, 1, &[1.0, 2.0], &mut buf).unwrap();
        assert!(matches!(
            read_scalar_grid(&buf[..buf.len() - 1]),
            Err(FormatError::SizeMismatch { expected: 8, actual: 7 })
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_scalar_grid(bad.as_slice()), Err(FormatError::BadMagic)));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_scalar_grid(bad.as_slice()), Err(FormatError::UnsupportedVersion(9))));
        assert!(matches!(write_scalar_grid(2, 2, &[1.0], Vec::new()), Err(FormatError::Shape { .. })));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/field.sf2d")), PathBuf::from("out/field.sf2d.meta.toml"));
    }
}
