//! Persisted `α`/`β` progressions for re-querying without re-integration.
//!
//! DYNC layout, little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "DYNC"
//! 4       4           u32 version (1)
//! 8       32          SHA-256 fingerprint of the source field
//! 40      8           f64 t0
//! 48      8           f64 tau (signed)
//! 56      8           f64 dt (sample distance)
//! 64      8           f64 rk_tol
//! 72      4           i32 direction (+1 / −1)
//! 76      4           reserved, zero
//! 80      16          f64 seed origin x, y
//! 96      16          f64 seed spacing x, y
//! 112     8           u64 seed nx
//! 120     8           u64 seed ny
//! 128     8           u64 N (samples per pathline)
//! 136     4·M·N       f32 α, seed-major (seed k at [k·N, (k+1)·N))
//! ...     4·M·N       f32 β, same layout
//! ```
//!
//! Invalid samples are stored as `NaN`; a seed's valid count is the index of
//! its first `NaN`.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::advect::{integrate_pathline, AdvectError, IntegrationParams, SeedGrid};
use crate::distribution::{
    auto_bins, fit_ranges, reference_from_members, region_members, BinRanges, BinningPolicy, DistributionError,
    DynHistogram, DynamicsSource, Region, DEFAULT_CLAMP_PERCENTILES,
};
use crate::dynamics::write_progressions;
use crate::exec::Exec;
use crate::field::VectorField2D;
use crate::linalg::Vec2;
use crate::simfield::{divergence_values, DivergenceField, Provenance};

pub const DYNC_MAGIC: [u8; 4] = *b"DYNC";
pub const DYNC_VERSION: u32 = 1;
pub const CACHE_HEADER_LEN: usize = 136;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Advect(#[from] AdvectError),
    #[error("not a DYNC cache file")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u32),
    #[error("cache was built from field {found}, expected {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("truncated cache: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("cache file has {actual} bytes, header implies {expected}")]
    TrailingBytes { expected: u64, actual: u64 },
    #[error("malformed cache header: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheHeader {
    pub fingerprint: [u8; 32],
    pub params: IntegrationParams,
    pub seeds: SeedGrid,
    /// Samples per pathline.
    pub steps: usize,
}

/// Lower-case hex, as used for fingerprints everywhere.
pub fn hex(bytes: &[u8]) -> String {
    hex::encode(bytes)
}

impl CacheHeader {
    pub fn seed_count(&self) -> usize {
        self.seeds.len()
    }

    /// `2·M·N·4`, or `None` on overflow.
    pub fn payload_bytes(&self) -> Option<u64> {
        (self.seeds.nx as u64)
            .checked_mul(self.seeds.ny as u64)?
            .checked_mul(self.steps as u64)?
            .checked_mul(8)
    }

    pub fn fingerprint_hex(&self) -> String {
        hex(&self.fingerprint)
    }

    pub fn encode(&self) -> [u8; CACHE_HEADER_LEN] {
        let mut b = [0u8; CACHE_HEADER_LEN];
        b[0..4].copy_from_slice(&DYNC_MAGIC);
        b[4..8].copy_from_slice(&DYNC_VERSION.to_le_bytes());
        b[8..40].copy_from_slice(&self.fingerprint);
        let p = &self.params;
        for (off, v) in [(40, p.t0), (48, p.tau), (56, p.dt_sample), (64, p.rk_tol)] {
            b[off..off + 8].copy_from_slice(&v.to_le_bytes());
        }
        b[72..76].copy_from_slice(&(p.direction() as i32).to_le_bytes());
        let s = &self.seeds;
        for (off, v) in [(80, s.origin.x), (88, s.origin.y), (96, s.spacing.x), (104, s.spacing.y)] {
            b[off..off + 8].copy_from_slice(&v.to_le_bytes());
        }
        for (off, v) in [(112, s.nx as u64), (120, s.ny as u64), (128, self.steps as u64)] {
            b[off..off + 8].copy_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn decode(b: &[u8; CACHE_HEADER_LEN]) -> Result<Self, StoreError> {
        if b[0..4] != DYNC_MAGIC {
            return Err(StoreError::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != DYNC_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let bad = |m: String| Err(StoreError::Malformed(m));
        let params = IntegrationParams::with_tolerance(f64_at(40), f64_at(48), f64_at(56), f64_at(64))
            .map_err(|e| StoreError::Malformed(e.to_string()))?;
        let direction = u32_at(72) as i32;
        if f64::from(direction) != params.direction() {
            return bad(format!("direction {direction} disagrees with tau {}", params.tau));
        }
        let seeds = SeedGrid {
            origin: Vec2::new(f64_at(80), f64_at(88)),
            spacing: Vec2::new(f64_at(96), f64_at(104)),
            nx: usize::try_from(u64_at(112)).map_err(|e| StoreError::Malformed(e.to_string()))?,
            ny: usize::try_from(u64_at(120)).map_err(|e| StoreError::Malformed(e.to_string()))?,
        };
        if seeds.nx == 0 || seeds.ny == 0 {
            return bad("empty seed grid".into());
        }
        if !(seeds.origin.is_finite() && seeds.spacing.x > 0.0 && seeds.spacing.y > 0.0 && seeds.spacing.is_finite()) {
            return bad("seed origin/spacing must be finite with positive spacing".into());
        }
        let steps = u64_at(128);
        if steps != params.steps() as u64 {
            return bad(format!("N = {steps} but |tau|/dt rounds to {}", params.steps()));
        }
        let header = CacheHeader {
            fingerprint: b[8..40].try_into().expect("32 bytes"),
            params,
            seeds,
            steps: steps as usize,
        };
        if header.payload_bytes().is_none() {
            return bad("payload size overflows".into());
        }
        Ok(header)
    }
}

/// Cached `α`/`β` progressions of every seed, plus the binning ranges fitted
/// to them.
#[derive(Debug, Clone)]
pub struct DynamicsCache {
    pub header: CacheHeader,
    alphas: Vec<f32>,
    betas: Vec<f32>,
    valid: Vec<u32>,
    ranges: Option<BinRanges>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildStats {
    pub wall_time: Duration,
    pub byte_size: u64,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub field: DivergenceField,
    pub reference_time: Duration,
    pub field_time: Duration,
}

fn valid_prefix(row: &[f32]) -> u32 {
    row.iter().position(|v| v.is_nan()).unwrap_or(row.len()) as u32
}

impl DynamicsCache {
    fn assemble(header: CacheHeader, alphas: Vec<f32>, betas: Vec<f32>, exec: Exec) -> Self {
        let n = header.steps;
        let valid = exec.map_range(header.seed_count(), |k| valid_prefix(&alphas[k * n..(k + 1) * n]));
        let mut cache = DynamicsCache {
            header,
            alphas,
            betas,
            valid,
            ranges: None,
        };
        cache.ranges = fit_ranges(&cache, DEFAULT_CLAMP_PERCENTILES, exec).ok();
        cache
    }

    /// `header + 2·M·N·4` bytes, the exact file size.
    pub fn byte_size(&self) -> u64 {
        CACHE_HEADER_LEN as u64 + 8 * self.alphas.len() as u64
    }

    pub fn alpha_payload(&self) -> &[f32] {
        &self.alphas
    }

    pub fn beta_payload(&self) -> &[f32] {
        &self.betas
    }

    pub fn valid_count(&self, k: usize) -> usize {
        self.valid[k] as usize
    }

    /// Percentile-clamped ranges of all stored samples; `None` if no seed has
    /// a valid sample.
    pub fn ranges(&self) -> Option<BinRanges> {
        self.ranges
    }

    /// Shared binning with `n = round(√N)` unless `bins` is given.
    pub fn policy(&self, bins: Option<usize>) -> Result<BinningPolicy, DistributionError> {
        let ranges = self.ranges.ok_or(DistributionError::NoValidSamples)?;
        BinningPolicy::new(bins.unwrap_or_else(|| auto_bins(self.header.steps)), ranges)
    }

    pub fn provenance(&self, region: &Region, policy: &BinningPolicy) -> Provenance {
        Provenance {
            fingerprint: Some(self.header.fingerprint_hex()),
            integration: Some(self.header.params),
            seeds: self.header.seeds,
            region: region.clone(),
            policy: *policy,
        }
    }

    /// Similarity field for `region`. Reads only the stored progressions.
    pub fn query(&self, region: &Region, bins: Option<usize>, exec: Exec) -> Result<QueryResult, DistributionError> {
        let policy = self.policy(bins)?;
        region.validate()?;
        let start = Instant::now();
        let members = region_members(self, region);
        if members.is_empty() {
            return Err(DistributionError::EmptyRegion);
        }
        let reference = reference_from_members(self, &members, &policy)?;
        let reference_time = start.elapsed();
        let start = Instant::now();
        let values = divergence_values(self, &reference, exec);
        let field_time = start.elapsed();
        Ok(QueryResult {
            field: DivergenceField {
                values,
                reference,
                provenance: self.provenance(region, &policy),
            },
            reference_time,
            field_time,
        })
    }

    /// `ξ_p` of seed `k` under `policy`.
    pub fn seed_histogram(&self, k: usize, policy: &BinningPolicy) -> Result<DynHistogram, DistributionError> {
        crate::distribution::histogram_of(self.alphas(k), self.betas(k), policy)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), StoreError> {
        let mut w = BufWriter::with_capacity(1 << 20, w);
        w.write_all(&self.header.encode())?;
        let mut buf = Vec::with_capacity(1 << 20);
        for payload in [&self.alphas, &self.betas] {
            for chunk in payload.chunks(1 << 18) {
                buf.clear();
                buf.extend(chunk.iter().flat_map(|v| v.to_le_bytes()));
                w.write_all(&buf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read a cache of known total length (`None` reads to the end).
    pub fn read_from<R: Read>(mut r: R, total_len: Option<u64>, exec: Exec) -> Result<Self, StoreError> {
        let mut head = [0u8; CACHE_HEADER_LEN];
        read_exact_or_truncated(&mut r, &mut head, CACHE_HEADER_LEN as u64)?;
        let header = CacheHeader::decode(&head)?;
        let payload = header.payload_bytes().expect("checked in decode");
        let expected = CACHE_HEADER_LEN as u64 + payload;
        if let Some(actual) = total_len {
            if actual < expected {
                return Err(StoreError::Truncated { expected, actual });
            }
            if actual > expected {
                return Err(StoreError::TrailingBytes { expected, actual });
            }
        }
        let count = usize::try_from(payload / 8).map_err(|e| StoreError::Malformed(e.to_string()))?;
        let mut read_payload = |consumed: u64| -> Result<Vec<f32>, StoreError> {
            let mut values = Vec::with_capacity(count);
            let mut buf = vec![0u8; 1 << 20];
            let mut left = count * 4;
            while left > 0 {
                let take = left.min(buf.len());
                let got = read_fully(&mut r, &mut buf[..take])?;
                if got < take {
                    return Err(StoreError::Truncated {
                        expected,
                        actual: consumed + (count * 4 - left + got) as u64,
                    });
                }
                values.extend(
                    buf[..take]
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))),
                );
                left -= take;
            }
            Ok(values)
        };
        let alphas = read_payload(CACHE_HEADER_LEN as u64)?;
        let betas = read_payload(CACHE_HEADER_LEN as u64 + 4 * count as u64)?;
        if total_len.is_none() && r.read(&mut [0u8; 1])? != 0 {
            return Err(StoreError::TrailingBytes {
                expected,
                actual: expected + 1,
            });
        }
        Ok(DynamicsCache::assemble(header, alphas, betas, exec))
    }
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], expected: u64) -> Result<(), StoreError> {
    let got = read_fully(r, buf)?;
    if got < buf.len() {
        return Err(StoreError::Truncated {
            expected,
            actual: got as u64,
        });
    }
    Ok(())
}

impl DynamicsSource for DynamicsCache {
    fn seed_count(&self) -> usize {
        self.header.seed_count()
    }

    fn steps(&self) -> usize {
        self.header.steps
    }

    fn seed_position(&self, k: usize) -> Vec2 {
        self.header.seeds.seed(k)
    }

    fn alphas(&self, k: usize) -> &[f32] {
        let n = self.header.steps;
        &self.alphas[k * n..k * n + self.valid[k] as usize]
    }

    fn betas(&self, k: usize) -> &[f32] {
        let n = self.header.steps;
        &self.betas[k * n..k * n + self.valid[k] as usize]
    }
}

/// Advect every seed and record its progressions.
pub fn build_cache(
    field: &VectorField2D,
    params: &IntegrationParams,
    seeds: &SeedGrid,
    exec: Exec,
) -> Result<(DynamicsCache, BuildStats), StoreError> {
    params.check_against(field.spec())?;
    if seeds.is_empty() {
        return Err(StoreError::Advect(AdvectError::InvalidParams("seed grid is empty".into())));
    }
    let start = Instant::now();
    let header = CacheHeader {
        fingerprint: field.fingerprint(),
        params: *params,
        seeds: *seeds,
        steps: params.steps(),
    };
    let len = header
        .payload_bytes()
        .and_then(|b| usize::try_from(b / 8).ok())
        .ok_or_else(|| StoreError::Malformed("payload size overflows".into()))?;
    let mut alphas = vec![f32::NAN; len];
    let mut betas = vec![f32::NAN; len];
    exec.for_each_row_pair(&mut alphas, &mut betas, header.steps, |k, ra, rb| {
        let path = integrate_pathline(field, seeds.seed(k), params);
        write_progressions(field, &path, params, ra, rb);
    });
    let cache = DynamicsCache::assemble(header, alphas, betas, exec);
    let stats = BuildStats {
        wall_time: start.elapsed(),
        byte_size: cache.byte_size(),
    };
    Ok((cache, stats))
}

pub fn save_cache(cache: &DynamicsCache, path: impl AsRef<Path>) -> Result<(), StoreError> {
    cache.write_to(fs::File::create(path)?)
}

/// Load a cache; with `expected_fingerprint`, reject caches of other fields.
pub fn load_cache(
    path: impl AsRef<Path>,
    expected_fingerprint: Option<&[u8; 32]>,
    exec: Exec,
) -> Result<DynamicsCache, StoreError> {
    let file = fs::File::open(path)?;
    let len = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    if let Some(want) = expected_fingerprint {
        // check before reading a possibly large payload
        let mut head = [0u8; CACHE_HEADER_LEN];
        read_exact_or_truncated(&mut reader, &mut head, CACHE_HEADER_LEN as u64)?;
        let header = CacheHeader::decode(&head)?;
        if &header.fingerprint != want {
            return Err(StoreError::FingerprintMismatch {
                expected: hex(want),
                found: header.fingerprint_hex(),
            });
        }
        return DynamicsCache::read_from(io::Cursor::new(head).chain(reader), Some(len), exec);
    }
    DynamicsCache::read_from(reader, Some(len), exec)
}

/// Load a cache and check it was built from `field`.
pub fn load_cache_for(path: impl AsRef<Path>, field: &VectorField2D, exec: Exec) -> Result<DynamicsCache, StoreError> {
    load_cache(path, Some(&field.fingerprint()), exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_analytic, GridSpec};

    fn small() -> (VectorField2D, IntegrationParams, SeedGrid) {
        let spec = GridSpec::from_extent((0.0, 2.0), (0.0, 1.0), 41, 21, (0.0, 2.0), 11).unwrap();
        let field = make_analytic("double_gyre", spec).unwrap();
        let params = IntegrationParams::new(2.0, -1.0, 0.05).unwrap();
        let seeds = SeedGrid::from_grid(&spec, 4).unwrap();
        (field, params, seeds)
    }

    #[test]
    fn footprint_formula() {
        let (field, params, seeds) = small();
        let (cache, stats) = build_cache(&field, &params, &seeds, Exec::Parallel).unwrap();
        let (m, n) = (seeds.len() as u64, params.steps() as u64);
        assert_eq!(n, 20);
        assert_eq!(cache.alpha_payload().len() as u64, m * n);
        assert_eq!(stats.byte_size, CACHE_HEADER_LEN as u64 + 2 * m * n * 4);
        let mut bytes = Vec::new();
        cache.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len() as u64, cache.byte_size());
    }

    #[test]
    fn hundred_by_hundred_arithmetic() {
        let header = CacheHeader {
            fingerprint: [0; 32],
            params: IntegrationParams::new(0.0, 1.0, 0.01).unwrap(),
            seeds: SeedGrid {
                origin: Vec2::ZERO,
                spacing: Vec2::new(1.0, 1.0),
                nx: 100,
                ny: 100,
            },
            steps: 100,
        };
        assert_eq!(header.payload_bytes(), Some(2 * 1_000_000 * 4));
        let big = CacheHeader {
            seeds: SeedGrid { nx: 150, ny: 450, ..header.seeds },
            steps: 2000,
            ..header
        };
        assert_eq!(big.payload_bytes(), Some(1_080_000_000));
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let (field, params, seeds) = small();
        let a = build_cache(&field, &params, &seeds, Exec::Sequential).unwrap().0;
        let b = build_cache(&field, &params, &seeds, Exec::Parallel).unwrap().0;
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.alpha_payload()), bits(b.alpha_payload()));
        assert_eq!(bits(a.beta_payload()), bits(b.beta_payload()));
    }

    #[test]
    fn save_load_save_is_identical() {
        let (field, params, seeds) = small();
        let cache = build_cache(&field, &params, &seeds, Exec::Parallel).unwrap().0;
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.dync"), dir.path().join("b.dync"));
        save_cache(&cache, &p1).unwrap();
        let loaded = load_cache_for(&p1, &field, Exec::Parallel).unwrap();
        assert_eq!(loaded.header, cache.header);
        assert_eq!(loaded.ranges(), cache.ranges());
        save_cache(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn stale_and_damaged_caches_are_rejected() {
        let (field, params, seeds) = small();
        let cache = build_cache(&field, &params, &seeds, Exec::Parallel).unwrap().0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.dync");
        save_cache(&cache, &path).unwrap();
        let other = make_analytic("saddle", *field.spec()).unwrap();
        assert!(matches!(
            load_cache_for(&path, &other, Exec::Parallel),
            Err(StoreError::FingerprintMismatch { .. })
        ));
        let bytes = fs::read(&path).unwrap();
        for cut in [10, CACHE_HEADER_LEN + 3, bytes.len() - 1] {
            let p = dir.path().join(format!("cut{cut}"));
            fs::write(&p, &bytes[..cut]).unwrap();
            assert!(matches!(load_cache(&p, None, Exec::Parallel), Err(StoreError::Truncated { .. })), "{cut}");
            assert!(matches!(
                DynamicsCache::read_from(&bytes[..cut], None, Exec::Sequential),
                Err(StoreError::Truncated { .. })
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            DynamicsCache::read_from(extra.as_slice(), None, Exec::Sequential),
            Err(StoreError::TrailingBytes { .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            DynamicsCache::read_from(bad.as_slice(), None, Exec::Sequential),
            Err(StoreError::UnsupportedVersion(2))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            DynamicsCache::read_from(bad.as_slice(), None, Exec::Sequential),
            Err(StoreError::BadMagic)
        ));
        let mut bad = bytes;
        bad[72..76].copy_from_slice(&1i32.to_le_bytes());
        assert!(matches!(
            DynamicsCache::read_from(bad.as_slice(), None, Exec::Sequential),
            Err(StoreError::Malformed(_))
        ));
    }

    #[test]
    fn query_reads_no_field_samples() {
        let (field, params, seeds) = small();
        let cache = build_cache(&field, &params, &seeds, Exec::Parallel).unwrap().0;
        field.reset_sample_counter();
        let region = Region::circle(0.5, 0.5, 0.2);
        let q = cache.query(&region, None, Exec::Parallel).unwrap();
        assert_eq!(field.samples_taken(), 0);
        assert_eq!(q.field.values.len(), seeds.len());
        assert_eq!(q.field.provenance.fingerprint, Some(hex(&field.fingerprint())));
        assert_eq!(q.field.provenance.policy.n, auto_bins(20));
        // same as the generic pipeline over the same progressions
        let generic = crate::simfield::similarity_field(&cache, &seeds, &region, &q.field.provenance.policy, Exec::Sequential)
            .unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&generic.values), bits(&q.field.values));
        assert!(matches!(
            cache.query(&Region::circle(9.0, 9.0, 0.1), None, Exec::Parallel),
            Err(DistributionError::EmptyRegion)
        ));
    }

    #[test]
    fn params_must_fit_the_field() {
        let (field, _, seeds) = small();
        let late = IntegrationParams::new(1.5, 1.0, 0.05).unwrap();
        assert!(matches!(
            build_cache(&field, &late, &seeds, Exec::Sequential),
            Err(StoreError::Advect(AdvectError::OutsideTimeDomain { .. }))
        ));
    }
}
