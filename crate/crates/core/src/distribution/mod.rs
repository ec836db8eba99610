//! Dynamics distributions and their divergences.
//!
//! A pathline's distribution `ξ_p` is the concatenation of an `n`-bin
//! histogram of its `α` progression and an `n`-bin histogram of its `β`
//! progression. Each half is normalized to mass ½, so both invariants weigh
//! equally and the whole histogram sums to one. Every histogram that takes
//! part in a comparison uses the same [`BinningPolicy`].

mod percentile;
mod region;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsRecord;
use crate::exec::Exec;
use crate::linalg::Vec2;

pub use percentile::percentiles;
pub use region::{Region, MAX_POLYGON_VERTICES};

pub const DEFAULT_CLAMP_PERCENTILES: (f64, f64) = (0.5, 99.5);

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("no valid dynamics samples")]
    NoValidSamples,
    #[error("region selects no seeds")]
    EmptyRegion,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("histograms use different binning policies")]
    PolicyMismatch,
    #[error("absolute continuity violated at bin {bin}: p > 0 where q = 0")]
    AbsoluteContinuity { bin: usize },
}

/// Read access to per-seed `α`/`β` progressions.
///
/// `alphas(k)` and `betas(k)` return only the valid prefix of seed `k`.
pub trait DynamicsSource: Sync {
    fn seed_count(&self) -> usize;
    /// Samples per complete pathline (`N`).
    fn steps(&self) -> usize;
    fn seed_position(&self, k: usize) -> Vec2;
    fn alphas(&self, k: usize) -> &[f32];
    fn betas(&self, k: usize) -> &[f32];
}

impl DynamicsSource for [DynamicsRecord] {
    fn seed_count(&self) -> usize {
        self.len()
    }

    fn steps(&self) -> usize {
        self.iter().map(DynamicsRecord::steps).max().unwrap_or(0)
    }

    fn seed_position(&self, k: usize) -> Vec2 {
        self[k].seed
    }

    fn alphas(&self, k: usize) -> &[f32] {
        self[k].valid_alphas()
    }

    fn betas(&self, k: usize) -> &[f32] {
        self[k].valid_betas()
    }
}

impl DynamicsSource for Vec<DynamicsRecord> {
    fn seed_count(&self) -> usize {
        self.as_slice().seed_count()
    }

    fn steps(&self) -> usize {
        self.as_slice().steps()
    }

    fn seed_position(&self, k: usize) -> Vec2 {
        self.as_slice().seed_position(k)
    }

    fn alphas(&self, k: usize) -> &[f32] {
        self.as_slice().alphas(k)
    }

    fn betas(&self, k: usize) -> &[f32] {
        self.as_slice().betas(k)
    }
}

/// Shared value ranges of `α` and `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRanges {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub clamp_percentiles: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningPolicy {
    /// Bins per invariant; histograms have `2n` bins.
    pub n: usize,
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub clamp_percentiles: (f64, f64),
}

/// Widen `[lo, hi]` around a constant value `c` by `max(|c|, 1)·1e−9`.
fn widen(lo: f64, hi: f64) -> [f64; 2] {
    if hi > lo {
        return [lo, hi];
    }
    let c = lo;
    let delta = c.abs().max(1.0) * 1e-9;
    [c - delta, c + delta]
}

/// `round(√N)`, at least 2.
pub fn auto_bins(steps: usize) -> usize {
    ((steps as f64).sqrt().round() as usize).max(2)
}

#[inline]
fn bin_index(v: f32, range: [f64; 2], n: usize) -> usize {
    let f = (f64::from(v) - range[0]) / (range[1] - range[0]) * n as f64;
    if f <= 0.0 {
        0
    } else {
        (f as usize).min(n - 1)
    }
}

impl BinningPolicy {
    pub fn new(n: usize, ranges: BinRanges) -> Result<Self, DistributionError> {
        let policy = BinningPolicy {
            n,
            alpha_range: ranges.alpha,
            beta_range: ranges.beta,
            clamp_percentiles: ranges.clamp_percentiles,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if self.n < 2 {
            return Err(DistributionError::InvalidBinning(format!("n must be at least 2, got {}", self.n)));
        }
        for (name, r) in [("alpha", self.alpha_range), ("beta", self.beta_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(DistributionError::InvalidBinning(format!(
                    "{name} range must satisfy lo < hi, got [{}, {}]",
                    r[0], r[1]
                )));
            }
        }
        Ok(())
    }

    pub fn ranges(&self) -> BinRanges {
        BinRanges {
            alpha: self.alpha_range,
            beta: self.beta_range,
            clamp_percentiles: self.clamp_percentiles,
        }
    }

    pub fn total_bins(&self) -> usize {
        2 * self.n
    }

    /// Out-of-range values clamp into the edge bins.
    #[inline]
    pub fn alpha_bin(&self, v: f32) -> usize {
        bin_index(v, self.alpha_range, self.n)
    }

    #[inline]
    pub fn beta_bin(&self, v: f32) -> usize {
        self.n + bin_index(v, self.beta_range, self.n)
    }

    /// Unnormalized `2n` bin counts of one seed.
    pub fn counts(&self, alphas: &[f32], betas: &[f32]) -> Vec<u32> {
        let mut c = vec![0u32; self.total_bins()];
        for &a in alphas {
            c[self.alpha_bin(a)] += 1;
        }
        for &b in betas {
            c[self.beta_bin(b)] += 1;
        }
        c
    }
}

/// Percentile-clamped `α`/`β` ranges over every valid sample of `source`.
pub fn fit_ranges<S: DynamicsSource + ?Sized>(
    source: &S,
    clamp_percentiles: (f64, f64),
    exec: Exec,
) -> Result<BinRanges, DistributionError> {
    let (p_lo, p_hi) = clamp_percentiles;
    if !(0.0..=100.0).contains(&p_lo) || !(0.0..=100.0).contains(&p_hi) || p_lo >= p_hi {
        return Err(DistributionError::InvalidBinning(format!(
            "clamp percentiles must satisfy 0 ≤ lo < hi ≤ 100, got ({p_lo}, {p_hi})"
        )));
    }
    let m = source.seed_count();
    let alphas: Vec<&[f32]> = (0..m).map(|k| source.alphas(k)).collect();
    let betas: Vec<&[f32]> = (0..m).map(|k| source.betas(k)).collect();
    let a = percentiles(&alphas, &[p_lo, p_hi], exec).ok_or(DistributionError::NoValidSamples)?;
    let b = percentiles(&betas, &[p_lo, p_hi], exec).ok_or(DistributionError::NoValidSamples)?;
    Ok(BinRanges {
        alpha: widen(a[0], a[1]),
        beta: widen(b[0], b[1]),
        clamp_percentiles,
    })
}

/// Shared binning for `source`: `n = round(√N)` when `bins` is `None`.
pub fn fit_binning<S: DynamicsSource + ?Sized>(
    source: &S,
    bins: Option<usize>,
    exec: Exec,
) -> Result<BinningPolicy, DistributionError> {
    let ranges = fit_ranges(source, DEFAULT_CLAMP_PERCENTILES, exec)?;
    BinningPolicy::new(bins.unwrap_or_else(|| auto_bins(source.steps())), ranges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynHistogram {
    pub policy: BinningPolicy,
    /// `2n` bins: `α` half then `β` half, each of mass ½.
    pub bins: Vec<f64>,
    /// Samples per invariant that went into the histogram.
    pub sample_count: u64,
}

impl DynHistogram {
    /// Normalize `2n` counts half by half.
    pub fn from_counts(policy: BinningPolicy, counts: &[u64]) -> Result<Self, DistributionError> {
        let n = policy.n;
        let alpha_total: u64 = counts[..n].iter().sum();
        let beta_total: u64 = counts[n..].iter().sum();
        if alpha_total == 0 || beta_total == 0 {
            return Err(DistributionError::NoValidSamples);
        }
        let (wa, wb) = (0.5 / alpha_total as f64, 0.5 / beta_total as f64);
        let bins = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * if i < n { wa } else { wb })
            .collect();
        Ok(DynHistogram {
            policy,
            bins,
            sample_count: alpha_total,
        })
    }

    pub fn alpha_half(&self) -> &[f64] {
        &self.bins[..self.policy.n]
    }

    pub fn beta_half(&self) -> &[f64] {
        &self.bins[self.policy.n..]
    }
}

/// `ξ_p` of one pathline.
pub fn histogram(record: &DynamicsRecord, policy: &BinningPolicy) -> Result<DynHistogram, DistributionError> {
    histogram_of(record.valid_alphas(), record.valid_betas(), policy)
}

pub fn histogram_of(alphas: &[f32], betas: &[f32], policy: &BinningPolicy) -> Result<DynHistogram, DistributionError> {
    let counts: Vec<u64> = policy.counts(alphas, betas).into_iter().map(u64::from).collect();
    DynHistogram::from_counts(*policy, &counts)
}

/// Indices of the seeds of `source` that lie in `region`, ascending.
pub fn region_members<S: DynamicsSource + ?Sized>(source: &S, region: &Region) -> Vec<usize> {
    (0..source.seed_count())
        .filter(|&k| region.contains(source.seed_position(k)))
        .collect()
}

/// `ξ_R`: bin counts of all member pathlines summed, then normalized.
pub fn reference_distribution<S: DynamicsSource + ?Sized>(
    source: &S,
    region: &Region,
    policy: &BinningPolicy,
) -> Result<DynHistogram, DistributionError> {
    region.validate()?;
    let members = region_members(source, region);
    if members.is_empty() {
        return Err(DistributionError::EmptyRegion);
    }
    reference_from_members(source, &members, policy)
}

pub fn reference_from_members<S: DynamicsSource + ?Sized>(
    source: &S,
    members: &[usize],
    policy: &BinningPolicy,
) -> Result<DynHistogram, DistributionError> {
    let mut total = vec![0u64; policy.total_bins()];
    for &k in members {
        for (t, c) in total.iter_mut().zip(policy.counts(source.alphas(k), source.betas(k))) {
            *t += u64::from(c);
        }
    }
    DynHistogram::from_counts(*policy, &total)
}

/// `Σ p(x) ln(p(x)/q(x))` over raw bins; terms with `p(x) = 0` vanish.
pub fn kl_bins(p: &[f64], q: &[f64]) -> Result<f64, DistributionError> {
    assert_eq!(p.len(), q.len(), "bin counts differ");
    let mut sum = 0.0;
    for (bin, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(DistributionError::AbsoluteContinuity { bin });
        }
        sum += a * (a / b).ln();
    }
    Ok(sum)
}

/// `g(d) = (1+d)ln(1+d) + (1−d)ln(1−d)` for `d ∈ [0, 1]`.
#[inline]
fn mixing_term(d: f64) -> f64 {
    if d >= 1.0 {
        2.0 * std::f64::consts::LN_2
    } else if d < 1e-2 {
        // Σ d^{2k} / (k(2k−1))
        let d2 = d * d;
        d2 * (1.0 + d2 * (1.0 / 6.0 + d2 * (1.0 / 15.0 + d2 * (1.0 / 28.0 + d2 * (1.0 / 45.0 + d2 / 66.0)))))
    } else {
        (1.0 + d) * d.ln_1p() + (1.0 - d) * (-d).ln_1p()
    }
}

/// Jensen–Shannon divergence of raw bins, in `[0, ln 2]`.
///
/// Per bin, with `s = p + q` and `d = |p − q| / s`, the two KL terms against
/// the mixture `m = s/2` combine to `(s/4)·g(d)`. This form is symmetric in
/// `p` and `q` bit for bit and is exactly zero only for equal bins.
pub fn jsd_bins(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "bin counts differ");
    let mut sum = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let s = a + b;
        if s > 0.0 {
            let d = (a - b).abs() / s;
            sum += 0.25 * s * mixing_term(d);
        }
    }
    sum.clamp(0.0, std::f64::consts::LN_2)
}

pub fn kl_divergence(p: &DynHistogram, q: &DynHistogram) -> Result<f64, DistributionError> {
    if p.policy != q.policy {
        return Err(DistributionError::PolicyMismatch);
    }
    kl_bins(&p.bins, &q.bins)
}

pub fn jsd(p: &DynHistogram, q: &DynHistogram) -> Result<f64, DistributionError> {
    if p.policy != q.policy {
        return Err(DistributionError::PolicyMismatch);
    }
    Ok(jsd_bins(&p.bins, &q.bins))
}
