//! Exact percentiles over large `f32` collections without copying them.
//!
//! Values are mapped to order-preserving `u32` keys and located with a
//! two-level radix select (high 16 bits, then low 16 bits). Interpolation
//! between neighbouring order statistics follows numpy's default
//! (`method="linear"`). `NaN`s are skipped.

use crate::exec::Exec;

const BUCKETS: usize = 1 << 16;
// fixed so that the reduction order never depends on the worker count
const GROUPS: usize = 16;

#[inline]
fn key(v: f32) -> u32 {
    let b = v.to_bits();
    if b & 0x8000_0000 != 0 {
        !b
    } else {
        b | 0x8000_0000
    }
}

#[inline]
fn value(k: u32) -> f32 {
    if k & 0x8000_0000 != 0 {
        f32::from_bits(k & 0x7fff_ffff)
    } else {
        f32::from_bits(!k)
    }
}

fn group_range(len: usize, g: usize) -> std::ops::Range<usize> {
    let per = len.div_ceil(GROUPS);
    (g * per).min(len)..((g + 1) * per).min(len)
}

fn sum_counts(parts: Vec<Vec<u64>>) -> Vec<u64> {
    let mut total = vec![0u64; BUCKETS];
    for part in parts {
        for (t, c) in total.iter_mut().zip(part) {
            *t += c;
        }
    }
    total
}

/// `(bucket, rank inside the bucket)` of the order statistic `rank`.
fn locate(counts: &[u64], mut rank: u64) -> (usize, u64) {
    for (b, &c) in counts.iter().enumerate() {
        if rank < c {
            return (b, rank);
        }
        rank -= c;
    }
    unreachable!("rank exceeds population")
}

/// Order statistics (0-based ranks, ascending, each `< population`) of the
/// non-`NaN` values in `chunks`.
fn order_statistics(chunks: &[&[f32]], ranks: &[u64], exec: Exec) -> Vec<f32> {
    let high = sum_counts(exec.map_range(GROUPS, |g| {
        let mut c = vec![0u64; BUCKETS];
        for chunk in &chunks[group_range(chunks.len(), g)] {
            for &v in chunk.iter().filter(|v| !v.is_nan()) {
                c[(key(v) >> 16) as usize] += 1;
            }
        }
        c
    }));
    let located: Vec<(usize, u64)> = ranks.iter().map(|&r| locate(&high, r)).collect();
    let mut buckets: Vec<usize> = located.iter().map(|l| l.0).collect();
    buckets.dedup();
    let low: Vec<Vec<u64>> = {
        let parts = exec.map_range(GROUPS, |g| {
            let mut c = vec![vec![0u64; BUCKETS]; buckets.len()];
            for chunk in &chunks[group_range(chunks.len(), g)] {
                for &v in chunk.iter().filter(|v| !v.is_nan()) {
                    let k = key(v);
                    if let Some(slot) = buckets.iter().position(|&b| b == (k >> 16) as usize) {
                        c[slot][(k & 0xffff) as usize] += 1;
                    }
                }
            }
            c
        });
        (0..buckets.len())
            .map(|slot| sum_counts(parts.iter().map(|p| p[slot].clone()).collect()))
            .collect()
    };
    located
        .iter()
        .map(|&(b, r)| {
            let slot = buckets.iter().position(|&x| x == b).expect("bucket was counted");
            let (lo, _) = locate(&low[slot], r);
            value(((b as u32) << 16) | lo as u32)
        })
        .collect()
}

/// Percentiles `ps` (in `[0, 100]`) of the non-`NaN` values, with linear
/// interpolation between order statistics. `None` if there are no values.
pub fn percentiles(chunks: &[&[f32]], ps: &[f64], exec: Exec) -> Option<Vec<f64>> {
    let count: u64 = chunks
        .iter()
        .map(|c| c.iter().filter(|v| !v.is_nan()).count() as u64)
        .sum();
    if count == 0 {
        return None;
    }
    let positions: Vec<(u64, f64)> = ps
        .iter()
        .map(|&p| {
            let h = (count - 1) as f64 * p.clamp(0.0, 100.0) / 100.0;
            let lo = h.floor();
            (lo as u64, h - lo)
        })
        .collect();
    let mut ranks: Vec<u64> = positions
        .iter()
        .flat_map(|&(lo, _)| [lo, (lo + 1).min(count - 1)])
        .collect();
    ranks.sort_unstable();
    ranks.dedup();
    let stats = order_statistics(chunks, &ranks, exec);
    let at = |r: u64| f64::from(stats[ranks.binary_search(&r).expect("rank requested")]);
    Some(
        positions
            .iter()
            .map(|&(lo, frac)| {
                let a = at(lo);
                let b = at((lo + 1).min(count - 1));
                a + frac * (b - a)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Sort-based oracle with numpy's linear interpolation.
    fn sorted_percentile(values: &[f32], p: f64) -> f64 {
        let mut v: Vec<f64> = values.iter().filter(|v| !v.is_nan()).map(|&v| f64::from(v)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (v.len() - 1) as f64 * p / 100.0;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(v.len() - 1);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    }

    #[test]
    fn keys_preserve_order() {
        let vals = [f32::NEG_INFINITY, -3.5, -1e-30, -0.0, 0.0, 1e-30, 2.0, f32::INFINITY];
        for w in vals.windows(2) {
            assert!(key(w[0]) < key(w[1]), "{} {}", w[0], w[1]);
        }
        for v in vals {
            assert_eq!(value(key(v)).to_bits(), v.to_bits());
        }
    }

    #[test]
    fn median_of_small_set() {
        let data = [3.0f32, 1.0, 2.0, f32::NAN, 4.0];
        let p = percentiles(&[&data], &[0.0, 50.0, 100.0], Exec::Sequential).unwrap();
        assert_eq!(p, vec![1.0, 2.5, 4.0]);
    }

    #[test]
    fn outlier_is_excluded() {
        let mut data: Vec<f32> = (0..1000).map(|i| i as f32 / 1000.0).collect();
        data.push(1e9);
        let p = percentiles(&[&data], &[0.5, 99.5], Exec::Sequential).unwrap();
        assert!(p[1] < 1.0, "{p:?}");
        assert_eq!(p[1], sorted_percentile(&data, 99.5));
    }

    #[test]
    fn all_nan_is_none() {
        assert!(percentiles(&[&[f32::NAN]], &[50.0], Exec::Sequential).is_none());
        assert!(percentiles(&[], &[50.0], Exec::Sequential).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn matches_sorted_oracle(
            chunks in prop::collection::vec(prop::collection::vec(prop_oneof![
                -1e3f32..1e3,
                Just(0.0f32),
                Just(f32::NAN),
                (-3i32..3).prop_map(|v| v as f32),
            ], 0..40), 1..20),
            p in 0.0f64..100.0,
        ) {
            let flat: Vec<f32> = chunks.iter().flatten().copied().collect();
            prop_assume!(flat.iter().any(|v| !v.is_nan()));
            let views: Vec<&[f32]> = chunks.iter().map(|c| c.as_slice()).collect();
            for exec in [Exec::Sequential, Exec::Parallel] {
                let got = percentiles(&views, &[p, 0.5, 99.5], exec).unwrap();
                prop_assert_eq!(got[0], sorted_percentile(&flat, p));
                prop_assert_eq!(got[1], sorted_percentile(&flat, 0.5));
                prop_assert_eq!(got[2], sorted_percentile(&flat, 99.5));
            }
        }
    }
}
