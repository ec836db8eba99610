//! Execution policy for the per-seed loops.
//!
//! All heavy work in this crate is a map over independent seeds. With the
//! `parallel` feature the map runs on rayon; without it (or with
//! [`Exec::Sequential`]) it is a plain iterator. Output order is the input
//! order in both cases, so results never depend on the worker count.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon's current pool (the global pool unless called inside
    /// [`with_workers`]). Falls back to sequential without the `parallel`
    /// feature.
    #[default]
    Parallel,
}

impl Exec {
    /// Map `f` over `0..len`, preserving order.
    pub fn map_range<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..len).map(f).collect(),
            Exec::Parallel => par_map_range(len, f),
        }
    }

    /// Map `f` over a slice, preserving order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        self.map_range(items.len(), |i| f(&items[i]))
    }

    /// Split `a` and `b` into rows of `row_len` and call `f(k, row_a, row_b)`
    /// for every row index `k`.
    pub fn for_each_row_pair<T, F>(self, a: &mut [T], b: &mut [T], row_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T], &mut [T]) + Sync + Send,
    {
        assert_eq!(a.len(), b.len(), "row buffers differ in length");
        if row_len == 0 {
            return;
        }
        match self {
            Exec::Sequential => a
                .chunks_mut(row_len)
                .zip(b.chunks_mut(row_len))
                .enumerate()
                .for_each(|(k, (ra, rb))| f(k, ra, rb)),
            Exec::Parallel => par_row_pairs(a, b, row_len, f),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

#[cfg(feature = "parallel")]
fn par_map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_row_pairs<T, F>(a: &mut [T], b: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T], &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    a.par_chunks_mut(row_len)
        .zip(b.par_chunks_mut(row_len))
        .enumerate()
        .for_each(|(k, (ra, rb))| f(k, ra, rb));
}

#[cfg(not(feature = "parallel"))]
fn par_row_pairs<T, F>(a: &mut [T], b: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T], &mut [T]) + Sync + Send,
{
    Exec::Sequential.for_each_row_pair(a, b, row_len, f)
}

/// Run `op` on a dedicated pool with `workers` threads.
///
/// Without the `parallel` feature this just calls `op`.
#[cfg(feature = "parallel")]
pub fn with_workers<R, OP>(workers: usize, op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("failed to build worker pool")
        .install(op)
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R, OP>(_workers: usize, op: OP) -> R
where
    R: Send,
    OP: FnOnce() -> R + Send,
{
    op()
}

/// Number of workers the parallel policy would use right now.
pub fn current_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
