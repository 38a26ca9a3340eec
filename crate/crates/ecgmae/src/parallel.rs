//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these wrap rayon; without it they
//! degrade to plain iterators, so the same call sites compile both ways.
//!
//! Every parallel loop in the crate partitions its *output* disjointly
//! (per batch item, per channel, per record): no thread ever reduces into a
//! value another thread touches, and each output element is accumulated in
//! the same sequential order either way. Results are therefore bit-identical
//! between the parallel and sequential builds and across thread counts.

#[cfg(feature = "parallel")]
pub(crate) use rayon::prelude::*;

/// Chunked mutable traversal of a slice.
#[cfg(feature = "parallel")]
pub(crate) fn par_chunks_mut<T: Send>(
    data: &mut [T],
    size: usize,
) -> rayon::slice::ChunksMut<'_, T> {
    data.par_chunks_mut(size)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_chunks_mut<T>(data: &mut [T], size: usize) -> std::slice::ChunksMut<'_, T> {
    data.chunks_mut(size)
}

/// Index range, parallel when enabled.
#[cfg(feature = "parallel")]
pub(crate) fn par_range(start: usize, end: usize) -> rayon::range::Iter<usize> {
    (start..end).into_par_iter()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_range(start: usize, end: usize) -> std::ops::Range<usize> {
    start..end
}

/// Order-preserving map over a slice.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
