//! Data-parallel execution helpers with a sequential fallback.
//!
//! Every helper preserves element order, so callers can reduce the collected
//! results sequentially and get bitwise-identical numbers whether the
//! `parallel` feature is on or off, and independent of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk length used by [`fold_chunks`]. Chunk boundaries must not
/// depend on thread count or results would stop being reproducible.
pub const CHUNK: usize = 256;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`map_range`]; benchmarks compare the two directly.
pub fn map_range_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Splits `indices` into [`CHUNK`]-sized pieces, folds each piece with
/// `fold_chunk`, then merges the per-chunk results strictly in chunk order.
///
/// `fold_chunk` receives the slice of indices belonging to the chunk and
/// must be a pure function of it.
pub fn fold_chunks<A, F, M>(indices: &[usize], fold_chunk: F, mut merge: M, init: A) -> A
where
    A: Send,
    F: Fn(&[usize]) -> A + Sync,
    M: FnMut(A, A) -> A,
{
    let partials: Vec<A>;
    #[cfg(feature = "parallel")]
    {
        partials = indices.par_chunks(CHUNK).map(&fold_chunk).collect();
    }
    #[cfg(not(feature = "parallel"))]
    {
        partials = indices.chunks(CHUNK).map(&fold_chunk).collect();
    }
    partials.into_iter().fold(init, |acc, p| merge(acc, p))
}

/// Sequential twin of [`fold_chunks`] with identical chunking, for benches
/// and the fallback path.
pub fn fold_chunks_seq<A, F, M>(indices: &[usize], fold_chunk: F, mut merge: M, init: A) -> A
where
    F: Fn(&[usize]) -> A,
    M: FnMut(A, A) -> A,
{
    indices
        .chunks(CHUNK)
        .map(fold_chunk)
        .fold(init, |acc, p| merge(acc, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let out = map_range(1000, |i| i * 2);
        assert_eq!(out, (0..1000).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn fold_chunks_matches_sequential_bitwise() {
        // Sums of f64 are order sensitive; identical chunking must give
        // identical bits on both paths.
        let indices: Vec<usize> = (0..10_000).collect();
        let fold = |chunk: &[usize]| chunk.iter().map(|&i| (i as f64).sin()).sum::<f64>();
        let merge = |a: f64, b: f64| a + b;
        let par = fold_chunks(&indices, fold, merge, 0.0);
        let seq = fold_chunks_seq(&indices, fold, merge, 0.0);
        assert_eq!(par.to_bits(), seq.to_bits());
    }
}
