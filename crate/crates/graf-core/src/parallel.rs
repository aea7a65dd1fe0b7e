//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) independent tasks — training
//! repeats, grid cells, k-means restarts, kernel rows — run on rayon. Without
//! it everything runs sequentially with identical results: parallelism is only
//! ever applied across independent outputs, never inside a floating-point
//! reduction, so results are bit-identical either way.
//!
//! `GRAF_THREADS` caps the rayon pool size.

#[cfg(feature = "parallel")]
use std::sync::Once;

#[cfg(feature = "parallel")]
static POOL_INIT: Once = Once::new();

#[cfg(feature = "parallel")]
fn ensure_pool() {
    POOL_INIT.call_once(|| {
        if let Ok(v) = std::env::var("GRAF_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // Ignore the error if a global pool already exists.
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}

/// Map over an index range, preserving output order.
#[cfg(feature = "parallel")]
pub fn par_map_indexed<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    ensure_pool();
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map_indexed<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Always-sequential counterpart, kept for benchmark comparison.
pub fn seq_map_indexed<R, F>(count: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..count).map(f).collect()
}

/// Apply `f` to each fixed-size chunk of `out`, in parallel when enabled.
/// Chunk boundaries are fixed by `chunk`, so the result does not depend on
/// scheduling.
#[cfg(feature = "parallel")]
pub fn par_chunks_mut<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    ensure_pool();
    out.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, slab)| f(i * chunk, slab));
}

#[cfg(not(feature = "parallel"))]
pub fn par_chunks_mut<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    for (i, slab) in out.chunks_mut(chunk).enumerate() {
        f(i * chunk, slab);
    }
}
