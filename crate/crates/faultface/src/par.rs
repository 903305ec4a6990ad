//! Data-parallel building blocks with a sequential fallback.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without
//! it they run the plain sequential loop. The `*_seq` variants are always
//! available so benches can compare both paths in one build. Outputs are
//! bit-identical either way: items map to disjoint result slots and each
//! slot is computed by the same sequential arithmetic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work below this many items is not worth a rayon dispatch.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 8;

pub fn map_indexed_seq<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> U + Sync) -> Vec<U> {
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed_par<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> U + Sync) -> Vec<U> {
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Order-preserving map over a slice.
pub fn map_indexed<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> U + Sync) -> Vec<U> {
    #[cfg(feature = "parallel")]
    if items.len() >= PAR_THRESHOLD {
        return map_indexed_par(items, f);
    }
    map_indexed_seq(items, f)
}

pub fn chunks_mut_seq<T: Send>(out: &mut [T], chunk: usize, f: impl Fn(usize, &mut [T]) + Sync) {
    for (i, c) in out.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

#[cfg(feature = "parallel")]
pub fn chunks_mut_par<T: Send>(out: &mut [T], chunk: usize, f: impl Fn(usize, &mut [T]) + Sync) {
    out.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Apply `f` to consecutive chunks of `out`; chunk `i` covers
/// `out[i*chunk..(i+1)*chunk]`. Chunks are disjoint, so the parallel and
/// sequential paths write identical bytes.
pub fn chunks_mut<T: Send>(out: &mut [T], chunk: usize, f: impl Fn(usize, &mut [T]) + Sync) {
    #[cfg(feature = "parallel")]
    if out.len() / chunk.max(1) >= PAR_THRESHOLD {
        chunks_mut_par(out, chunk, f);
        return;
    }
    chunks_mut_seq(out, chunk, f);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let out = map_indexed(&items, |i, v| i as u64 * 1000 + v);
        let expect = map_indexed_seq(&items, |i, v| i as u64 * 1000 + v);
        assert_eq!(out, expect);
    }

    #[test]
    fn chunks_cover_everything() {
        let mut out = vec![0usize; 103];
        chunks_mut(&mut out, 10, |i, c| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = i * 10 + j + 1;
            }
        });
        assert!(out.iter().all(|&v| v > 0));
        assert_eq!(out[100], 101);
    }
}
