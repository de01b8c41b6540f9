//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they fall back to plain sequential iterators. Results always come back in
//! input order, so callers stay deterministic either way.

/// Sequential map, always available. Used as the baseline in benches.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_seq(items, f)
}

/// Fill `out` in fixed-size chunks, one call of `f(chunk_index, chunk)` per chunk.
#[cfg(feature = "parallel")]
pub fn for_each_chunk<U, F>(out: &mut [U], chunk: usize, f: F)
where
    U: Send,
    F: Fn(usize, &mut [U]) + Sync + Send,
{
    use rayon::prelude::*;
    out.par_chunks_mut(chunk.max(1))
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk<U, F>(out: &mut [U], chunk: usize, f: F)
where
    U: Send,
    F: Fn(usize, &mut [U]) + Sync + Send,
{
    for_each_chunk_seq(out, chunk, f)
}

pub fn for_each_chunk_seq<U, F>(out: &mut [U], chunk: usize, f: F)
where
    F: Fn(usize, &mut [U]),
{
    out.chunks_mut(chunk.max(1))
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        assert_eq!(map(&xs, |x| x * 3), map_seq(&xs, |x| x * 3));
    }

    #[test]
    fn chunks_cover_everything() {
        let mut v = vec![0usize; 103];
        for_each_chunk(&mut v, 10, |i, c| c.iter_mut().for_each(|x| *x = i));
        assert_eq!(v[0], 0);
        assert_eq!(v[102], 10);
    }
}
