//! Task-parallel map with a sequential fallback.
//!
//! Work is split into fixed tasks indexed `0..n`; each task derives its own
//! random stream from its index, results come back in index order and are
//! folded sequentially by the caller. The numbers therefore never depend on
//! the pool width.

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_tasks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_tasks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_tasks_sequential(n, f)
}

/// Always-sequential reference version of [`map_tasks`].
pub fn map_tasks_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Runs `op` with at most `width` worker threads (0 = library default).
#[cfg(feature = "parallel")]
pub fn with_width<R: Send>(width: usize, op: impl FnOnce() -> R + Send) -> R {
    if width == 0 {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(width).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_width<R: Send>(_width: usize, op: impl FnOnce() -> R + Send) -> R {
    op()
}

/// Splits `total` items into tasks of at most `chunk`; yields `(start, len)`.
pub fn chunks(total: u64, chunk: u64) -> Vec<(u64, u64)> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(total.div_ceil(chunk) as usize);
    let mut start = 0;
    while start < total {
        let len = chunk.min(total - start);
        out.push((start, len));
        start += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_exactly() {
        let c = chunks(10, 4);
        assert_eq!(c, vec![(0, 4), (4, 4), (8, 2)]);
        assert!(chunks(0, 3).is_empty());
    }

    #[test]
    fn width_does_not_change_order() {
        let a = with_width(1, || map_tasks(100, |i| i * i));
        let b = with_width(4, || map_tasks(100, |i| i * i));
        assert_eq!(a, b);
        assert_eq!(a, map_tasks_sequential(100, |i| i * i));
    }
}
