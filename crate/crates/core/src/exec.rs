//! Minimal data-parallel helper for grid scans and Monte Carlo replications.
//!
//! Work items are indexed; each worker thread processes a contiguous chunk
//! and results are reassembled in index order, so the output never depends
//! on the thread count.

/// Number of worker threads to use when the caller does not specify one.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Apply `f` to every index in `0..count`, in parallel, returning results in
/// index order. `f` must be deterministic in the index alone.
pub fn parallel_map<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(count.max(1));
    if threads == 1 || count < 2 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(threads);
    let mut out: Vec<Option<T>> = Vec::with_capacity(count);
    out.resize_with(count, || None);

    // Split the output buffer into per-thread chunks carrying their offsets.
    let mut chunks: Vec<(usize, &mut [Option<T>])> = Vec::new();
    let mut rest = out.as_mut_slice();
    let mut offset = 0;
    while !rest.is_empty() {
        let take = chunk.min(rest.len());
        let (head, tail) = rest.split_at_mut(take);
        chunks.push((offset, head));
        offset += take;
        rest = tail;
    }

    std::thread::scope(|scope| {
        for (start, slot) in chunks {
            let f = &f;
            scope.spawn(move || {
                for (i, cell) in slot.iter_mut().enumerate() {
                    *cell = Some(f(start + i));
                }
            });
        }
    });

    out.into_iter().map(|x| x.expect("worker filled every slot")).collect()
}
