//! Thread control for the convolution kernels.
//!
//! Work is split into fixed contiguous chunks (one per output channel); each
//! chunk is computed with the same internal summation order no matter how many
//! threads run, so results are bit-identical across thread counts. Setting the
//! count to 1 gives the strict single-threaded deterministic mode.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREAD_COUNT: AtomicUsize = AtomicUsize::new(1);

/// Set the worker thread count. 0 selects the machine's available parallelism.
pub fn set_threads(n: usize) {
    THREAD_COUNT.store(n, Ordering::SeqCst);
}

pub fn threads() -> usize {
    match THREAD_COUNT.load(Ordering::SeqCst) {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        n => n,
    }
}

/// Apply `f` to each `chunk_len`-sized piece of `data`, distributing pieces
/// over the configured threads. `data.len()` must be a multiple of `chunk_len`.
/// `f` receives the chunk index and the chunk.
pub fn par_chunks_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk_len > 0 && data.len() % chunk_len == 0);
    let n_chunks = data.len() / chunk_len;
    let workers = threads().min(n_chunks).max(1);
    if workers == 1 {
        for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
            f(i, chunk);
        }
        return;
    }
    std::thread::scope(|scope| {
        let mut rest = data;
        for worker in 0..workers {
            let first = worker * n_chunks / workers;
            let last = (worker + 1) * n_chunks / workers;
            let (head, tail) = rest.split_at_mut((last - first) * chunk_len);
            rest = tail;
            let f = &f;
            scope.spawn(move || {
                for (k, chunk) in head.chunks_mut(chunk_len).enumerate() {
                    f(first + k, chunk);
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_all_chunks_exactly_once() {
        let mut data = vec![0u32; 12];
        par_chunks_mut(&mut data, 3, |i, chunk| {
            for v in chunk.iter_mut() {
                *v += 1 + i as u32;
            }
        });
        assert_eq!(data, vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]);
    }
}
