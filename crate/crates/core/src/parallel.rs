//! Deterministic parallel execution over output voxels.
//!
//! Work is split into contiguous row chunks and each row is produced by a
//! pure function of the inputs, so results are bit-identical for any worker
//! count. The cap is global (the CLI sets it from `DSP_THREADS`); `0` means
//! "use the hardware parallelism".

use core::sync::atomic::{AtomicUsize, Ordering};

static MAX_THREADS: AtomicUsize = AtomicUsize::new(0);

/// Cap the number of worker threads. `0` restores the default
/// (hardware parallelism on std builds, 1 otherwise).
pub fn set_max_threads(n: usize) {
    MAX_THREADS.store(n, Ordering::Relaxed);
}

/// Currently configured cap (`0` = auto).
pub fn max_threads() -> usize {
    MAX_THREADS.load(Ordering::Relaxed)
}

#[cfg(feature = "std")]
fn effective_threads(rows: usize) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = match max_threads() {
        0 => hw,
        n => n.min(hw),
    };
    // Tiny workloads are not worth spawning for.
    if rows < 256 {
        1
    } else {
        cap.max(1)
    }
}

/// Fill `out` (rows × `row_len` values, row-major) by running `worker` on
/// contiguous chunks. `worker(first_row, chunk)` must write every row of its
/// chunk and depend only on the row index and shared inputs.
pub(crate) fn for_row_chunks<F>(out: &mut [f32], row_len: usize, worker: F)
where
    F: Fn(usize, &mut [f32]) + Sync,
{
    if row_len == 0 || out.is_empty() {
        return;
    }
    debug_assert_eq!(out.len() % row_len, 0);

    #[cfg(feature = "std")]
    {
        let rows = out.len() / row_len;
        let threads = effective_threads(rows);
        if threads > 1 {
            let chunk_rows = rows.div_ceil(threads);
            std::thread::scope(|scope| {
                for (i, chunk) in out.chunks_mut(chunk_rows * row_len).enumerate() {
                    let worker = &worker;
                    scope.spawn(move || worker(i * chunk_rows, chunk));
                }
            });
            return;
        }
    }

    worker(0, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_run_matches_sequential() {
        let rows = 1000;
        let row_len = 3;
        let fill = |first: usize, chunk: &mut [f32]| {
            for (r, row) in chunk.chunks_mut(row_len).enumerate() {
                let idx = first + r;
                for (c, v) in row.iter_mut().enumerate() {
                    *v = (idx * row_len + c) as f32;
                }
            }
        };

        let mut seq = vec![0.0f32; rows * row_len];
        set_max_threads(1);
        for_row_chunks(&mut seq, row_len, fill);

        let mut par = vec![0.0f32; rows * row_len];
        set_max_threads(4);
        for_row_chunks(&mut par, row_len, fill);
        set_max_threads(0);

        assert_eq!(seq, par);
    }
}
