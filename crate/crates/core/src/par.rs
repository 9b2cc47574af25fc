//! Switch between rayon and plain iteration.
//!
//! Every parallel loop in the crate goes through these helpers so that the
//! sequential build (`--no-default-features`) and the sequential runtime
//! mode share one code path. Results are always collected in index order.

/// Runtime execution mode for the data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// falls back to sequential execution.
    Parallel,
}

impl Execution {
    /// Parallel when the crate was built with rayon, sequential otherwise.
    pub fn best_available() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Fills `out` in chunks of `chunk` elements, calling `f(chunk_index, chunk)`.
pub fn for_each_chunk<T, F>(exec: Execution, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// `(0..n).map(f).collect()`, possibly in parallel, preserving order.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let seq = map_range(Execution::Sequential, 1000, |i| (i as f64).sqrt());
        let par = map_range(Execution::Parallel, 1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);

        let mut a = vec![0usize; 103];
        let mut b = vec![0usize; 103];
        for_each_chunk(Execution::Sequential, &mut a, 10, |i, c| {
            c.iter_mut().enumerate().for_each(|(j, v)| *v = i * 10 + j)
        });
        for_each_chunk(Execution::Parallel, &mut b, 10, |i, c| {
            c.iter_mut().enumerate().for_each(|(j, v)| *v = i * 10 + j)
        });
        assert_eq!(a, b);
        assert_eq!(a, (0..103).collect::<Vec<_>>());
    }
}
