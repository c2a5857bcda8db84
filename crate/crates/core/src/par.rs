//! Execution policy for the data-parallel loops.
//!
//! Every hot loop in the crate (per-electrode field solves, sensitivity rows,
//! noisy frame generation, matrix-vector products, per-phantom simulation)
//! goes through the helpers here. With the `parallel` feature they dispatch to
//! rayon; without it, or with [`Execution::Sequential`], they run in order on
//! the calling thread. Both paths produce bit-identical results: work items
//! are independent and no floating-point reduction is split across threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Fallible [`map_range`]; returns the first error in index order.
pub fn try_map_range<R, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_range(exec, n, f).into_iter().collect()
}

/// Fills `out` chunk by chunk. `f` receives the offset of the chunk's first
/// element and the chunk itself.
pub fn fill_chunks<T, F>(exec: Execution, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && out.len() > chunk {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(k, c)| f(k * chunk, c));
        return;
    }
    let _ = exec;
    for (k, c) in out.chunks_mut(chunk).enumerate() {
        f(k * chunk, c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let seq = map_range(Execution::Sequential, 100, |i| (i as f64).sqrt());
        let par = map_range(Execution::Parallel, 100, |i| (i as f64).sqrt());
        assert_eq!(seq, par);

        let mut a = vec![0.0; 1000];
        let mut b = vec![0.0; 1000];
        fill_chunks(Execution::Sequential, &mut a, 64, |o, c| {
            c.iter_mut().enumerate().for_each(|(k, x)| *x = (o + k) as f64)
        });
        fill_chunks(Execution::Parallel, &mut b, 64, |o, c| {
            c.iter_mut().enumerate().for_each(|(k, x)| *x = (o + k) as f64)
        });
        assert_eq!(a, b);
        assert_eq!(a[999], 999.0);
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>, usize> =
            try_map_range(Execution::Parallel, 10, |i| if i >= 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}
