//! Execution policy for the data-parallel inner loops.
//!
//! Every reduction is split into fixed-size chunks whose partial results are
//! combined in index order, so the floating-point result does not depend on
//! the policy or on the number of worker threads. Without the `parallel`
//! feature, [`ExecPolicy::Parallel`] runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items folded into one partial accumulator.
pub const CHUNK: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// Whether this policy actually dispatches work to the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Evaluates `f` for every index in `0..n`, returning results in index order.
pub fn map_indices<T, F>(policy: ExecPolicy, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = policy;
    (0..n).map(f).collect()
}

/// Chunked fold/combine over `0..n`.
///
/// `fold` adds item `i` into a chunk-local accumulator; chunk accumulators are
/// merged left to right with `combine`.
pub fn chunked_reduce<A, I, F, C>(policy: ExecPolicy, n: usize, init: I, fold: F, combine: C) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    C: Fn(&mut A, A),
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials = map_indices(policy, n_chunks, |c| {
        let mut acc = init();
        let end = ((c + 1) * CHUNK).min(n);
        for i in c * CHUNK..end {
            fold(&mut acc, i);
        }
        acc
    });
    let mut out = init();
    for p in partials {
        combine(&mut out, p);
    }
    out
}

/// Sum of `f(i)` over `0..n` with a policy-independent summation order.
pub fn sum<F>(policy: ExecPolicy, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    chunked_reduce(policy, n, || 0.0, |acc, i| *acc += f(i), |a, b| *a += b)
}

/// Applies `f(row_index, row)` to every `width`-sized row of `data`.
pub fn for_each_row_mut<F>(policy: ExecPolicy, data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = policy;
    for (i, row) in data.chunks_mut(width).enumerate() {
        f(i, row);
    }
}

/// Like [`for_each_row_mut`], also handing row `i` exclusive access to `states[i]`.
pub fn for_each_row_with_state<S, F>(policy: ExecPolicy, data: &mut [f64], width: usize, states: &mut [S], f: F)
where
    S: Send,
    F: Fn(usize, &mut [f64], &mut S) + Sync + Send,
{
    assert_eq!(data.len(), width * states.len(), "one state per row");
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        data.par_chunks_mut(width)
            .zip(states.par_iter_mut())
            .enumerate()
            .for_each(|(i, (row, st))| f(i, row, st));
        return;
    }
    let _ = policy;
    for (i, (row, st)) in data.chunks_mut(width).zip(states.iter_mut()).enumerate() {
        f(i, row, st);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions_agree_across_policies() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e3 + 1e-7 * i as f64;
        for n in [0, 1, 31, 32, 33, 1000] {
            let a = sum(ExecPolicy::Sequential, n, f);
            let b = sum(ExecPolicy::Parallel, n, f);
            assert_eq!(a.to_bits(), b.to_bits(), "n={n}");
        }
    }

    #[test]
    fn map_keeps_order() {
        let v = map_indices(ExecPolicy::Parallel, 100, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn rows_visited_once() {
        let mut data = vec![0.0; 12];
        for_each_row_mut(ExecPolicy::Parallel, &mut data, 3, |i, row| {
            for x in row.iter_mut() {
                *x += i as f64;
            }
        });
        assert_eq!(data, vec![0., 0., 0., 1., 1., 1., 2., 2., 2., 3., 3., 3.]);
    }
}
