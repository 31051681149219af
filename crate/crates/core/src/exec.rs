//! Execution policy for the data-parallel loops.
//!
//! With the `parallel` feature (default) the batch loops run on the rayon
//! global pool; without it, or with [`Execution::Sequential`], they run on
//! the calling thread. Both paths produce identical results.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving filter-map over a slice.
pub fn filter_map<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Option<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().filter_map(f).collect();
    }
    let _ = exec;
    items.iter().filter_map(f).collect()
}

/// Folds chunks of `items` into accumulators and merges them.
///
/// `merge` must be commutative and associative for the parallel and
/// sequential paths to agree.
pub fn fold_reduce<T, A, I, F, M>(exec: Execution, items: &[T], init: I, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &T) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        // one accumulator per worker: accumulators may be large (tensors)
        let chunk = items.len().div_ceil(rayon::current_num_threads()).max(4096);
        return items
            .par_chunks(chunk)
            .map(|c| {
                let mut acc = init();
                c.iter().for_each(|x| fold(&mut acc, x));
                acc
            })
            .reduce_with(&merge)
            .unwrap_or_else(init);
    }
    let _ = (exec, &merge);
    let mut acc = init();
    items.iter().for_each(|x| fold(&mut acc, x));
    acc
}
