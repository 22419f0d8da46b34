//! Execution strategy for the batch kernels.
//!
//! With the `parallel` feature (default) work items are spread over the
//! current rayon pool; without it, or with [`Exec::Sequential`], they run in
//! order on the calling thread. Either way results come back in input order,
//! so every reduction downstream sees the same sequence and produces
//! bit-identical output regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// Maps `f` over `items`, returning results in input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
        }
    }
}
