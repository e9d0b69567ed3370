//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the batch loops in `analysis`,
//! `metrics` and `pipeline` run on the rayon pool. Without it, or when a
//! caller asks for [`ExecMode::Sequential`], the same closures run in order on
//! the calling thread. Output order is the input order in both modes.

/// How a batch loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// `Parallel` when the crate was built with rayon, otherwise `Sequential`.
    pub fn best() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Fallible [`map`]; returns the first error in input order.
pub fn try_map<T, R, E, F>(mode: ExecMode, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(mode, items, f).into_iter().collect()
}

/// Sum of `f` over `items`. Terms are evaluated in parallel but added in input
/// order, so the result is bit-identical across modes.
pub fn sum<T, F>(mode: ExecMode, items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    map(mode, items, f).into_iter().sum()
}
