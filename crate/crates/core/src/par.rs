//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run on
//! the calling thread. Output order always follows input order, so callers get
//! identical results in either mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent work items should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Use the rayon thread pool when compiled with `parallel`, otherwise
    /// behaves like [`ExecMode::Sequential`].
    #[default]
    Parallel,
    Sequential,
}

impl ExecMode {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        ExecMode::Parallel => items.par_iter().map(f).collect(),
        ExecMode::Sequential => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, R, F>(items: &[T], _mode: ExecMode, f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Index of the maximum of `score` over `items`; ties go to the lowest index.
///
/// Returns `None` for an empty slice or when every score is `None`.
pub fn argmax_by_key<T, F>(items: &[T], mode: ExecMode, score: F) -> Option<(usize, usize)>
where
    T: Sync,
    F: Fn(&T) -> Option<usize> + Sync + Send,
{
    let scores = map_slice(items, mode, score);
    let mut best: Option<(usize, usize)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if let Some(s) = s {
            match best {
                Some((_, b)) if b >= s => {}
                _ => best = Some((i, s)),
            }
        }
    }
    best
}
