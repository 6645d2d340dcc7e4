use jumpgame_core::runner::PathRunner;
use rayon::prelude::*;

/// Spreads paths over the rayon pool. Results come back in index order, so
/// output does not depend on the thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl PathRunner for Parallel {
    fn map_paths<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}
