//! Execution back end for embarrassingly parallel loops.
//!
//! All reductions happen on the caller's side in index order, so the result of
//! [`map_indexed`] is bit-identical whichever back end runs it.

use serde::{Deserialize, Serialize};

/// How independent work items (paths, cells) are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    /// Rayon work stealing. Falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Evaluates `f(0), f(1), ..., f(n-1)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Exec, f: F) -> Vec<T>
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
    fn order_is_preserved() {
        let a = map_indexed(1000, Exec::Parallel, |i| i * i);
        let b = map_indexed(1000, Exec::Sequential, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[999], 999 * 999);
    }
}
