//! Data-parallel map over grid indices with a sequential fallback.
//!
//! Every sweep in the crate is "compute one value per index, then reduce".
//! The map may run on rayon; the reduction never does. Results are gathered
//! in index order and summed with a fixed pairwise tree, so the output does
//! not depend on thread count or scheduling.

use serde::{Deserialize, Serialize};

/// How grid sweeps are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `(0..n).map(f)` collected in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
        }
    }

    /// Like [`Execution::map`] for fallible work. The reported error is the
    /// one with the lowest index, independent of scheduling.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

/// Pairwise sum in a fixed tree order.
pub fn ordered_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    ordered_sum(&values[..mid]) + ordered_sum(&values[mid..])
}

/// Arithmetic mean via [`ordered_sum`]; 0 for an empty slice.
pub fn ordered_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        ordered_sum(values) / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_exact_values() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(ordered_sum(&v), 499500.0);
        assert_eq!(ordered_mean(&[]), 0.0);
    }

    #[test]
    fn first_error_wins_regardless_of_execution() {
        let run = |exec: Execution| {
            exec.try_map(100, |i| if i % 17 == 16 { Err(i) } else { Ok(i) })
        };
        assert_eq!(run(Execution::Sequential), Err(16));
        assert_eq!(run(Execution::default()), Err(16));
    }

    #[test]
    fn map_preserves_order() {
        let v = Execution::default().map(257, |i| (i as f64).sqrt());
        let s = Execution::Sequential.map(257, |i| (i as f64).sqrt());
        assert_eq!(v, s);
    }
}
