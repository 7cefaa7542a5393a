//! Deterministic fan-out over path indices.

use rayon::prelude::*;

/// Evaluates `f(0..n)` on up to `workers` threads and returns the results in
/// index order, so the output never depends on the worker count.
pub fn map_indexed<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        // fall back to sequential evaluation if threads cannot be spawned
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let one = map_indexed(1, 1000, f);
        let four = map_indexed(4, 1000, f);
        assert_eq!(one, four);
    }
}
