//! Bounded, order-restoring parallel map used for external-service calls.

use rayon::prelude::*;

/// Default number of concurrent requests against an external service.
pub const DEFAULT_CONCURRENCY: usize = 4;

/// Apply `f` to every item with at most `workers` calls in flight.
///
/// Output order equals input order regardless of completion order.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    let workers = workers.max(1);
    if workers == 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, item)| f(i, item)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect()
        }),
        Err(_) => items.iter().enumerate().map(|(i, item)| f(i, item)).collect(),
    }
}
