//! Data-parallel map helpers with a deterministic contract.
//!
//! Every helper returns results in input index order, and all callers reduce
//! the returned vectors sequentially. Outputs are therefore bit-identical
//! whether the `parallel` feature is enabled or not, and for any worker
//! count. To force single-threaded execution at runtime, install a rayon
//! pool with one thread around the call.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice, collecting results in index order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let out = map_range(1000, |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, &v)| v == i * 2));
    }

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<f64> = (0..512).map(|i| i as f64).collect();
        let out = map_slice(&items, |x| x + 0.5);
        assert_eq!(out[17], 17.5);
        assert_eq!(out.len(), 512);
    }
}
