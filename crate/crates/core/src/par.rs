//! Execution layer for the data-parallel inner loops.
//!
//! Every parallel site in this crate goes through `map_indexed` (or the
//! ndarray helpers below) so that the result is a deterministic function of
//! the inputs alone: work item `i` writes only slot `i`, and all reductions
//! happen afterwards in index order on the collected buffer. Worker count
//! therefore never changes any output bit. The `parallel` feature (default)
//! backs these helpers with rayon; without it they degrade to the plain
//! sequential loops exposed as `map_indexed_seq`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to `0..n` and collects results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential reference implementation of [`map_indexed`]. Always available;
/// the bench suite uses it to compare the two execution lanes.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fallible variant: stops at the first error (any error for the same inputs
/// is the same error, so short-circuit order does not affect the outcome).
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
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

/// Runs `f` once per outer row of a mutable 2-d view, in parallel when
/// enabled. `f` receives the row index and exclusive access to that row.
pub fn for_each_row_mut<F>(arr: &mut ndarray::Array2<f64>, f: F)
where
    F: Fn(usize, ndarray::ArrayViewMut1<'_, f64>) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        ndarray::Zip::indexed(arr.rows_mut()).par_for_each(|i, row| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        ndarray::Zip::indexed(arr.rows_mut()).for_each(|i, row| f(i, row));
    }
}

/// Runs `f` once per path over two 3-d arrays sliced along axis 0
/// (the path axis). Used by the simulators: `f(path, states_row, incs_row)`.
pub fn for_each_path_mut<F>(
    states: &mut ndarray::Array3<f64>,
    increments: &mut ndarray::Array3<f64>,
    f: F,
) where
    F: Fn(usize, ndarray::ArrayViewMut2<'_, f64>, ndarray::ArrayViewMut2<'_, f64>) + Sync + Send,
{
    let zip = ndarray::Zip::indexed(states.axis_iter_mut(ndarray::Axis(0)))
        .and(increments.axis_iter_mut(ndarray::Axis(0)));
    #[cfg(feature = "parallel")]
    {
        zip.par_for_each(|i, s, d| f(i, s, d));
    }
    #[cfg(not(feature = "parallel"))]
    {
        zip.for_each(|i, s, d| f(i, s, d));
    }
}
