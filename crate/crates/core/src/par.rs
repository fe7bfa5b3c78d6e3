//! Thin execution layer: rayon when the `parallel` feature is on, plain
//! iterators otherwise. Every helper returns results in input order, so
//! output never depends on which backend ran.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..len).map(f).collect()`.
pub(crate) fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// `items.iter().map(f).collect()`.
pub(crate) fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
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

/// Index of the first item (in input order) whose predicate is `Ok(true)`,
/// or the first error if one occurs before any hit.
pub(crate) fn find_first_ok<T, E, F>(items: &[T], pred: F) -> Result<Option<usize>, E>
where
    T: Sync,
    E: Send,
    F: Fn(&T) -> Result<bool, E> + Sync + Send,
{
    let hit = |(i, item): (usize, &T)| match pred(item) {
        Ok(false) => None,
        Ok(true) => Some(Ok(i)),
        Err(e) => Some(Err(e)),
    };
    #[cfg(feature = "parallel")]
    let found = items.par_iter().enumerate().find_map_first(hit);
    #[cfg(not(feature = "parallel"))]
    let found = items.iter().enumerate().find_map(hit);
    found.transpose()
}
