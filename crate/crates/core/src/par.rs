//! Order-preserving parallel map over indices.

use crate::error::Result;

/// Evaluates `f(0..n)` on up to `threads` scoped threads. Results keep index
/// order; the error of the lowest failing index wins, so the outcome does not
/// depend on scheduling.
pub fn map_indexed<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..threads)
            .map(|t| s.spawn(move || (t..n).step_by(threads).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every index visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn preserves_order_and_first_error() {
        let out = map_indexed(17, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
        let err = map_indexed(10, 3, |i| if i >= 4 { Err(Error::DatasetTooSmall(i)) } else { Ok(i) });
        assert!(matches!(err, Err(Error::DatasetTooSmall(4))));
    }
}
