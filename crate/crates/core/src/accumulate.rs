//! Deterministic parallel reductions over image rows.
//!
//! Rows are split into a fixed number of bands regardless of the thread
//! count; band partials are combined in band order so floating-point results
//! do not depend on scheduling.

use std::ops::Range;

use rayon::prelude::*;

const BANDS: usize = 32;

/// Runs `body` over contiguous row bands in parallel and returns the partial
/// accumulators in band order.
pub(crate) fn over_row_bands<A, I, B>(height: usize, init: I, body: B) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    B: Fn(Range<usize>, &mut A) + Sync,
{
    let bands = BANDS.min(height.max(1));
    (0..bands)
        .into_par_iter()
        .map(|b| {
            let rows = b * height / bands..(b + 1) * height / bands;
            let mut acc = init();
            body(rows, &mut acc);
            acc
        })
        .collect()
}

/// Element-wise sum of equally sized vectors, in order.
pub(crate) fn sum_vectors(parts: impl IntoIterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut iter = parts.into_iter();
    let mut total = iter.next().unwrap_or_default();
    for part in iter {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_cover_every_row_once() {
        for height in [1, 5, 31, 32, 33, 200] {
            let parts = over_row_bands(height, Vec::new, |rows, acc: &mut Vec<usize>| acc.extend(rows));
            let rows: Vec<usize> = parts.into_iter().flatten().collect();
            assert_eq!(rows, (0..height).collect::<Vec<_>>());
        }
    }
}
