//! Order-fixed summation so family totals do not depend on scheduling.

pub(crate) fn pairwise(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise(&values[..mid]) + pairwise(&values[mid..])
    }
}
