//! Order-independent reductions.

/// Sum of `values` after sorting, so the result depends only on the multiset
/// of values and not on the order they were produced in.
pub(crate) fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}
