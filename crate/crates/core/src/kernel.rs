use ndarray::{Array2, Axis};

use crate::matrix::{AffinityMatrix, BowMatrix};

/// Linear kernel `x_i . x_j` over the rows of `x`.
///
/// With `row_normalize`, rows are scaled to unit Euclidean norm first (zero
/// rows stay zero), which bounds every entry to `[0, 1]`.
pub fn linear_kernel(x: &BowMatrix, row_normalize: bool) -> AffinityMatrix {
    let mut rows = x.values().to_owned();
    if row_normalize {
        l2_normalize_rows(&mut rows);
    }
    let mut gram = rows.dot(&rows.t());
    // mirror the upper triangle so the result is exactly symmetric
    let n = gram.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            gram[[j, i]] = gram[[i, j]];
        }
    }
    gram.mapv_inplace(|v| v.max(0.0));
    AffinityMatrix::new(gram).expect("gram of a nonnegative matrix is a valid affinity")
}

pub(crate) fn l2_normalize_rows(m: &mut Array2<f64>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

/// Histogram intersection `sum_d min(x_d, y_d)`.
pub fn hik_similarity(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "histograms must have equal length");
    x.iter().zip(y).map(|(a, b)| a.min(*b)).sum()
}
