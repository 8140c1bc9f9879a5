use log::warn;

use crate::error::{Error, Result};
use crate::matrix::{AffinityMatrix, NeighborList};

/// The `k` most similar other images of every image, in descending affinity
/// order with ties going to the smaller index. `k >= n` is clamped to `n - 1`.
pub fn knn_neighbors(a: &AffinityMatrix, k: usize) -> Result<NeighborList> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let n = a.size();
    let k_eff = if k >= n {
        warn!("k = {k} is not below n = {n}; clamping to {}", n.saturating_sub(1));
        n.saturating_sub(1)
    } else {
        k
    };
    let values = a.values();
    let mut indices = Vec::with_capacity(n);
    let mut candidates: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i));
        let row = values.row(i);
        let order = |x: &usize, y: &usize| row[*y].total_cmp(&row[*x]).then(x.cmp(y));
        if k_eff < candidates.len() {
            candidates.select_nth_unstable_by(k_eff, order);
            candidates.truncate(k_eff);
        }
        candidates.sort_by(order);
        indices.push(candidates.clone());
    }
    Ok(NeighborList { k: k_eff, indices })
}
