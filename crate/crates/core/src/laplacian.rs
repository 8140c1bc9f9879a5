//! Normalized Laplacians `L = I - D^{-1/2} W D^{-1/2}`.
//!
//! A vertex with zero degree gets `D^{-1/2} = 0`, so its row of `L` is the
//! unit vector and its row of `S = D^{-1/2} W D^{-1/2}` is empty. This keeps
//! `L` positive semi-definite on graphs with isolated vertices.

use ndarray::{Array1, Array2, ArrayView2};

use crate::matrix::{AffinityMatrix, Laplacian, SparseAffinity};

pub(crate) fn inv_sqrt_degrees(degrees: &Array1<f64>) -> Array1<f64> {
    degrees.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
}

/// Normalized Laplacian of a dense symmetric nonnegative weight matrix.
pub fn normalized_laplacian(w: &AffinityMatrix) -> Laplacian {
    laplacian_of(w.values())
}

pub(crate) fn laplacian_of(w: ArrayView2<'_, f64>) -> Laplacian {
    let n = w.nrows();
    let degrees = w.sum_axis(ndarray::Axis(1));
    let dis = inv_sqrt_degrees(&degrees);
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let s = dis[i] * w[[i, j]] * dis[j];
            matrix[[i, j]] = if i == j { 1.0 - s } else { -s };
        }
    }
    Laplacian { matrix, degrees }
}

/// Dense normalized Laplacian of a sparse weight matrix.
pub fn sparse_normalized_laplacian(w: &SparseAffinity) -> Laplacian {
    let n = w.size();
    let s = normalized_adjacency(w);
    let mut matrix = Array2::eye(n);
    for (i, j, v) in s.triplets() {
        matrix[[i, j]] -= v;
    }
    Laplacian { matrix, degrees: w.degrees() }
}

/// `S = D^{-1/2} W D^{-1/2}`, with the zero-degree convention above.
pub fn normalized_adjacency(w: &SparseAffinity) -> SparseAffinity {
    let dis = inv_sqrt_degrees(&w.degrees());
    w.map_entries(|i, j, v| dis[i] * v * dis[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_affinity(rng: &mut ChaCha8Rng, n: usize, density: f64) -> AffinityMatrix {
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                if rng.random_bool(density) {
                    let v = rng.random_range(0.0..2.0);
                    w[[i, j]] = v;
                    w[[j, i]] = v;
                }
            }
        }
        AffinityMatrix::new(w).unwrap()
    }

    #[test]
    fn two_vertex_graph() {
        let w = AffinityMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let l = normalized_laplacian(&w);
        assert_eq!(l.matrix, array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn matches_elementwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_affinity(&mut rng, 6, 0.7);
        let l = normalized_laplacian(&w);
        let d: Vec<f64> = (0..6).map(|i| (0..6).map(|j| w.get(i, j)).sum()).collect();
        for i in 0..6 {
            for j in 0..6 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let expected = if d[i] > 0.0 && d[j] > 0.0 {
                    delta - w.get(i, j) / (d[i] * d[j]).sqrt()
                } else {
                    delta
                };
                assert!((l.matrix[[i, j]] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sqrt_degree_vector_is_in_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let w = random_affinity(&mut rng, 7, 0.5);
            let l = normalized_laplacian(&w);
            let v = l.degrees.mapv(f64::sqrt);
            let lv = l.matrix.dot(&v);
            assert!(lv.iter().all(|x| x.abs() < 1e-12), "{lv}");
        }
    }

    #[test]
    fn isolated_vertex_row_is_unit_vector() {
        let w = AffinityMatrix::new(array![[0.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
            .unwrap();
        let l = normalized_laplacian(&w);
        assert_eq!(l.matrix.row(2).to_vec(), vec![0.0, 0.0, 1.0]);
        let sp = sparse_normalized_laplacian(&SparseAffinity::from_dense(&w));
        assert_eq!(sp.matrix, l.matrix);
    }

    #[test]
    fn psd_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..100 {
            let n = 2 + trial % 9;
            let w = random_affinity(&mut rng, n, 0.5);
            let (vals, _) = symmetric_eigen(normalized_laplacian(&w).matrix.view());
            assert!(vals[0] >= -1e-8, "min eigenvalue {}", vals[0]);
        }
    }

    #[test]
    fn sparse_and_dense_laplacians_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_affinity(&mut rng, 9, 0.3);
        let dense = normalized_laplacian(&w);
        let sparse = sparse_normalized_laplacian(&SparseAffinity::from_dense(&w));
        for (a, b) in dense.matrix.iter().zip(sparse.matrix.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
