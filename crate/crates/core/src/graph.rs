//! Image-graph construction: k-nearest-neighbor graph, sparse representation
//! (SR) L1-graph and structured sparse representation (SSR) L1-graph.
//!
//! Both L1-graphs reconstruct each image from its `k` textual neighbors in
//! kernel form, `y_i = C_i alpha_i + zeta_i`, where `y_i` holds the affinities
//! between image `i` and its neighbors and `C_i` the affinities among the
//! neighbors. SSR adds the rows `0 = C~_i alpha_i + xi_i`, where
//! `C~_i^T C~_i` is the normalized Laplacian of the neighbors' visual
//! histograms, so that `||C~_i alpha_i||_1` penalizes coefficients that are
//! not smooth over the visual neighborhood.
//!
//! Edge weights are `w_ij = |alpha_i(j')|` for the `j'`-th neighbor `j`,
//! followed by `W <- (W + W^T) / 2`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::l2_normalize_rows;
use crate::l1solve::{basis_pursuit, SolverConfig};
use crate::laplacian::laplacian_of;
use crate::linalg::symmetric_eigen;
use crate::matrix::{AffinityMatrix, BowMatrix, Laplacian, NeighborList, SparseAffinity};
use crate::neighbors::knn_neighbors;

/// Eigenvalues of a neighborhood Laplacian above this are kept; anything in
/// `[-EIGEN_CLAMP, 0)` is numerical noise and set to zero.
pub const EIGEN_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphVariant {
    Knn,
    Sr,
    Ssr,
}

impl FromStr for GraphVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(GraphVariant::Knn),
            "sr" => Ok(GraphVariant::Sr),
            "ssr" => Ok(GraphVariant::Ssr),
            other => Err(Error::param(format!("unknown graph variant {other:?} (knn|sr|ssr)"))),
        }
    }
}

impl fmt::Display for GraphVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphVariant::Knn => "knn",
            GraphVariant::Sr => "sr",
            GraphVariant::Ssr => "ssr",
        })
    }
}

/// Per-image kernelized reconstruction problem and its solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalProblem {
    pub image_index: usize,
    /// `N_k(i)` in descending-affinity order.
    pub neighbors: Vec<usize>,
    pub y: Array1<f64>,
    pub c: Array2<f64>,
    /// Present for the structured variant only.
    pub c_tilde: Option<Array2<f64>>,
    pub alpha: Array1<f64>,
    pub zeta: Array1<f64>,
    /// Present for the structured variant only.
    pub xi: Option<Array1<f64>>,
    pub converged: bool,
}

impl LocalProblem {
    pub fn new(a: &AffinityMatrix, i: usize, neighbors: &[usize]) -> Self {
        let k = neighbors.len();
        let y = Array1::from_iter(neighbors.iter().map(|&j| a.get(j, i)));
        let c = Array2::from_shape_fn((k, k), |(p, q)| a.get(neighbors[p], neighbors[q]));
        LocalProblem {
            image_index: i,
            neighbors: neighbors.to_vec(),
            y,
            c,
            c_tilde: None,
            alpha: Array1::zeros(k),
            zeta: Array1::zeros(k),
            xi: None,
            converged: false,
        }
    }

    pub fn with_regularizer(mut self, c_tilde: Array2<f64>) -> Self {
        self.c_tilde = Some(c_tilde);
        self
    }

    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    /// The constraint matrix `[C, I]` or `[[C, I, 0], [C~, 0, I]]` and its
    /// right-hand side.
    pub fn system(&self) -> (Array2<f64>, Array1<f64>) {
        let k = self.k();
        match &self.c_tilde {
            None => {
                let mut m = Array2::zeros((k, 2 * k));
                m.slice_mut(s![.., ..k]).assign(&self.c);
                m.slice_mut(s![.., k..]).assign(&Array2::eye(k));
                (m, self.y.clone())
            }
            Some(ct) => {
                let mut m = Array2::zeros((2 * k, 3 * k));
                m.slice_mut(s![..k, ..k]).assign(&self.c);
                m.slice_mut(s![..k, k..2 * k]).assign(&Array2::eye(k));
                m.slice_mut(s![k.., ..k]).assign(ct);
                m.slice_mut(s![k.., 2 * k..]).assign(&Array2::eye(k));
                let mut rhs = Array1::zeros(2 * k);
                rhs.slice_mut(s![..k]).assign(&self.y);
                (m, rhs)
            }
        }
    }

    pub fn solve(&mut self, cfg: &SolverConfig) -> Result<()> {
        let k = self.k();
        if k == 0 {
            self.converged = true;
            return Ok(());
        }
        let (m, rhs) = self.system();
        let sol = basis_pursuit(m.view(), rhs.view(), cfg)?;
        let z = Array1::from(sol.z);
        self.alpha = z.slice(s![..k]).to_owned();
        self.zeta = z.slice(s![k..2 * k]).to_owned();
        if self.c_tilde.is_some() {
            self.xi = Some(z.slice(s![2 * k..]).to_owned());
        }
        self.converged = sol.converged;
        Ok(())
    }

    /// `(i, j, |alpha(j')|)` for every neighbor with a nonzero coefficient.
    pub fn weight_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors
            .iter()
            .zip(self.alpha.iter())
            .filter(|(_, a)| **a != 0.0)
            .map(move |(&j, a)| (self.image_index, j, a.abs()))
    }
}

/// Eigendecomposition `L = V Sigma V^T` and the factor `C~ = Sigma^{1/2} V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenFactor {
    /// Orthonormal eigenvectors as columns.
    pub vectors: Array2<f64>,
    /// Ascending, clamped at zero.
    pub values: Vec<f64>,
    pub c_tilde: Array2<f64>,
}

/// Keeps `A[i][j]` for the `k` nearest neighbors `j` of `i`, then symmetrizes.
pub fn build_knn_graph(a: &AffinityMatrix, k: usize) -> Result<SparseAffinity> {
    let nb = knn_neighbors(a, k)?;
    let triplets: Vec<_> = (0..a.size())
        .flat_map(|i| nb.of(i).iter().map(move |&j| (i, j, a.get(i, j))))
        .collect();
    SparseAffinity::symmetrize_triplets(a.size(), &triplets)
}

/// L1-graph from sparse reconstruction in each `k`-neighborhood.
pub fn sparse_repr_graph(a: &AffinityMatrix, k: usize, cfg: &SolverConfig) -> Result<SparseAffinity> {
    Ok(l1_graph(a, None, k, cfg)?.weights)
}

/// L1-graph from structured sparse reconstruction with the L1 Laplacian
/// penalty built from the visual histograms `y`.
pub fn structured_sparse_graph(
    a: &AffinityMatrix,
    y: &BowMatrix,
    k: usize,
    cfg: &SolverConfig,
) -> Result<SparseAffinity> {
    Ok(l1_graph(a, Some(y), k, cfg)?.weights)
}

/// `L_i = I - D_i^{-1/2} Y_i Y_i^T D_i^{-1/2}` over the selected rows.
pub fn neighborhood_laplacian(y: &BowMatrix, neighbors: &[usize]) -> Laplacian {
    let rows = y.values().select(ndarray::Axis(0), neighbors);
    let gram = rows.dot(&rows.t());
    laplacian_of(gram.view())
}

pub fn laplacian_sqrt_factor(l: &Laplacian) -> EigenFactor {
    let (mut values, vectors) = symmetric_eigen(l.matrix.view());
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -EIGEN_CLAMP {
                warn!("neighborhood Laplacian eigenvalue {v} below clamp threshold");
            }
            *v = 0.0;
        }
    }
    let k = values.len();
    let c_tilde = Array2::from_shape_fn((k, k), |(r, c)| values[r].sqrt() * vectors[[c, r]]);
    EigenFactor { vectors, values, c_tilde }
}

/// Graph construction settings shared by every variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub variant: GraphVariant,
    pub k: usize,
    /// L2-normalize visual rows before the neighborhood Laplacians (SSR only).
    pub normalize_visual_rows: bool,
    pub solver: SolverConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            variant: GraphVariant::Ssr,
            k: 20,
            normalize_visual_rows: false,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphOutcome {
    pub weights: SparseAffinity,
    /// Images whose local solve hit the iteration cap.
    pub unconverged: Vec<usize>,
}

/// Builds the image graph selected by `cfg.variant`.
pub fn build_graph(a: &AffinityMatrix, y: &BowMatrix, cfg: &GraphConfig) -> Result<GraphOutcome> {
    if y.rows() != a.size() {
        return Err(Error::dims(format!(
            "visual BOW has {} rows but the affinity is {}x{}",
            y.rows(),
            a.size(),
            a.size()
        )));
    }
    match cfg.variant {
        GraphVariant::Knn => Ok(GraphOutcome { weights: build_knn_graph(a, cfg.k)?, unconverged: vec![] }),
        GraphVariant::Sr => l1_graph(a, None, cfg.k, &cfg.solver),
        GraphVariant::Ssr => {
            if cfg.normalize_visual_rows {
                let mut v = y.values().to_owned();
                l2_normalize_rows(&mut v);
                l1_graph(a, Some(&BowMatrix::new(v)?), cfg.k, &cfg.solver)
            } else {
                l1_graph(a, Some(y), cfg.k, &cfg.solver)
            }
        }
    }
}

/// Assembles the per-image problem for image `i`.
pub fn local_problem(
    a: &AffinityMatrix,
    y: Option<&BowMatrix>,
    neighbors: &NeighborList,
    i: usize,
) -> LocalProblem {
    let nb = neighbors.of(i);
    let problem = LocalProblem::new(a, i, nb);
    match y {
        Some(y) => {
            let factor = laplacian_sqrt_factor(&neighborhood_laplacian(y, nb));
            problem.with_regularizer(factor.c_tilde)
        }
        None => problem,
    }
}

fn l1_graph(
    a: &AffinityMatrix,
    y: Option<&BowMatrix>,
    k: usize,
    cfg: &SolverConfig,
) -> Result<GraphOutcome> {
    let n = a.size();
    if let Some(y) = y {
        if y.rows() != n {
            return Err(Error::dims(format!("visual BOW has {} rows, affinity {n}", y.rows())));
        }
    }
    if k >= n {
        return Err(Error::param(format!("k = {k} must be below the number of images {n}")));
    }
    let nb = knn_neighbors(a, k)?;
    let mut triplets = Vec::with_capacity(n * k);
    let mut unconverged = Vec::new();
    for i in 0..n {
        let mut problem = local_problem(a, y, &nb, i);
        problem.solve(cfg)?;
        if !problem.converged {
            warn!("local L1 problem of image {i} did not converge; using best iterate");
            unconverged.push(i);
        }
        triplets.extend(problem.weight_triplets());
    }
    Ok(GraphOutcome { weights: SparseAffinity::symmetrize_triplets(n, &triplets)?, unconverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bow(rng: &mut ChaCha8Rng, n: usize, d: usize) -> BowMatrix {
        BowMatrix::new(Array2::from_shape_fn((n, d), |_| {
            if rng.random_bool(0.5) { rng.random_range(0.0..4.0) } else { 0.0 }
        }))
        .unwrap()
    }

    #[test]
    fn knn_all_ones_keeps_everything_off_diagonal() {
        let a = AffinityMatrix::new(Array2::ones((3, 3))).unwrap();
        let w = build_knn_graph(&a, 2).unwrap().to_dense();
        let expect = Array2::<f64>::ones((3, 3)) - Array2::<f64>::eye(3);
        assert_eq!(w.values(), expect.view());
    }

    #[test]
    fn knn_diagonal_affinity_gives_empty_graph() {
        let a = AffinityMatrix::new(Array2::eye(4) * 3.0).unwrap();
        assert_eq!(build_knn_graph(&a, 2).unwrap().nnz(), 0);
    }

    #[test]
    fn knn_matches_mask_and_symmetrize_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = random_bow(&mut rng, 10, 6);
        let a = crate::kernel::linear_kernel(&t, true);
        let w = build_knn_graph(&a, 3).unwrap();
        let av = a.values();
        let mut mask = Array2::<f64>::zeros((10, 10));
        for i in 0..10 {
            let mut order: Vec<usize> = (0..10).filter(|&j| j != i).collect();
            order.sort_by(|&x, &y| av[[i, y]].partial_cmp(&av[[i, x]]).unwrap().then(x.cmp(&y)));
            for &j in order.iter().take(3) {
                mask[[i, j]] = av[[i, j]];
            }
        }
        let expect = (&mask + &mask.t()) / 2.0;
        let got = w.to_dense();
        for (x, y) in got.values().iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_target_gives_zero_row() {
        // image 0 shares no tags with anyone
        let t = BowMatrix::new(array![
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0]
        ])
        .unwrap();
        let a = crate::kernel::linear_kernel(&t, true);
        let nb = knn_neighbors(&a, 2).unwrap();
        let mut p = local_problem(&a, None, &nb, 0);
        p.solve(&SolverConfig::default()).unwrap();
        assert!(p.alpha.iter().all(|&v| v == 0.0));
        let w = sparse_repr_graph(&a, 2, &SolverConfig::default()).unwrap();
        // row 0 can only receive weight symmetrized from others, which is
        // also zero since a(0, j) = 0 contributes nothing to their targets
        assert_eq!(w.row(0).0.len(), 0);
    }

    #[test]
    fn one_neighbor_prefers_cheaper_variable() {
        // min |alpha| + |zeta| s.t. a alpha + zeta = b with a > 1
        let (a_coef, b) = (2.5, 0.8);
        let aff = AffinityMatrix::new(array![[a_coef, b], [b, a_coef]]).unwrap();
        let nb = knn_neighbors(&aff, 1).unwrap();
        let mut p = local_problem(&aff, None, &nb, 0);
        p.solve(&SolverConfig::default()).unwrap();
        assert!((p.alpha[0] - b / a_coef).abs() < 1e-10);
        assert!(p.zeta[0].abs() < 1e-10);
        let w = sparse_repr_graph(&aff, 1, &SolverConfig::default()).unwrap();
        assert!((w.get(0, 1) - b / a_coef).abs() < 1e-10);
    }

    #[test]
    fn neighborhood_laplacian_examples() {
        let y = BowMatrix::new(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0], [0.0, 5.0]]).unwrap();
        let l = neighborhood_laplacian(&y, &[0, 1, 2]);
        let expect = Array2::<f64>::eye(3) - Array2::<f64>::ones((3, 3)) / 3.0;
        for (x, e) in l.matrix.iter().zip(expect.iter()) {
            assert!((x - e).abs() < 1e-14);
        }
        let single = neighborhood_laplacian(&y, &[3]);
        assert!(single.matrix[[0, 0]].abs() < 1e-15);
    }

    #[test]
    fn neighborhood_laplacian_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = random_bow(&mut rng, 9, 5);
        let nb = [7, 2, 4, 0];
        let l = neighborhood_laplacian(&y, &nb);
        let yv = y.values();
        let g = |p: usize, q: usize| (0..5).map(|d| yv[[nb[p], d]] * yv[[nb[q], d]]).sum::<f64>();
        let deg: Vec<f64> = (0..4).map(|p| (0..4).map(|q| g(p, q)).sum()).collect();
        for p in 0..4 {
            for q in 0..4 {
                let delta = if p == q { 1.0 } else { 0.0 };
                let e = delta - g(p, q) / (deg[p] * deg[q]).sqrt();
                assert!((l.matrix[[p, q]] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sqrt_factor_examples() {
        let zero = Laplacian { matrix: Array2::zeros((3, 3)), degrees: Array1::zeros(3) };
        let f = laplacian_sqrt_factor(&zero);
        assert!(f.c_tilde.iter().all(|v| v.abs() < 1e-15));

        let eye = Laplacian { matrix: Array2::eye(4), degrees: Array1::ones(4) };
        let f = laplacian_sqrt_factor(&eye);
        let ctc = f.c_tilde.t().dot(&f.c_tilde);
        let cct = f.c_tilde.dot(&f.c_tilde.t());
        for ((x, y), e) in ctc.iter().zip(cct.iter()).zip(Array2::<f64>::eye(4).iter()) {
            assert!((x - e).abs() < 1e-12 && (y - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_factor_quadratic_form_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let y = random_bow(&mut rng, 6, 7);
        let l = neighborhood_laplacian(&y, &[0, 1, 2, 3, 4]);
        let f = laplacian_sqrt_factor(&l);
        let orth = f.vectors.dot(&f.vectors.t()) - Array2::<f64>::eye(5);
        assert!(orth.iter().all(|v| v.abs() <= 1e-8));
        let rec = f.c_tilde.t().dot(&f.c_tilde);
        for (x, e) in rec.iter().zip(l.matrix.iter()) {
            assert!((x - e).abs() <= 1e-8);
        }
        for _ in 0..100 {
            let alpha = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
            let quad = l.quadratic_form(alpha.view());
            let ca = f.c_tilde.dot(&alpha);
            assert!((quad - ca.dot(&ca)).abs() <= 1e-8);
        }
    }

    #[test]
    fn ssr_with_zero_regularizer_equals_sr() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = random_bow(&mut rng, 8, 5);
        let a = crate::kernel::linear_kernel(&t, true);
        let nb = knn_neighbors(&a, 3).unwrap();
        let cfg = SolverConfig::default();
        for i in 0..8 {
            let mut sr = local_problem(&a, None, &nb, i);
            sr.solve(&cfg).unwrap();
            let mut ssr = LocalProblem::new(&a, i, nb.of(i)).with_regularizer(Array2::zeros((3, 3)));
            ssr.solve(&cfg).unwrap();
            for (x, y) in sr.alpha.iter().zip(ssr.alpha.iter()) {
                assert!((x - y).abs() < 1e-9, "image {i}: {} vs {}", sr.alpha, ssr.alpha);
            }
        }
    }

    #[test]
    fn all_variants_are_symmetric_sparse_and_loop_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = random_bow(&mut rng, 15, 6);
        let y = random_bow(&mut rng, 15, 9);
        let a = crate::kernel::linear_kernel(&t, true);
        for variant in [GraphVariant::Knn, GraphVariant::Sr, GraphVariant::Ssr] {
            let cfg = GraphConfig { variant, k: 4, ..Default::default() };
            let w = build_graph(&a, &y, &cfg).unwrap().weights;
            assert!(w.max_row_nnz() <= 8);
            for i in 0..15 {
                assert_eq!(w.get(i, i), 0.0);
                for j in 0..15 {
                    assert!(w.get(i, j) >= 0.0);
                    assert_eq!(w.get(i, j), w.get(j, i));
                }
            }
            assert_eq!(w, build_graph(&a, &y, &cfg).unwrap().weights);
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("SSR".parse::<GraphVariant>().unwrap(), GraphVariant::Ssr);
        assert!("foo".parse::<GraphVariant>().is_err());
        assert_eq!(GraphVariant::Knn.to_string(), "knn");
    }
}
