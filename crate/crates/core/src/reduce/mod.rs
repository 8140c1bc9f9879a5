//! Vocabulary reduction by semantic spectral clustering.
//!
//! Visual words (columns of the refined model `F*`) become vertices of a
//! feature graph `W_s`, built either from clipped Pearson correlation between
//! columns (`ssc1`) or from `F*^T A F*` with the textual affinity `A` (`ssc2`).
//! The words are embedded with the `K` smallest nontrivial eigenvectors of
//! the normalized Laplacian of `W_s`, rows normalized, then grouped by
//! k-means. Each cluster is one high-level feature and the reduced model is
//! `Y* = F* U^T` for the binary membership matrix `U`.

mod kmeans;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::laplacian_of;
use crate::linalg::symmetric_eigen;
use crate::matrix::{AffinityMatrix, BowMatrix};

pub use kmeans::{kmeans, KMeansResult, MAX_LLOYD_ITERATIONS};

/// Eigenvalues below this belong to the null space (one per component).
pub const TRIVIAL_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionVariant {
    /// Clipped Pearson correlation between refined columns.
    Ssc1,
    /// `F*^T A F*` with the textual affinity.
    Ssc2,
}

impl FromStr for ReductionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssc1" => Ok(ReductionVariant::Ssc1),
            "ssc2" => Ok(ReductionVariant::Ssc2),
            other => Err(Error::param(format!("unknown reduction variant {other:?} (ssc1|ssc2)"))),
        }
    }
}

impl fmt::Display for ReductionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionVariant::Ssc1 => "ssc1",
            ReductionVariant::Ssc2 => "ssc2",
        })
    }
}

/// Symmetric nonnegative feature x feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionGraph {
    pub weights: Array2<f64>,
    pub variant: ReductionVariant,
}

impl ReductionGraph {
    pub fn new(weights: Array2<f64>, variant: ReductionVariant) -> Result<Self> {
        let (r, c) = weights.dim();
        if r != c {
            return Err(Error::InvalidMatrix(format!("feature graph must be square, got {r}x{c}")));
        }
        for i in 0..r {
            for j in 0..r {
                let v = weights[[i, j]];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidMatrix(format!("feature weight ({i}, {j}) = {v}")));
                }
                if (v - weights[[j, i]]).abs() > 1e-10 * v.abs().max(1.0) {
                    return Err(Error::InvalidMatrix(format!("feature graph not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(ReductionGraph { weights, variant })
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }
}

/// Per-column mean and sample standard deviation (`n - 1` denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
}

impl ColumnStats {
    pub fn of(f: &BowMatrix) -> Result<Self> {
        let n = f.rows();
        if n < 2 {
            return Err(Error::param("column statistics need at least two rows"));
        }
        let v = f.values();
        let mu = v.mean_axis(Axis(0)).expect("nonempty");
        let mut sigma = Array1::zeros(f.cols());
        for (j, col) in v.axis_iter(Axis(1)).enumerate() {
            let ss: f64 = col.iter().map(|x| (x - mu[j]) * (x - mu[j])).sum();
            sigma[j] = (ss / (n - 1) as f64).sqrt();
        }
        Ok(ColumnStats { mu, sigma })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// `M_v x K`, one row per visual word.
    pub embedding: Array2<f64>,
    /// Retained eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub rows_normalized: bool,
}

/// Hard assignment of every visual word to one of `k` high-level features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipMatrix {
    assignments: Vec<usize>,
    k: usize,
}

impl MembershipMatrix {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = assignments.iter().find(|&&c| c >= k) {
            return Err(Error::param(format!("cluster id {bad} out of range for K = {k}")));
        }
        Ok(MembershipMatrix { assignments, k })
    }

    /// Cluster id of every mid-level feature.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn num_clusters(&self) -> usize {
        self.k
    }

    pub fn num_features(&self) -> usize {
        self.assignments.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }

    /// The binary `K x M_v` matrix `U`.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut u = Array2::zeros((self.k, self.assignments.len()));
        for (j, &c) in self.assignments.iter().enumerate() {
            u[[c, j]] = 1.0;
        }
        u
    }
}

/// `w_ij = max(0, corr(F*_i, F*_j))`, zero diagonal; constant columns are
/// isolated.
pub fn ppm_weights(f: &BowMatrix) -> Result<ReductionGraph> {
    let stats = ColumnStats::of(f)?;
    let n = f.rows();
    let m = f.cols();
    let mut z = f.values().to_owned();
    for j in 0..m {
        let sigma = stats.sigma[j];
        let mu = stats.mu[j];
        let constant = sigma == 0.0 || sigma <= 1e-12 * mu.abs();
        z.column_mut(j).mapv_inplace(|x| if constant { 0.0 } else { (x - mu) / sigma });
    }
    let mut w = z.t().dot(&z) / (n - 1) as f64;
    for i in 0..m {
        w[[i, i]] = 0.0;
        for j in (i + 1)..m {
            let v = w[[i, j]].clamp(0.0, 1.0);
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    ReductionGraph::new(w, ReductionVariant::Ssc1)
}

/// `W_s = F*^T A F*`, diagonal zeroed.
pub fn semantic_weights(f: &BowMatrix, a: &AffinityMatrix) -> Result<ReductionGraph> {
    if a.size() != f.rows() {
        return Err(Error::dims(format!(
            "affinity is {}x{} but the refined model has {} rows",
            a.size(),
            a.size(),
            f.rows()
        )));
    }
    let fv = f.values();
    let mut w = fv.t().dot(&a.values().dot(&fv));
    let m = w.nrows();
    for i in 0..m {
        w[[i, i]] = 0.0;
        for j in (i + 1)..m {
            let v = (0.5 * (w[[i, j]] + w[[j, i]])).max(0.0);
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    ReductionGraph::new(w, ReductionVariant::Ssc2)
}

/// The `K` smallest nontrivial eigenvectors of the normalized Laplacian of
/// the feature graph, with each row scaled to unit length.
pub fn spectral_embed(g: &ReductionGraph, k: usize) -> Result<EmbeddingMatrix> {
    let m = g.size();
    if k == 0 || k >= m {
        return Err(Error::param(format!("need 1 <= K < M_v, got K = {k}, M_v = {m}")));
    }
    let lap = laplacian_of(g.weights.view());
    let (values, vectors) = symmetric_eigen(lap.matrix.view());
    let first = values.iter().position(|&v| v >= TRIVIAL_EIGENVALUE).unwrap_or(m);
    let available = m - first;
    if available < k {
        return Err(Error::InsufficientSpectrum { requested: k, available });
    }
    let mut embedding = vectors.slice(ndarray::s![.., first..first + k]).to_owned();
    for mut row in embedding.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(EmbeddingMatrix {
        embedding,
        eigenvalues: values[first..first + k].to_vec(),
        rows_normalized: true,
    })
}

/// k-means over the embedding rows.
pub fn kmeans_cluster(e: &EmbeddingMatrix, k: usize, seed: u64) -> Result<MembershipMatrix> {
    let distinct = count_distinct_rows(&e.embedding);
    if k > distinct {
        return Err(Error::param(format!("K = {k} exceeds the {distinct} distinct embedding rows")));
    }
    let result = kmeans(e.embedding.view(), k, seed)?;
    MembershipMatrix::new(result.assignments, k)
}

fn count_distinct_rows(x: &Array2<f64>) -> usize {
    let mut rows: Vec<Vec<u64>> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort();
    rows.dedup();
    rows.len()
}

/// `Y* = F* U^T`: each high-level feature sums the columns of its cluster.
pub fn reduce_bow(f: &BowMatrix, u: &MembershipMatrix) -> Result<BowMatrix> {
    if u.num_features() != f.cols() {
        return Err(Error::dims(format!(
            "membership covers {} features but the model has {}",
            u.num_features(),
            f.cols()
        )));
    }
    let fv = f.values();
    let mut out = Array2::zeros((f.rows(), u.num_clusters()));
    for (j, &c) in u.assignments().iter().enumerate() {
        let mut col = out.column_mut(c);
        col += &fv.column(j);
    }
    let ids = (0..u.num_clusters()).map(|c| format!("h{c}")).collect();
    BowMatrix::new(out)?.with_feature_ids(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReduceConfig {
    pub variant: ReductionVariant,
    /// Number of high-level features.
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        ReduceConfig { variant: ReductionVariant::Ssc2, k: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionOutcome {
    /// `None` when `K = M_v`, where the partition is forced to singletons.
    pub embedding: Option<EmbeddingMatrix>,
    pub membership: MembershipMatrix,
    pub reduced: BowMatrix,
}

/// Full reduction: feature graph, embedding, clustering and `Y*`.
/// `ssc2` needs the textual affinity. `K = M_v` admits only the singleton
/// partition and skips the embedding.
pub fn semantic_spectral_clustering(
    f: &BowMatrix,
    a: Option<&AffinityMatrix>,
    cfg: &ReduceConfig,
) -> Result<ReductionOutcome> {
    if cfg.variant == ReductionVariant::Ssc2 && a.is_none() {
        return Err(Error::param("ssc2 needs the textual affinity matrix"));
    }
    if cfg.k == f.cols() {
        let membership = MembershipMatrix::new((0..cfg.k).collect(), cfg.k)?;
        let reduced = reduce_bow(f, &membership)?;
        return Ok(ReductionOutcome { embedding: None, membership, reduced });
    }
    let graph = match (cfg.variant, a) {
        (ReductionVariant::Ssc1, _) => ppm_weights(f)?,
        (ReductionVariant::Ssc2, Some(a)) => semantic_weights(f, a)?,
        (ReductionVariant::Ssc2, None) => {
            return Err(Error::param("ssc2 needs the textual affinity matrix"));
        }
    };
    let embedding = spectral_embed(&graph, cfg.k)?;
    let membership = kmeans_cluster(&embedding, cfg.k, cfg.seed)?;
    let reduced = reduce_bow(f, &membership)?;
    Ok(ReductionOutcome { embedding: Some(embedding), membership, reduced })
}
