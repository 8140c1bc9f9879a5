//! Desk-scale evaluation: chi-squared kernel, a kernel ridge classifier,
//! average precision and a synthetic dataset generator.

mod synth;

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::matrix::BowMatrix;

pub use synth::{class_block, synth_dataset, train_test_split, SynthConfig, SynthDataset};

pub const CHI2_EPS: f64 = 1e-12;

/// Binary multi-label ground truth, images x classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    values: Array2<u8>,
    class_names: Vec<String>,
}

impl LabelMatrix {
    pub fn new(values: Array2<u8>, class_names: Vec<String>) -> Result<Self> {
        if values.ncols() != class_names.len() {
            return Err(Error::dims(format!(
                "{} label columns but {} class names",
                values.ncols(),
                class_names.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidMatrix("label matrix is empty".into()));
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidMatrix(format!("label entries must be 0 or 1, found {v}")));
        }
        Ok(LabelMatrix { values, class_names })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn values(&self) -> ArrayView2<'_, u8> {
        self.values.view()
    }

    pub fn get(&self, i: usize, c: usize) -> u8 {
        self.values[[i, c]]
    }

    pub fn relevance(&self, c: usize) -> Vec<bool> {
        self.values.column(c).iter().map(|&v| v == 1).collect()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    pub fn select_rows(&self, idx: &[usize]) -> LabelMatrix {
        LabelMatrix {
            values: self.values.select(ndarray::Axis(0), idx),
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / mean pairwise chi-squared distance` over the first argument.
    Auto,
    Fixed(f64),
}

fn l1_normalized(x: &BowMatrix) -> Array2<f64> {
    let mut v = x.values().to_owned();
    for mut row in v.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    v
}

fn chi2_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d / (a + b + CHI2_EPS)
        })
        .sum()
}

fn mean_pairwise_chi2(x: &Array2<f64>) -> f64 {
    let n = x.nrows();
    let rows: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += chi2_distance(rows[i], rows[j]);
        }
    }
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs == 0 { 0.0 } else { total / pairs as f64 }
}

/// Bandwidth picked by [`Gamma::Auto`] for `x`; `1` when all rows coincide.
pub fn chi2_auto_gamma(x: &BowMatrix) -> f64 {
    let mean = mean_pairwise_chi2(&l1_normalized(x));
    if mean > 0.0 { 1.0 / mean } else { 1.0 }
}

/// `k(x, y) = exp(-gamma * sum_d (x_d - y_d)^2 / (x_d + y_d + eps))` on
/// L1-normalized rows.
pub fn chi2_kernel(x1: &BowMatrix, x2: &BowMatrix, gamma: Gamma) -> Result<Array2<f64>> {
    if x1.cols() != x2.cols() {
        return Err(Error::dims(format!("kernel inputs have {} and {} columns", x1.cols(), x2.cols())));
    }
    let gamma = match gamma {
        Gamma::Auto => chi2_auto_gamma(x1),
        Gamma::Fixed(g) if g > 0.0 && g.is_finite() => g,
        Gamma::Fixed(g) => return Err(Error::param(format!("gamma must be positive, got {g}"))),
    };
    let a = l1_normalized(x1);
    let b = l1_normalized(x2);
    let mut k = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        let ra = ra.to_slice().expect("standard layout");
        for (j, rb) in b.rows().into_iter().enumerate() {
            k[[i, j]] = (-gamma * chi2_distance(ra, rb.to_slice().expect("standard layout"))).exp();
        }
    }
    Ok(k)
}

/// One-vs-rest kernel ridge regression:
/// `scores = K_cross (K_train + ridge I)^-1 Y`.
pub fn krr_classify(
    k_train: ArrayView2<'_, f64>,
    k_cross: ArrayView2<'_, f64>,
    labels: &LabelMatrix,
    ridge: f64,
) -> Result<Array2<f64>> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::param(format!("ridge must be positive, got {ridge}")));
    }
    let n = k_train.nrows();
    if k_train.ncols() != n || k_cross.ncols() != n || labels.rows() != n {
        return Err(Error::dims(format!(
            "train kernel {:?}, cross kernel {:?}, {} training labels",
            k_train.dim(),
            k_cross.dim(),
            labels.rows()
        )));
    }
    let mut system = k_train.to_owned();
    for i in 0..n {
        system[[i, i]] += ridge;
    }
    let y = labels.to_f64();
    let coef = match cholesky_solve(system.view(), y.view()) {
        Some(c) => c,
        None => crate::linalg::lu_solve(system.view(), y.view())
            .ok_or_else(|| Error::InvalidMatrix("train kernel plus ridge is singular".into()))?,
    };
    Ok(k_cross.dot(&coef))
}

/// Non-interpolated average precision. Scores are ranked descending with
/// ties going to the smaller index; AP is the mean of precision at the rank
/// of every positive.
pub fn average_precision(scores: &[f64], relevance: &[bool]) -> Result<f64> {
    if scores.len() != relevance.len() {
        return Err(Error::dims(format!("{} scores for {} labels", scores.len(), relevance.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores contain NaN"));
    }
    let positives = relevance.iter().filter(|&&r| r).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevance[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    /// `None` for classes without a positive test image.
    pub per_class_ap: Vec<Option<f64>>,
    /// Mean over the classes that have an AP.
    pub map: f64,
    /// Seconds per stage, e.g. `kernel` and `classify`.
    pub wall_time_seconds: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn evaluated_classes(&self) -> usize {
        self.per_class_ap.iter().flatten().count()
    }

    pub fn total_seconds(&self) -> f64 {
        self.wall_time_seconds.iter().map(|(_, s)| s).sum()
    }
}

/// Per-class AP of an `n x C` score matrix. Classes without positives are
/// skipped with a warning; it is an error if every class is skipped.
pub fn mean_average_precision(scores: ArrayView2<'_, f64>, truth: &LabelMatrix) -> Result<EvalReport> {
    if scores.dim() != truth.values().dim() {
        return Err(Error::dims(format!("scores {:?} vs labels {:?}", scores.dim(), truth.values().dim())));
    }
    let mut per_class_ap = Vec::with_capacity(truth.num_classes());
    for c in 0..truth.num_classes() {
        let col: Vec<f64> = scores.column(c).to_vec();
        match average_precision(&col, &truth.relevance(c)) {
            Ok(ap) => per_class_ap.push(Some(ap)),
            Err(Error::NoPositives) => {
                log::warn!("class {} has no positive test images, skipped", truth.class_names()[c]);
                per_class_ap.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let aps: Vec<f64> = per_class_ap.iter().flatten().cloned().collect();
    if aps.is_empty() {
        return Err(Error::NoPositives);
    }
    Ok(EvalReport {
        class_names: truth.class_names().to_vec(),
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        per_class_ap,
        wall_time_seconds: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ridge: f64,
    pub gamma: Gamma,
    pub test_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { ridge: 1e-1, gamma: Gamma::Auto, test_fraction: 0.5 }
    }
}

/// Train on `train`, score `test`, and report MAP plus kernel and
/// classifier wall times. Gamma `auto` is fitted on the training rows.
pub fn evaluate_split(
    x: &BowMatrix,
    labels: &LabelMatrix,
    train: &[usize],
    test: &[usize],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if x.rows() != labels.rows() {
        return Err(Error::dims(format!("{} images but {} label rows", x.rows(), labels.rows())));
    }
    let start = Instant::now();
    let xtr = x.select_rows(train);
    let xte = x.select_rows(test);
    let gamma = match cfg.gamma {
        Gamma::Auto => Gamma::Fixed(chi2_auto_gamma(&xtr)),
        g => g,
    };
    let k_train = chi2_kernel(&xtr, &xtr, gamma)?;
    let k_cross = chi2_kernel(&xte, &xtr, gamma)?;
    let kernel_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let scores = krr_classify(k_train.view(), k_cross.view(), &labels.select_rows(train), cfg.ridge)?;
    let classify_secs = start.elapsed().as_secs_f64();

    let mut report = mean_average_precision(scores.view(), &labels.select_rows(test))?;
    report.wall_time_seconds = vec![("kernel".into(), kernel_secs), ("classify".into(), classify_secs)];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bow(v: Array2<f64>) -> BowMatrix {
        BowMatrix::new(v).unwrap()
    }

    #[test]
    fn chi2_examples() {
        let x = bow(array![[1.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let k = chi2_kernel(&x, &x, Gamma::Fixed(1.0)).unwrap();
        assert!((k[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((k[[0, 1]] - (-2.0f64).exp()).abs() < 1e-9);
        assert_eq!(k[[0, 1]], k[[1, 0]]);
        let bad = bow(array![[1.0, 2.0]]);
        assert!(chi2_kernel(&x, &bad, Gamma::Auto).is_err());
        assert!(chi2_kernel(&x, &x, Gamma::Fixed(0.0)).is_err());
    }

    #[test]
    fn chi2_auto_gamma_matches_hand_mean() {
        // normalized rows (1,0), (0,1), (0.5,0.5): distances 2, 2/3, 2/3
        let x = bow(array![[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]]);
        let expect = 1.0 / ((2.0 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0);
        assert!((chi2_auto_gamma(&x) - expect).abs() < 1e-9);
    }

    #[test]
    fn chi2_entries_bounded_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = bow(Array2::from_shape_fn((15, 6), |_| rng.random_range(0.0..3.0)));
        let k = chi2_kernel(&x, &x, Gamma::Auto).unwrap();
        for i in 0..15 {
            assert!((k[[i, i]] - 1.0).abs() < 1e-15);
            for j in 0..15 {
                assert!(k[[i, j]] > 0.0 && k[[i, j]] <= 1.0);
                assert_eq!(k[[i, j]], k[[j, i]]);
            }
        }
    }

    fn labels(v: Array2<u8>) -> LabelMatrix {
        let names = (0..v.ncols()).map(|c| format!("c{c}")).collect();
        LabelMatrix::new(v, names).unwrap()
    }

    #[test]
    fn krr_identity_kernel() {
        let y = labels(array![[1, 0], [0, 1], [1, 1]]);
        let kc = array![[0.2, 0.5, 0.1], [1.0, 0.0, 0.3]];
        let s = krr_classify(Array2::eye(3).view(), kc.view(), &y, 1e-12).unwrap();
        let expect = kc.dot(&y.to_f64());
        for (a, b) in s.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(krr_classify(Array2::eye(3).view(), kc.view(), &y, 0.0).is_err());
    }

    #[test]
    fn krr_matches_explicit_inverse_and_finds_duplicates() {
        // sharp kernel on 1-d points; test point duplicates training point 1
        let pts = [0.0, 1.0, 2.0];
        let kern = |a: f64, b: f64| (-10.0 * (a - b) * (a - b)).exp();
        let ktr = Array2::from_shape_fn((3, 3), |(i, j)| kern(pts[i], pts[j]));
        let kc = Array2::from_shape_fn((1, 3), |(_, j)| kern(1.0, pts[j]));
        let y = labels(array![[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        let ridge = 0.1;
        let s = krr_classify(ktr.view(), kc.view(), &y, ridge).unwrap();
        // 3x3 inverse by cofactors
        let m = &ktr + &(Array2::<f64>::eye(3) * ridge);
        let det = m[[0, 0]] * (m[[1, 1]] * m[[2, 2]] - m[[1, 2]] * m[[2, 1]])
            - m[[0, 1]] * (m[[1, 0]] * m[[2, 2]] - m[[1, 2]] * m[[2, 0]])
            + m[[0, 2]] * (m[[1, 0]] * m[[2, 1]] - m[[1, 1]] * m[[2, 0]]);
        let inv = Array2::from_shape_fn((3, 3), |(i, j)| {
            let r: Vec<usize> = (0..3).filter(|&r| r != j).collect();
            let c: Vec<usize> = (0..3).filter(|&c| c != i).collect();
            let minor = m[[r[0], c[0]]] * m[[r[1], c[1]]] - m[[r[0], c[1]]] * m[[r[1], c[0]]];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor / det
        });
        let expect = kc.dot(&inv);
        for c in 0..3 {
            assert!((s[[0, c]] - expect[[0, c]]).abs() < 1e-12);
        }
        assert!(s[[0, 1]] > s[[0, 0]] && s[[0, 1]] > s[[0, 2]]);
    }

    #[test]
    fn krr_is_linear_in_labels_and_row_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = bow(Array2::from_shape_fn((10, 4), |_| rng.random_range(0.0..1.0)));
        let k = chi2_kernel(&x, &x, Gamma::Auto).unwrap();
        let y = labels(Array2::from_shape_fn((10, 2), |(i, c)| ((i + c) % 2) as u8));
        let kc = k.slice(ndarray::s![0..4, ..]).to_owned();
        let s = krr_classify(k.view(), kc.view(), &y, 0.5).unwrap();
        let perm = [2usize, 0, 3, 1];
        let kp = kc.select(ndarray::Axis(0), &perm);
        let sp = krr_classify(k.view(), kp.view(), &y, 0.5).unwrap();
        for (r, &p) in perm.iter().enumerate() {
            assert_eq!(sp.row(r), s.row(p));
        }
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let ap = average_precision(&[5.0, 4.0, 3.0, 2.0, 1.0], &[false, false, false, false, true]).unwrap();
        assert!((ap - 0.2).abs() < 1e-15);
        assert!(matches!(average_precision(&[1.0, 2.0], &[false, false]), Err(Error::NoPositives)));
        // tie between a negative at index 0 and a positive at index 1
        assert_eq!(average_precision(&[1.0, 1.0], &[false, true]).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn ap_is_invariant_under_monotone_maps(
            scores in proptest::collection::vec(-5.0f64..5.0, 2..30),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rel: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.4)).collect();
            rel[0] = true;
            let base = average_precision(&scores, &rel).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
            prop_assert_eq!(base, average_precision(&mapped, &rel).unwrap());
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }

    #[test]
    fn map_skips_classes_without_positives() {
        let truth = labels(array![[1, 0], [0, 0], [1, 0]]);
        let scores = array![[0.9, 0.1], [0.8, 0.2], [0.7, 0.3]];
        let r = mean_average_precision(scores.view(), &truth).unwrap();
        assert_eq!(r.per_class_ap[1], None);
        assert_eq!(r.evaluated_classes(), 1);
        assert!((r.map - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let none = labels(array![[0], [0]]);
        assert!(mean_average_precision(array![[1.0], [0.0]].view(), &none).is_err());
    }

    #[test]
    fn separable_data_scores_perfectly() {
        let cfg = SynthConfig {
            n_images: 60,
            n_classes: 3,
            visual_vocab: 30,
            tag_noise_rate: 0.0,
            visual_noise_rate: 0.0,
            multi_label_rate: 0.0,
            ..Default::default()
        };
        let d = synth_dataset(&cfg).unwrap();
        let (tr, te) = train_test_split(60, 0.5, 0).unwrap();
        let r = evaluate_split(&d.visual, &d.labels, &tr, &te, &EvalConfig::default()).unwrap();
        assert_eq!(r.map, 1.0);
        let again = evaluate_split(&d.visual, &d.labels, &tr, &te, &EvalConfig::default()).unwrap();
        assert_eq!(r.per_class_ap, again.per_class_ap);
    }

    #[test]
    fn label_matrix_checks() {
        assert!(LabelMatrix::new(array![[2u8]], vec!["a".into()]).is_err());
        assert!(LabelMatrix::new(array![[1u8]], vec![]).is_err());
    }
}
