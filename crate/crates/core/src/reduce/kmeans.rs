use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the smaller cluster index.
fn nearest(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, the rest with probability
/// proportional to the squared distance to the nearest chosen center.
fn seed_plus_plus(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            WeightedIndex::new(&dist).map(|w| w.sample(rng)).unwrap_or(0)
        } else {
            // every point coincides with a center already
            dist.iter().position(|&d| d > 0.0).unwrap_or(c % n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds. Runs until the assignment stops
/// changing or [`MAX_LLOYD_ITERATIONS`] is reached. An empty cluster takes
/// over the point farthest from its current centroid.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::param(format!("cannot form {k} clusters from {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids).0).collect();
    let mut iterations = 0;

    loop {
        repair_empty(points, &centroids, &mut assignments, k);
        update_centroids(points, &assignments, &mut centroids);
        iterations += 1;
        let next: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids).0).collect();
        let changed = next != assignments;
        assignments = next;
        if !changed || iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }
    }
    repair_empty(points, &centroids, &mut assignments, k);
    update_centroids(points, &assignments, &mut centroids);
    Ok(KMeansResult { assignments, centroids, iterations })
}

fn update_centroids(points: ArrayView2<'_, f64>, assignments: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        let mut row = sums.row_mut(c);
        row += &points.row(i);
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
        }
    }
}

fn repair_empty(points: ArrayView2<'_, f64>, centroids: &Array2<f64>, assignments: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignments.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        // farthest point among clusters that can spare one, ties to smaller index
        let mut best: Option<(usize, f64)> = None;
        for (i, &c) in assignments.iter().enumerate() {
            if counts[c] < 2 {
                continue;
            }
            let d = sq_dist(points.row(i), centroids.row(c));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => assignments[i] = empty,
            None => return,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn k_equal_n_gives_singletons() {
        let pts = array![[0.0, 1.0], [1.0, 0.0], [0.6, 0.8], [-1.0, 0.0]];
        let r = kmeans(pts.view(), 4, 7).unwrap();
        let mut seen = r.assignments.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn deterministic_under_seed() {
        let pts = Array2::from_shape_fn((30, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        assert_eq!(kmeans(pts.view(), 4, 1).unwrap(), kmeans(pts.view(), 4, 1).unwrap());
    }

    #[test]
    fn empty_clusters_are_repaired() {
        // three copies of one point and one distinct point, k = 2
        let pts = array![[0.0], [0.0], [0.0], [5.0]];
        let r = kmeans(pts.view(), 2, 3).unwrap();
        let mut counts = [0; 2];
        for &c in &r.assignments {
            counts[c] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));

        let centroids = array![[0.0], [100.0]];
        let mut a = vec![0, 0, 0, 0];
        repair_empty(pts.view(), &centroids, &mut a, 2);
        assert_eq!(a, vec![0, 0, 0, 1]);
    }

    #[test]
    fn rejects_bad_k() {
        let pts = array![[0.0], [1.0]];
        assert!(kmeans(pts.view(), 0, 0).is_err());
        assert!(kmeans(pts.view(), 3, 0).is_err());
    }
}
