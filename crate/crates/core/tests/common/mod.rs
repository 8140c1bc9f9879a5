//! Independent oracles shared by the integration suites.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;

/// Solves the small dense system `a x = b` by Gaussian elimination with
/// partial pivoting. `None` when a pivot falls below `1e-12` relative.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn subsets(p: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == size {
        out.push(cur.clone());
        return;
    }
    for j in start..p {
        cur.push(j);
        subsets(p, size, j + 1, cur, out);
        cur.pop();
    }
}

/// Minimum-L1 solution of `m z = b` by enumerating every column support of
/// size at most `rows`: some optimal solution of the split linear program is
/// a basic solution, i.e. supported on linearly independent columns.
pub fn l1_by_support_enumeration(m: &Array2<f64>, b: &Array1<f64>) -> Option<(f64, Vec<f64>)> {
    let (rows, p) = m.dim();
    let bnorm = b.dot(b).sqrt();
    if bnorm == 0.0 {
        return Some((0.0, vec![0.0; p]));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for size in 1..=rows.min(p) {
        let mut all = Vec::new();
        subsets(p, size, 0, &mut Vec::new(), &mut all);
        for support in all {
            // least squares through the normal equations of the support
            let normal: Vec<Vec<f64>> = support
                .iter()
                .map(|&i| support.iter().map(|&j| (0..rows).map(|r| m[[r, i]] * m[[r, j]]).sum()).collect())
                .collect();
            let rhs: Vec<f64> = support.iter().map(|&i| (0..rows).map(|r| m[[r, i]] * b[r]).sum()).collect();
            let Some(zs) = gauss_solve(normal, rhs) else { continue };
            let res: f64 = (0..rows)
                .map(|r| {
                    let v: f64 = support.iter().zip(&zs).map(|(&j, z)| m[[r, j]] * z).sum();
                    (v - b[r]).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            if res > 1e-9 * (1.0 + bnorm) {
                continue;
            }
            let obj: f64 = zs.iter().map(|v| v.abs()).sum();
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                let mut z = vec![0.0; p];
                for (&j, &v) in support.iter().zip(&zs) {
                    z[j] = v;
                }
                best = Some((obj, z));
            }
        }
    }
    best
}

/// Random `rows x p` matrix with entries in (-1, 1), smallest singular value
/// at least `0.05` of the largest, and a right side from a planted solution
/// with at most `sparsity` nonzeros.
pub fn planted_instance(rng: &mut impl Rng, rows: usize, p: usize, sparsity: usize) -> (Array2<f64>, Array1<f64>) {
    loop {
        let m = Array2::from_shape_fn((rows, p), |_| rng.random_range(-1.0..1.0));
        let na = nalgebra::DMatrix::from_fn(rows, p, |i, j| m[[i, j]]);
        let sv = na.singular_values();
        if sv.min() < 0.05 * sv.max() {
            continue;
        }
        let mut z0 = Array1::zeros(p);
        let nnz = rng.random_range(1..=sparsity.min(p));
        for _ in 0..nnz {
            let j = rng.random_range(0..p);
            z0[j] = rng.random_range(-2.0..2.0);
        }
        let b = m.dot(&z0);
        return (m, b);
    }
}
