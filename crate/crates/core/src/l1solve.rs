//! Equality-constrained L1 minimization (basis pursuit):
//!
//! ```text
//!     min ||z||_1   s.t.   M z = b
//! ```
//!
//! The problem is rewritten with `z = u - v`, `u, v >= 0` as the standard-form
//! linear program `min 1^T (u + v)  s.t.  M u - M v = b` and solved by a
//! Mehrotra predictor-corrector primal-dual interior-point method started
//! from an infeasible point, so primal feasibility is restored along the way.
//!
//! Interior iterates are never exactly sparse. Once the method converges the
//! apparent support is extracted and the square (or tall) system on that
//! support is re-solved; the vertex is kept when it is feasible, sign
//! consistent and no worse than the interior solution.

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rank, to_na};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub duality_gap_tol: f64,
    pub max_iterations: usize,
    pub constraint_feasibility_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            duality_gap_tol: 1e-6,
            max_iterations: 200,
            constraint_feasibility_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duality_gap_tol > 0.0) || !(self.constraint_feasibility_tol > 0.0) {
            return Err(Error::param("solver tolerances must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("solver max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub z: Vec<f64>,
    /// `sum |z_j|`
    pub objective: f64,
    /// `||M z - b||_2` of the returned `z`.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Relative singular-value cutoff for the row-rank check.
const RANK_TOL: f64 = 1e-10;
/// Fraction of the distance to the boundary taken per step.
const STEP_DAMPING: f64 = 0.995;

pub fn basis_pursuit(
    m: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
) -> Result<L1Solution> {
    cfg.validate()?;
    let (rows, p) = m.dim();
    if rows == 0 || p == 0 {
        return Err(Error::dims(format!("empty constraint matrix {rows}x{p}")));
    }
    if b.len() != rows {
        return Err(Error::dims(format!("right-hand side has {} entries, expected {rows}", b.len())));
    }
    if m.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("basis pursuit input is not finite".into()));
    }
    let mat = to_na(m);
    let r = rank(&mat, RANK_TOL);
    if r < rows {
        return Err(Error::RankDeficient { rank: r, rows });
    }
    let rhs = DVector::from_iterator(rows, b.iter().cloned());

    let scale = rhs.amax();
    if scale == 0.0 {
        return Ok(L1Solution {
            z: vec![0.0; p],
            objective: 0.0,
            residual_norm: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    // Solving for b / ||b||_inf makes the tolerances scale-free; the solution
    // is scaled back afterwards.
    let unit_rhs = &rhs / scale;
    let ipm = InteriorPoint::new(&mat, &unit_rhs, cfg).run();

    let mut z: DVector<f64> = ipm.z;
    if ipm.converged {
        if let Some(vertex) = polish(&mat, &unit_rhs, &z, cfg) {
            z = vertex;
        }
    }
    z *= scale;
    let residual_norm = (&mat * &z - &rhs).norm();
    Ok(L1Solution {
        objective: z.iter().map(|v| v.abs()).sum(),
        z: z.iter().cloned().collect(),
        residual_norm,
        converged: ipm.converged,
        iterations: ipm.iterations,
    })
}

struct IpmOutcome {
    z: DVector<f64>,
    converged: bool,
    iterations: usize,
}

/// Primal-dual state for `min 1^T (u + v)  s.t.  M (u - v) = b,  u, v >= 0`
/// with duals `y` and slacks `s_u = 1 - M^T y`, `s_v = 1 + M^T y`.
struct InteriorPoint<'a> {
    m: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    cfg: &'a SolverConfig,
    u: DVector<f64>,
    v: DVector<f64>,
    y: DVector<f64>,
    su: DVector<f64>,
    sv: DVector<f64>,
}

struct Direction {
    du: DVector<f64>,
    dv: DVector<f64>,
    dy: DVector<f64>,
    dsu: DVector<f64>,
    dsv: DVector<f64>,
}

impl<'a> InteriorPoint<'a> {
    fn new(m: &'a DMatrix<f64>, b: &'a DVector<f64>, cfg: &'a SolverConfig) -> Self {
        let (rows, p) = m.shape();
        // Least-norm solution of [M, -M] x = b: u = M^T w, v = -u with
        // 2 M M^T w = b. The dual start is y = 0, s = 1.
        let mmt = m * m.transpose() * 2.0;
        let w = match mmt.clone().cholesky() {
            Some(ch) => ch.solve(b),
            None => mmt.lu().solve(b).unwrap_or_else(|| DVector::zeros(rows)),
        };
        let mtw = m.transpose() * w;
        let mut u = mtw.clone();
        let mut v = -mtw;
        let min_x = u.min().min(v.min());
        let shift = (-1.5 * min_x).max(0.0);
        u.add_scalar_mut(shift);
        v.add_scalar_mut(shift);
        let mut su = DVector::from_element(p, 1.0);
        let mut sv = DVector::from_element(p, 1.0);
        let xs = u.dot(&su) + v.dot(&sv);
        let sum_x = u.sum() + v.sum();
        let sum_s = su.sum() + sv.sum();
        let dx = if sum_s > 0.0 { 0.5 * xs / sum_s } else { 0.0 };
        let ds = if sum_x > 0.0 { 0.5 * xs / sum_x } else { 0.0 };
        let floor = 1e-2;
        u.apply(|x| *x = (*x + dx).max(floor));
        v.apply(|x| *x = (*x + dx).max(floor));
        su.add_scalar_mut(ds);
        sv.add_scalar_mut(ds);
        InteriorPoint { m, b, cfg, u, v, y: DVector::zeros(rows), su, sv }
    }

    fn run(mut self) -> IpmOutcome {
        let p = self.u.len();
        let n_var = (2 * p) as f64;
        let b_norm = self.b.norm();
        let c_norm = n_var.sqrt();
        let mut best: Option<(f64, DVector<f64>)> = None;

        for iter in 0..self.cfg.max_iterations {
            let r_b = self.m * (&self.u - &self.v) - self.b;
            let mty = self.m.transpose() * &self.y;
            // dual residuals A^T y + s - c, split by block
            let r_cu = &mty + &self.su - DVector::from_element(p, 1.0);
            let r_cv = -&mty + &self.sv - DVector::from_element(p, 1.0);
            let mu = (self.u.dot(&self.su) + self.v.dot(&self.sv)) / n_var;

            let pres = r_b.norm() / (1.0 + b_norm);
            let dres = (r_cu.norm_squared() + r_cv.norm_squared()).sqrt() / (1.0 + c_norm);
            let pobj = self.u.sum() + self.v.sum();
            let dobj = self.b.dot(&self.y);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
            if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
                break;
            }

            let merit = pres.max(gap);
            if best.as_ref().is_none_or(|(m, _)| merit < *m) {
                best = Some((merit, &self.u - &self.v));
            }
            if pres <= self.cfg.constraint_feasibility_tol
                && dres <= self.cfg.constraint_feasibility_tol
                && gap <= self.cfg.duality_gap_tol
            {
                return IpmOutcome { z: &self.u - &self.v, converged: true, iterations: iter };
            }

            let du = self.u.component_div(&self.su);
            let dv = self.v.component_div(&self.sv);
            let Some(normal) = self.factor_normal(&du, &dv) else { break };

            // predictor
            let rxs_u = self.u.component_mul(&self.su);
            let rxs_v = self.v.component_mul(&self.sv);
            let aff = self.direction(&normal, &du, &dv, &r_b, &r_cu, &r_cv, &rxs_u, &rxs_v);
            let (ap, ad) = self.step_lengths(&aff, 1.0);
            let mu_aff = ((&self.u + &aff.du * ap).dot(&(&self.su + &aff.dsu * ad))
                + (&self.v + &aff.dv * ap).dot(&(&self.sv + &aff.dsv * ad)))
                / n_var;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // corrector
            let target = sigma * mu;
            let rxs_u = (rxs_u + aff.du.component_mul(&aff.dsu)).add_scalar(-target);
            let rxs_v = (rxs_v + aff.dv.component_mul(&aff.dsv)).add_scalar(-target);
            let dir = self.direction(&normal, &du, &dv, &r_b, &r_cu, &r_cv, &rxs_u, &rxs_v);
            let (ap, ad) = self.step_lengths(&dir, STEP_DAMPING);

            self.u += &dir.du * ap;
            self.v += &dir.dv * ap;
            self.y += &dir.dy * ad;
            self.su += &dir.dsu * ad;
            self.sv += &dir.dsv * ad;
        }
        let z = best.map(|(_, z)| z).unwrap_or_else(|| &self.u - &self.v);
        IpmOutcome { z, converged: false, iterations: self.cfg.max_iterations }
    }

    /// Cholesky of `M diag(d_u + d_v) M^T`, regularized if it is numerically
    /// indefinite.
    fn factor_normal(
        &self,
        du: &DVector<f64>,
        dv: &DVector<f64>,
    ) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let d = du + dv;
        let mut scaled = self.m.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= d[j];
        }
        let normal = &scaled * self.m.transpose();
        let trace = normal.trace().abs().max(f64::MIN_POSITIVE);
        let rows = normal.nrows();
        let mut reg = 0.0;
        for _ in 0..8 {
            let mut attempt = normal.clone();
            if reg > 0.0 {
                for i in 0..rows {
                    attempt[(i, i)] += reg;
                }
            }
            if let Some(ch) = attempt.cholesky() {
                return Some(ch);
            }
            reg = if reg == 0.0 { 1e-14 * trace / rows as f64 } else { reg * 100.0 };
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        normal: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        du: &DVector<f64>,
        dv: &DVector<f64>,
        r_b: &DVector<f64>,
        r_cu: &DVector<f64>,
        r_cv: &DVector<f64>,
        rxs_u: &DVector<f64>,
        rxs_v: &DVector<f64>,
    ) -> Direction {
        // dx = -S^{-1} r_xs + D r_c + D A^T dy, with A = [M, -M]
        let base_u = -rxs_u.component_div(&self.su) + du.component_mul(r_cu);
        let base_v = -rxs_v.component_div(&self.sv) + dv.component_mul(r_cv);
        // A D A^T dy = -r_b - A base
        let rhs = -r_b - self.m * (&base_u - &base_v);
        let dy = normal.solve(&rhs);
        let mtdy = self.m.transpose() * &dy;
        let du_step = base_u + du.component_mul(&mtdy);
        let dv_step = base_v - dv.component_mul(&mtdy);
        let dsu = -r_cu - &mtdy;
        let dsv = -r_cv + &mtdy;
        Direction { du: du_step, dv: dv_step, dy, dsu, dsv }
    }

    fn step_lengths(&self, d: &Direction, damping: f64) -> (f64, f64) {
        let ratio = |x: &DVector<f64>, dx: &DVector<f64>| {
            x.iter()
                .zip(dx.iter())
                .filter(|(_, &d)| d < 0.0)
                .map(|(&x, &d)| -x / d)
                .fold(f64::INFINITY, f64::min)
        };
        let ap = ratio(&self.u, &d.du).min(ratio(&self.v, &d.dv));
        let ad = ratio(&self.su, &d.dsu).min(ratio(&self.sv, &d.dsv));
        ((damping * ap).min(1.0), (damping * ad).min(1.0))
    }
}

/// Re-solves the constraint system on the support of an interior solution.
fn polish(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &DVector<f64>,
    cfg: &SolverConfig,
) -> Option<DVector<f64>> {
    let zmax = z.amax();
    if zmax == 0.0 {
        return None;
    }
    let objective: f64 = z.iter().map(|v| v.abs()).sum();
    let rows = m.nrows();
    let feas = cfg.constraint_feasibility_tol * (1.0 + b.norm());
    for rel in [1e-8, 1e-7, 1e-6, 1e-5, 1e-4] {
        let support: Vec<usize> = (0..z.len()).filter(|&j| z[j].abs() > rel * zmax).collect();
        if support.is_empty() || support.len() > rows {
            continue;
        }
        let sub = m.select_columns(&support);
        let svd = sub.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.iter().any(|&s| s <= RANK_TOL * smax) {
            continue;
        }
        let Ok(zs) = svd.solve(b, 0.0) else { continue };
        if (&sub * &zs - b).norm() > feas {
            continue;
        }
        if support.iter().zip(zs.iter()).any(|(&j, &v)| v.signum() != z[j].signum()) {
            continue;
        }
        let pol_obj: f64 = zs.iter().map(|v| v.abs()).sum();
        if pol_obj > objective + cfg.duality_gap_tol * (1.0 + objective) {
            continue;
        }
        let mut out = DVector::zeros(z.len());
        for (&j, &v) in support.iter().zip(zs.iter()) {
            out[j] = v;
        }
        return Some(out);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn solve(m: Array2<f64>, b: Array1<f64>) -> L1Solution {
        basis_pursuit(m.view(), b.view(), &SolverConfig::default()).unwrap()
    }

    #[test]
    fn identity_constraint() {
        let s = solve(Array2::eye(3), array![1.0, 0.0, 2.0]);
        assert!(s.converged);
        for (a, e) in s.z.iter().zip([1.0, 0.0, 2.0]) {
            assert!((a - e).abs() < 1e-9);
        }
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let s = solve(array![[1.0, 2.0, 3.0]], array![0.0]);
        assert_eq!(s.z, vec![0.0; 3]);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn overlapping_pair() {
        let s = solve(array![[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]], array![1.0, 1.0]);
        assert!(s.converged);
        assert!((s.objective - 1.0).abs() < 1e-9, "{s:?}");
        assert!((s.z[1] - 1.0).abs() < 1e-9);
        assert!(s.z[0].abs() < 1e-9 && s.z[2].abs() < 1e-9);
        assert!(s.residual_norm < 1e-12);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let err = basis_pursuit(
            array![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]].view(),
            array![1.0, 2.0].view(),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 1, rows: 2 }));
    }

    #[test]
    fn bad_inputs() {
        let cfg = SolverConfig::default();
        assert!(basis_pursuit(array![[1.0, 0.0]].view(), array![1.0, 2.0].view(), &cfg).is_err());
        let bad = SolverConfig { max_iterations: 0, ..cfg };
        assert!(basis_pursuit(array![[1.0]].view(), array![1.0].view(), &bad).is_err());
        let bad = SolverConfig { duality_gap_tol: -1.0, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn iteration_cap_returns_flagged_best_iterate() {
        let cfg = SolverConfig { max_iterations: 1, ..Default::default() };
        let s = basis_pursuit(
            array![[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]].view(),
            array![1.0, 1.0].view(),
            &cfg,
        )
        .unwrap();
        assert!(!s.converged);
        assert_eq!(s.z.len(), 3);
        assert!(s.z.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn negative_entries_are_recovered() {
        let s = solve(array![[2.0, 0.0, 1.0], [0.0, 1.0, 1.0]], array![-4.0, 0.5]);
        // z = (-2, 0.5, 0) costs 2.5; any use of the shared column costs more
        assert!((s.objective - 2.5).abs() < 1e-9, "{s:?}");
    }
}
