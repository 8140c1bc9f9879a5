mod common;

use ndarray::{array, Array1};
use vbow::graph::{local_problem, LocalProblem};
use vbow::kernel::linear_kernel;
use vbow::l1solve::SolverConfig;
use vbow::matrix::BowMatrix;
use vbow::neighbors::knn_neighbors;

/// Image 0 looks like group A (images 0..=3) but its tags mostly match
/// group B (images 4..=7), so its tag neighbors are B images plus image 2.
fn noisy_tag_instance() -> (BowMatrix, BowMatrix) {
    let visual = BowMatrix::new(array![
        [2., 1., 1., 0., 0., 0.],
        [1., 2., 1., 0., 0., 0.],
        [1., 1., 2., 0., 0., 0.],
        [2., 2., 0., 0., 0., 0.],
        [0., 0., 0., 2., 1., 1.],
        [0., 0., 0., 1., 2., 1.],
        [0., 0., 0., 1., 1., 2.],
        [0., 0., 0., 2., 2., 0.],
    ])
    .unwrap();
    let tags = BowMatrix::new(array![
        [1., 0., 1., 1.],
        [1., 1., 0., 0.],
        [1., 1., 0., 1.],
        [0., 1., 0., 0.],
        [0., 0., 1., 1.],
        [0., 0., 1., 1.],
        [1., 0., 1., 0.],
        [0., 0., 0., 1.],
    ])
    .unwrap();
    (visual, tags)
}

/// Solves the local problem and checks it against the exhaustive oracle.
/// Returns the solver's and the oracle's coefficient vectors; the optimum
/// need not be unique (images 4 and 5 carry identical tags).
fn solve_and_check(mut p: LocalProblem) -> (Array1<f64>, Array1<f64>) {
    p.solve(&SolverConfig::default()).unwrap();
    assert!(p.converged);
    let (m, b) = p.system();
    let (best, z) = common::l1_by_support_enumeration(&m, &b).expect("feasible");
    let mut full = p.alpha.to_vec();
    full.extend(p.zeta.iter());
    full.extend(p.xi.iter().flatten());
    let z_solver = Array1::from(full);
    let solver_obj: f64 = z_solver.iter().map(|v| v.abs()).sum();
    assert!((solver_obj - best).abs() < 1e-6, "solver {solver_obj} oracle {best}");
    assert!((m.dot(&z_solver) - &b).iter().all(|r| r.abs() < 1e-8));
    let k = p.k();
    (p.alpha.clone(), Array1::from(z[..k].to_vec()))
}

#[test]
fn structured_weights_favor_visually_consistent_neighbor() {
    let (visual, tags) = noisy_tag_instance();
    let a = linear_kernel(&tags, true);
    let nb = knn_neighbors(&a, 4).unwrap();
    assert_eq!(nb.of(0), &[4, 5, 6, 2]);

    let (sr, sr_oracle) = solve_and_check(local_problem(&a, None, &nb, 0));
    let (ssr, ssr_oracle) = solve_and_check(local_problem(&a, Some(&visual), &nb, 0));
    // image 2 is the only neighbor sharing image 0's visual group
    assert!(ssr[3].abs() >= sr[3].abs() - 1e-9, "sr {sr} ssr {ssr}");
    assert!(ssr_oracle[3].abs() >= sr_oracle[3].abs() - 1e-9);
    assert!(ssr[3].abs() > sr[3].abs() + 1e-3);
    let group_b = |x: &Array1<f64>| x.iter().take(3).map(|v| v.abs()).sum::<f64>();
    assert!(group_b(&ssr) < group_b(&sr));
}
