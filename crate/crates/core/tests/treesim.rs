use mobedge_core::treesim::{
    dense_resolvent_oracle, fractional_moment_bound, imag_part_distribution, node_count, phi_l_monte_carlo,
    sample_resolvent_tree, Boundary, BoundaryMode, ResolventSample, TreeError, TreeInstance,
};
use mobedge_core::cavity::RdeConfig;
use mobedge_core::{ModelParams, PotentialSpec, Seed};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn cauchy() -> PotentialSpec {
    PotentialSpec::cauchy(0.0, 1.0, 4.0)
}

fn z(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn node_counts_follow_the_geometric_sum() {
    assert_eq!(node_count(2, 5), 63);
    assert_eq!(node_count(3, 0), 1);
    assert_eq!(node_count(4, 3), (4usize.pow(4) - 1) / 3);
}

#[test]
fn decoupled_tree_is_diagonal() {
    let params = ModelParams::new(2, 0.0);
    let tree = TreeInstance::generate(&cauchy(), 2, 4, z(0.2, 0.1), &Boundary::Free, Seed(1)).unwrap();
    let r = ResolventSample::of_tree(&tree, params.t());
    assert_eq!(r.root_value, 1.0 / (tree.potentials[0] - tree.z));
    assert_eq!(r.path_product, Complex64::default());
    let est = phi_l_monte_carlo(&cauchy(), &params, z(0.2, 0.1), 3, 0.5, 50, &Boundary::Free, Seed(2)).unwrap();
    assert!(est.degenerate() && est.moment == 0.0);
}

#[test]
fn depth_one_matches_the_hand_formula() {
    let t = 0.7;
    let zz = z(0.3, 0.1);
    let tree = TreeInstance { k: 2, depth: 1, potentials: vec![0.4, -1.2, 2.5], z: zz, leaf_values: None };
    let r = ResolventSample::of_tree(&tree, t);
    let (v0, v1, v2) = (0.4, -1.2, 2.5);
    let hand = 1.0 / (v0 - zz - t * t / (v1 - zz) - t * t / (v2 - zz));
    assert!((r.root_value - hand).norm() < 1e-14);
    // 3x3 inverse by cofactors: R_01 = t (v2 - z) / det
    let det = (v0 - zz) * (v1 - zz) * (v2 - zz) - t * t * (v1 - zz) - t * t * (v2 - zz);
    assert!((r.path_product - t * (v2 - zz) / det).norm() < 1e-14);
}

fn oracle_errors(tree: &TreeInstance, t: f64) -> (f64, f64, f64, f64) {
    let dense = dense_resolvent_oracle(tree, t).unwrap();
    let cav = tree.cavity_values(t);
    let root = (cav[0] - dense.column[0]).norm();
    let off = (1..tree.len())
        .map(|v| (tree.product_expansion(&cav, t, v) - dense.column[v]).norm())
        .fold(0.0, f64::max);
    (root, off, dense.ward_residual(tree.z), dense.asymmetry())
}

#[test]
fn schur_recursion_matches_dense_solve() {
    let params = ModelParams::new(2, PI);
    let t = params.t();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let tree = TreeInstance::generate(&cauchy(), 2, 5, z(0.3, 0.1), &Boundary::Free, Seed(17).split("tree", i)).unwrap();
        let e = oracle_errors(&tree, t);
        worst = (worst.0.max(e.0), worst.1.max(e.1), worst.2.max(e.2), worst.3.max(e.3));
    }
    assert!(worst.0 < 1e-9, "root {:e}", worst.0);
    assert!(worst.1 < 1e-9, "product expansion {:e}", worst.1);
    assert!(worst.2 < 1e-10, "ward {:e}", worst.2);
    assert!(worst.3 < 1e-12, "row vs column {:e}", worst.3);
}

#[test]
fn hamiltonian_is_the_tree_adjacency() {
    let tree = TreeInstance::generate(&cauchy(), 3, 2, z(0.0, 1.0), &Boundary::Free, Seed(3)).unwrap();
    let h = tree.hamiltonian(0.5).unwrap();
    assert_eq!(h.nrows(), 13);
    assert_eq!(h, h.transpose());
    let edges = (0..13).flat_map(|i| (0..i).map(move |j| (i, j))).filter(|&(i, j)| h[(i, j)] != 0.0).count();
    assert_eq!(edges, 12);
    assert_eq!(h[(4, 1)], -0.5);
    let d = DMatrix::from_diagonal(&h.diagonal());
    assert_eq!(d.diagonal().as_slice(), tree.potentials.as_slice());
}

#[test]
fn oracle_refuses_large_or_cavity_trees() {
    let big = TreeInstance::generate(&cauchy(), 2, 12, z(0.0, 0.1), &Boundary::Free, Seed(1)).unwrap();
    assert!(matches!(dense_resolvent_oracle(&big, 0.1), Err(TreeError::TooLarge { .. })));
    let pool = vec![z(0.1, 0.2); 16];
    let cav = TreeInstance::generate(&cauchy(), 2, 2, z(0.0, 0.1), &Boundary::Cavity(pool), Seed(1)).unwrap();
    assert!(matches!(dense_resolvent_oracle(&cav, 0.1), Err(TreeError::OracleBoundary)));
}

#[test]
fn real_axis_is_rejected() {
    let r = TreeInstance::generate(&cauchy(), 2, 2, z(0.0, 0.0), &Boundary::Free, Seed(1));
    assert!(matches!(r, Err(TreeError::NotInUpperHalfPlane(_))));
    assert!(matches!(
        TreeInstance::generate(&cauchy(), 4, 40, z(0.0, 1.0), &Boundary::Free, Seed(1)),
        Err(TreeError::TooLarge { .. })
    ));
}

#[test]
fn samples_are_bit_reproducible() {
    let params = ModelParams::new(3, PI);
    let a = sample_resolvent_tree(&cauchy(), &params, z(1.0, 1e-3), 6, &Boundary::Free, Seed(44)).unwrap();
    let b = sample_resolvent_tree(&cauchy(), &params, z(1.0, 1e-3), 6, &Boundary::Free, Seed(44)).unwrap();
    assert_eq!(a, b);
    let e1 = phi_l_monte_carlo(&cauchy(), &params, z(5.0, 1e-3), 4, 0.5, 200, &Boundary::Free, Seed(5)).unwrap();
    let e2 = phi_l_monte_carlo(&cauchy(), &params, z(5.0, 1e-3), 4, 0.5, 200, &Boundary::Free, Seed(5)).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn unit_eta_keeps_imaginary_part_in_unit_interval() {
    let params = ModelParams::new(2, PI);
    let rde = RdeConfig { n: 10_000, ..RdeConfig::default() };
    let stats = imag_part_distribution(&cauchy(), &params, 0.0, &[1.0], 500, 4, BoundaryMode::Cavity, &rde, Seed(8)).unwrap();
    assert_eq!(stats.len(), 1);
    assert!(stats[0].median > 0.0 && stats[0].median <= 1.0 && stats[0].mean <= 1.0);
    for i in 0..200 {
        let r = sample_resolvent_tree(&cauchy(), &params, z(0.0, 1.0), 8, &Boundary::Free, Seed(8).split("x", i)).unwrap();
        assert!(r.root_value.im > 0.0 && r.root_value.im <= 1.0);
    }
}

#[test]
fn shallow_free_boundary_and_bad_ladders_are_rejected() {
    let params = ModelParams::new(2, PI);
    let cfg = RdeConfig::default();
    let shallow = imag_part_distribution(&cauchy(), &params, 0.0, &[1e-2], 10, 3, BoundaryMode::Free, &cfg, Seed(1));
    assert!(matches!(shallow, Err(TreeError::BoundaryTooShallow { .. })));
    let rising = imag_part_distribution(&cauchy(), &params, 0.0, &[1e-3, 1e-2], 10, 40, BoundaryMode::Free, &cfg, Seed(1));
    assert!(matches!(rising, Err(TreeError::Invalid(_))));
}

#[test]
fn fractional_moment_stays_below_the_bound() {
    let spec = cauchy();
    let params = ModelParams::new(2, PI);
    for s in [0.5, 0.9] {
        for l in [4, 8] {
            let est = phi_l_monte_carlo(&spec, &params, z(0.0, 1e-3), l, s, 2000, &Boundary::Free, Seed(31)).unwrap();
            let bound = fractional_moment_bound(&spec, &params, s, l);
            assert!(est.moment_ci.0 <= bound, "s={s} L={l}: {} > {bound}", est.moment_ci.0);
        }
    }
}

#[test]
fn phi_estimate_serializes_with_short_keys() {
    let params = ModelParams::new(2, PI);
    let est = phi_l_monte_carlo(&cauchy(), &params, z(5.0, 1e-2), 3, 0.5, 100, &Boundary::Free, Seed(2)).unwrap();
    let v = serde_json::to_value(&est).unwrap();
    for key in ["E", "eta", "s", "L", "phi_L", "ci_lo", "ci_hi", "n_samples", "seed"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn cavity_boundary_draws_leaves_from_the_pool() {
    let pool = vec![z(0.25, 0.5); 8];
    let tree = TreeInstance::generate(&cauchy(), 2, 3, z(0.0, 0.1), &Boundary::Cavity(pool), Seed(6)).unwrap();
    let leaves = tree.leaf_values.as_ref().unwrap();
    assert_eq!(leaves.len(), 8);
    assert!(leaves.iter().all(|&v| v == z(0.25, 0.5)));
    let cav = tree.cavity_values(0.3);
    assert!(cav[7..].iter().all(|&v| v == z(0.25, 0.5)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resolvent_entries_are_bounded_by_inverse_eta(
        seed in any::<u64>(),
        re in -5.0..5.0f64,
        log_eta in -4.0..0.0f64,
        k in 2usize..4,
        depth in 1usize..6,
    ) {
        let eta = 10f64.powf(log_eta);
        let params = ModelParams::new(k, PI);
        let r = sample_resolvent_tree(&cauchy(), &params, z(re, eta), depth, &Boundary::Free, Seed(seed)).unwrap();
        prop_assert!(r.root_value.im > 0.0);
        prop_assert!(r.path_product.norm() <= (1.0 + 1e-12) / eta);
        prop_assert!(r.cavity_values.iter().all(|c| c.im > 0.0 && c.norm() <= (1.0 + 1e-12) / eta));
    }
}
