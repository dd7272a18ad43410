use mobedge_core::cavity::{RdeConfig, RhoConfig};
use mobedge_core::potential::edge_window;
use mobedge_core::spectrum::{
    classification_consistent, classify, derivative_sign, free_energy, monotonicity_check, scan_edges, Direction,
    LambdaProvider, Phase, PhasePoint, Pipeline, ScanConfig, SpectrumError, Trend, MARGIN_FLOOR,
};
use mobedge_core::treesim::{phi_l_monte_carlo, Boundary, BoundaryMode};
use mobedge_core::{ModelParams, PotentialSpec, Seed};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn cauchy() -> PotentialSpec {
    PotentialSpec::cauchy(0.0, 1.0, 4.0)
}

/// Small and fast: enough resolution for signs, not for edges.
fn coarse_pipeline(k: usize, g: f64) -> Pipeline {
    let mut p = Pipeline::new(cauchy(), ModelParams::new(k, g), Seed(2024));
    p.rde = RdeConfig { n: 10_000, ..RdeConfig::default() };
    p.rho = RhoConfig { n_conv: 200_000, per_side: 128, ..RhoConfig::default() };
    p.grid_per_side = 96;
    p
}

/// lambda(E) = a + b E with a fixed noise.
struct Linear {
    a: f64,
    b: f64,
    noise: f64,
}

impl LambdaProvider for Linear {
    fn lambda(&self, energy: f64) -> Result<(f64, f64), SpectrumError> {
        Ok((self.a + self.b * energy, self.noise))
    }
}

#[test]
fn free_energy_vanishes_at_inverse_k() {
    for k in [2usize, 1024, 4096] {
        assert!(free_energy(k, 1.0 / k as f64).abs() < 1e-15);
    }
    assert!(free_energy(4, 0.1) < 0.0 && free_energy(4, 0.5) > 0.0);
}

#[test]
fn flat_provider_is_flagged_flat() {
    let root = 3f64.sqrt();
    let r = monotonicity_check(&Linear { a: 1e-3, b: 0.0, noise: 1e-12 }, &cauchy(), root, edge_window(4.0) / 2.0, 9).unwrap();
    assert!(r.flat);
    assert_eq!(r.violations, 0);
    assert_eq!(r.expected, Trend::NonIncreasing);
    assert_eq!(r.energies.len(), 9);
    assert!((r.energies[8] - r.energies[0] - edge_window(4.0)).abs() < 1e-15);
}

#[test]
fn violations_follow_the_sign_of_the_density_slope() {
    let root = 3f64.sqrt();
    let h = edge_window(4.0) / 2.0;
    let down = Linear { a: 1.0, b: -1.0, noise: 1e-9 };
    let up = Linear { a: 1.0, b: 1.0, noise: 1e-9 };
    assert_eq!(monotonicity_check(&down, &cauchy(), root, h, 9).unwrap().violations, 0);
    assert_eq!(monotonicity_check(&up, &cauchy(), root, h, 9).unwrap().violations, 8);
    let mirrored = monotonicity_check(&up, &cauchy(), -root, h, 9).unwrap();
    assert_eq!(mirrored.expected, Trend::NonDecreasing);
    assert_eq!(mirrored.violations, 0);
    assert_eq!(monotonicity_check(&down, &cauchy(), -root, h, 9).unwrap().violations, 8);
    // differences of 1.6e-5 per step are inside a 1e-4 noise floor
    let noisy = Linear { a: 1.0, b: 1.0, noise: 1e-4 };
    assert_eq!(monotonicity_check(&noisy, &cauchy(), root, h, 9).unwrap().violations, 0);
}

#[test]
fn monotonicity_preconditions_are_enforced() {
    let p = Linear { a: 1.0, b: 0.0, noise: 0.0 };
    assert!(matches!(derivative_sign(&cauchy(), 0.0), Err(SpectrumError::HypothesisViolated(_))));
    assert!(matches!(monotonicity_check(&p, &cauchy(), 0.0, 1e-5, 9), Err(SpectrumError::HypothesisViolated(_))));
    assert!(matches!(monotonicity_check(&p, &cauchy(), 2.0, 1e-3, 9), Err(SpectrumError::InvalidScan(_))));
    assert!(matches!(monotonicity_check(&p, &cauchy(), 2.0, 1e-5, 1), Err(SpectrumError::InvalidScan(_))));
    assert_eq!(derivative_sign(&cauchy(), 2.0).unwrap(), Trend::NonIncreasing);
    assert_eq!(derivative_sign(&cauchy(), -2.0).unwrap(), Trend::NonDecreasing);
}

#[test]
fn scans_reject_bad_grids() {
    let p = coarse_pipeline(16, 0.5);
    assert!(matches!(scan_edges(&p, &[0.0, 0.0], &[0.9], &ScanConfig::default()), Err(SpectrumError::InvalidScan(_))));
    assert!(matches!(scan_edges(&p, &[0.0], &[0.9], &ScanConfig::default()), Err(SpectrumError::InvalidScan(_))));
    assert!(matches!(scan_edges(&p, &[0.0, 1.0], &[], &ScanConfig::default()), Err(SpectrumError::InvalidScan(_))));
}

#[test]
fn weak_disorder_coupling_has_no_edges() {
    // g below pi/4 puts 1/(4g) above the peak of the density; at K = 16 the
    // finite-K excess of K lambda over 4 g rho still lifts g = 0.5 above 1
    let g = 0.3;
    let p = coarse_pipeline(16, g);
    let energies: Vec<f64> = (-4..=4).map(|i| i as f64).collect();
    let s = p.params.s_ladder(4);
    let r = scan_edges(&p, &energies, &s, &ScanConfig::default()).unwrap();
    assert!(r.predicted.is_empty());
    assert!(r.crossings.is_empty());
    assert_eq!(r.s, *s.last().unwrap());
    assert!(r.points.iter().all(|pt| pt.phase == Phase::PurePoint), "{:?}", r.points);
    assert_eq!(r.intervals.len(), 1);
    assert_eq!(r.intervals[0].phase, Phase::PurePoint);
}

#[test]
fn crossings_alternate_and_stay_inside_the_scan() {
    let p = coarse_pipeline(64, PI);
    let energies: Vec<f64> = (0..=16).map(|i| -4.0 + 0.5 * i as f64).collect();
    let s = p.params.s_ladder(4);
    let r = scan_edges(&p, &energies, &s, &ScanConfig { resolution: 1e-2 }).unwrap();
    assert_eq!(r.predicted.len(), 2);
    assert!((r.predicted[1] - 3f64.sqrt()).abs() < 1e-12);
    assert!(r.crossings_alternate());
    assert!(r.crossings.iter().all(|c| c.energy > -4.0 && c.energy < 4.0));
    assert_eq!(r.crossings.len(), 2, "{:?}", r.crossings);
    assert_eq!(r.crossings[0].direction, Direction::PpToAc);
    assert_eq!(r.crossings[1].direction, Direction::AcToPp);
    assert_eq!(r.intervals.iter().map(|i| i.phase).collect::<Vec<_>>(), vec![Phase::PurePoint, Phase::AbsolutelyContinuous, Phase::PurePoint]);
    assert!(r.rule_consistent());
    for c in &r.crossings {
        assert!((c.neighborhood.1 - c.neighborhood.0 - 2.0 * r.varpi).abs() < 1e-12);
        assert_eq!(c.unpaired, c.distance.unwrap() > 10.0 * r.varpi);
    }
    // points are sorted and every bisection point near a crossing is uncertain
    assert!(r.points.windows(2).all(|w| w[0].energy <= w[1].energy));
}

#[test]
fn free_energy_is_nonincreasing_along_the_ladder() {
    let p = coarse_pipeline(64, PI);
    let prep = p.prepare(0.5).unwrap();
    let ladder = p.params.s_ladder(4);
    let phis: Vec<(f64, f64)> = ladder
        .iter()
        .map(|&s| {
            let r = p.lambda_prepared(&prep, s).unwrap();
            (free_energy(64, r.lambda), (r.cw_upper - r.cw_lower) / r.lambda)
        })
        .collect();
    for w in phis.windows(2) {
        assert!(w[1].0 <= w[0].0 + w[0].1 + w[1].1, "{phis:?}");
    }
}

#[test]
fn far_energies_are_localized_on_trees() {
    let spec = cauchy();
    let params = ModelParams::new(2, PI);
    let z = Complex64::new(-20.0, 1e-4);
    let rde = RdeConfig { n: 20_000, ..RdeConfig::default() };
    let b = Boundary::build(BoundaryMode::Cavity, &spec, &params, z, &rde, Seed(5)).unwrap();
    let est = phi_l_monte_carlo(&spec, &params, z, 12, 0.9, 4000, &b, Seed(9)).unwrap();
    assert!(est.ci_hi < -1.0, "{est:?}");
}

#[test]
fn consistency_ignores_uncertain_and_near_level_points() {
    let spec = cauchy();
    let pt = |e: f64, phase| PhasePoint { energy: e, s: 0.9, k_lambda: 1.0, phase, free_energy: 0.0, cw_lower: 1.0, cw_upper: 1.0 };
    let good = vec![pt(0.0, Phase::AbsolutelyContinuous), pt(3.0, Phase::PurePoint), pt(1.75, Phase::Uncertain)];
    assert!(classification_consistent(&good, &spec, PI, 1e-9));
    let bad = vec![pt(3.0, Phase::AbsolutelyContinuous)];
    assert!(!classification_consistent(&bad, &spec, PI, 1e-9));
    assert!(classification_consistent(&bad, &spec, PI, 1.0));
}

proptest! {
    #[test]
    fn classification_respects_the_margin(kl in 0.0..3.0f64, half in 0.0..0.5f64) {
        let margin = half.max(MARGIN_FLOOR);
        let phase = classify(kl, margin);
        prop_assert_eq!(phase == Phase::PurePoint, kl < 1.0 - margin);
        prop_assert_eq!(phase == Phase::AbsolutelyContinuous, kl > 1.0 + margin);
        prop_assert_eq!(classify(kl, margin), classify(kl, margin));
    }
}
