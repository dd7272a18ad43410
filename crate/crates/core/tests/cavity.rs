use mobedge_core::cavity::{
    density_p_e, p_conv_m, population_step, read_checkpoint, rho_e, rho_e_nodes, rho_e_sensitivity, sample_sums,
    solve_rde, solve_rde_complex, write_checkpoint, CavityError, Population, RdeConfig, RhoConfig,
};
use mobedge_core::grid::GridDensity;
use mobedge_core::stats::{compact_w1, ks_statistic, sorted, Scale};
use mobedge_core::{ModelParams, PotentialSpec, Seed};
use num_complex::Complex64;
use std::f64::consts::PI;

fn cauchy() -> PotentialSpec {
    PotentialSpec::cauchy(0.0, 1.0, 4.0)
}

fn decoupled() -> ModelParams {
    ModelParams::new(2, 0.0)
}

/// Exact quantiles of Cauchy(loc, scale) at the midpoints (i + 1/2)/n.
fn cauchy_quantiles(loc: f64, scale: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| loc + scale * (PI * ((i as f64 + 0.5) / n as f64 - 0.5)).tan()).collect()
}

fn real_pool(samples: Vec<f64>) -> Population<f64> {
    Population { samples, energy: 0.0, eta: 0.0, generation: 0, convergence_history: vec![] }
}

/// CDF of a grid density including its power-law left tail.
fn grid_cdf(d: &GridDensity, x: f64) -> f64 {
    let left = d.values[0] * d.nodes[0].abs() / (d.tail_exponent - 1.0);
    left + d.integral(d.lo(), x)
}

#[test]
fn decoupled_step_ignores_the_pool() {
    let spec = cauchy();
    let a = real_pool(cauchy_quantiles(0.0, 1.0, 20_000));
    let b = real_pool(vec![3.0; 20_000]);
    let sa = population_step(&a, &decoupled(), &spec, Seed(5));
    let sb = population_step(&b, &decoupled(), &spec, Seed(5));
    assert_eq!(sa.samples, sb.samples);
    assert_eq!(sa.generation, 1);
    // 1/(V - 0) of a standard Cauchy is standard Cauchy
    let d = ks_statistic(&sa.samples, |x| 0.5 + x.atan() / PI);
    assert!(d < 1.628 / (20_000f64).sqrt());
}

#[test]
fn symmetric_pool_stays_symmetric() {
    let n = 100_000;
    let pop = real_pool(cauchy_quantiles(0.0, 1.0, n));
    let next = population_step(&pop, &ModelParams::new(2, PI), &cauchy(), Seed(8));
    let bias = next.samples.iter().map(|x| x.signum()).sum::<f64>() / n as f64;
    assert!(bias.abs() < 3.0 / (n as f64).sqrt(), "sign bias {bias}");
}

#[test]
fn complex_step_stays_in_upper_half_plane() {
    let pop: Population<Complex64> = Population::initial(&cauchy(), 0.3, 0.5, 20_000, Seed(1));
    let next = population_step(&pop, &ModelParams::new(3, PI), &cauchy(), Seed(2));
    assert!(next.samples.iter().all(|z| z.im >= 0.0));
}

#[test]
fn decoupled_fixed_point_is_the_inverse_law() {
    let n = 100_000;
    let cfg = RdeConfig { n, ..RdeConfig::default() };
    // inverse of Cauchy(mu, g) is Cauchy(mu / (mu^2 + g^2), g / (mu^2 + g^2))
    for (e, loc, scale) in [(0.0, 0.0, 1.0), (2.0, -0.4, 0.2)] {
        let pop = solve_rde(&cauchy(), &decoupled(), e, &cfg, Seed(11)).unwrap();
        let exact = cauchy_quantiles(loc, scale, n);
        let w1 = compact_w1(&pop.samples, &exact, Scale::of_sorted(&exact));
        assert!(w1 < 0.01, "E={e}: W1 {w1}");
        let ks = ks_statistic(&pop.samples, |x| 0.5 + ((x - loc) / scale).atan() / PI);
        assert!(ks < 0.005, "E={e}: KS {ks}");
    }
}

#[test]
fn small_pools_are_rejected() {
    let cfg = RdeConfig { n: 100, ..RdeConfig::default() };
    assert!(matches!(solve_rde(&cauchy(), &decoupled(), 0.0, &cfg, Seed(1)), Err(CavityError::PoolTooSmall(100))));
    assert!(solve_rde_complex(&cauchy(), &decoupled(), 0.0, 0.0, &RdeConfig::default(), Seed(1)).is_err());
}

#[test]
fn nonconvergence_carries_the_history() {
    let cfg = RdeConfig { n: 10_000, max_iters: 3, tol: 1e-9, ..RdeConfig::default() };
    match solve_rde(&cauchy(), &ModelParams::new(2, PI), 0.0, &cfg, Seed(1)) {
        Err(CavityError::NoConvergence { iterations, history, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(history.len(), 3);
        }
        other => panic!("expected no convergence, got {other:?}"),
    }
}

#[test]
fn converged_pool_is_a_fixed_point_and_reproducible() {
    let params = ModelParams::new(2, PI);
    let cfg = RdeConfig { n: 50_000, ..RdeConfig::default() };
    let pop = solve_rde(&cauchy(), &params, 0.0, &cfg, Seed(3)).unwrap();
    let again = solve_rde(&cauchy(), &params, 0.0, &cfg, Seed(3)).unwrap();
    assert_eq!(pop.samples, again.samples);

    let next = population_step(&pop, &params, &cauchy(), Seed(99));
    let s = sorted(&pop.samples);
    let d = compact_w1(&pop.samples, &next.samples, Scale::of_sorted(&s));
    assert!(d < 2.0 * cfg.effective_tol(), "residual {d}");
}

#[test]
fn p_e_has_quadratic_envelope_and_even_symmetry() {
    let params = ModelParams::new(2, PI);
    let cfg = RdeConfig { n: 200_000, ..RdeConfig::default() };
    let pop = solve_rde(&cauchy(), &params, 0.0, &cfg, Seed(4)).unwrap();
    let p = density_p_e(&pop, &params, 256).density;
    assert!((p.total_mass() - 1.0).abs() < 1e-3);
    let env: Vec<f64> = p.nodes.iter().zip(&p.values).map(|(x, v)| v * (1.0 + x * x)).collect();
    let (lo, hi) = env.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo > 0.0 && hi.is_finite(), "envelope [{lo}, {hi}]");
    // even potential at E = 0: p_0(x) = p_0(-x) up to KDE noise
    for x in [0.05, 0.3, 1.0, 3.0, 10.0] {
        let (a, b) = (p.eval(x), p.eval(-x));
        assert!((a - b).abs() < 0.05 * a.max(b), "x={x}: {a} vs {b}");
    }
}

#[test]
fn decoupled_rho_e_is_the_shifted_potential() {
    let spec = cauchy();
    let params = decoupled();
    let e = 1.3;
    let pop = real_pool(cauchy_quantiles(0.0, 1.0, 20_000));
    let nodes = rho_e_nodes(&params, e, 64);
    let r = rho_e(&pop, &spec, &params, e, &RhoConfig { n_conv: 10_000, ..RhoConfig::default() }, nodes, Seed(2));
    for (x, v) in r.nodes.iter().zip(&r.values) {
        assert!((v - spec.density(x + e)).abs() <= 1e-14, "x={x}");
    }
}

#[test]
fn rho_e_never_exceeds_the_potential_peak() {
    let spec = cauchy();
    let params = ModelParams::new(16, PI);
    let cfg = RdeConfig { n: 50_000, ..RdeConfig::default() };
    for e in [0.0, 3f64.sqrt()] {
        let pop = solve_rde(&spec, &params, e, &cfg, Seed(6)).unwrap();
        let r = rho_e(&pop, &spec, &params, e, &RhoConfig { n_conv: 200_000, ..RhoConfig::default() }, rho_e_nodes(&params, e, 128), Seed(7));
        let sup = r.values.iter().cloned().fold(0.0, f64::max);
        assert!(sup <= spec.sup_norm(), "E={e}: {sup}");
        let env: Vec<f64> = r.nodes.iter().zip(&r.values).map(|(x, v)| v * (1.0 + (x + e).powi(2))).collect();
        assert!(env.iter().all(|&v| v > 0.0 && v.is_finite()));
    }
}

#[test]
fn convolution_of_an_exact_cauchy_pool_is_cauchy() {
    // t = 1 exactly when g = K ln K
    let params = ModelParams::new(2, 2.0 * 2f64.ln());
    assert!((params.t() - 1.0).abs() < 1e-15);
    let pop = real_pool(cauchy_quantiles(0.0, 1.0, 100_000));
    for (m, scale) in [(1usize, 1.0), (3, 3.0)] {
        let kde = p_conv_m(&pop, &params, m, 1_000_000, 256, Seed(12));
        let d = &kde.density;
        assert!((d.total_mass() - 1.0).abs() < 1e-3, "M={m}: mass {}", d.total_mass());
        let ks = (-400..=400)
            .map(|i| i as f64 * 0.05 * scale)
            .map(|x| (grid_cdf(d, x) - (0.5 + (x / scale).atan() / PI)).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "M={m}: KS {ks}");
    }
}

#[test]
fn decoupled_sensitivity_is_the_exact_difference() {
    let spec = cauchy();
    let params = decoupled();
    let rde = RdeConfig { n: 10_000, ..RdeConfig::default() };
    let rho = RhoConfig { n_conv: 10_000, per_side: 64, ..RhoConfig::default() };
    let (e1, e2) = (1.7, 1.72);
    let s = rho_e_sensitivity(&spec, &params, e1, e2, &rde, &rho, Seed(3)).unwrap();
    for (x, v) in s.difference.nodes.iter().zip(&s.difference.values) {
        let exact = spec.density(x + e2) - spec.density(x + e1);
        assert!((v - exact).abs() <= 1e-14, "x={x}");
    }
    assert!(rho_e_sensitivity(&spec, &params, e2, e1, &rde, &rho, Seed(3)).is_err());
    assert!(rho_e_sensitivity(&spec, &params, 0.0, 0.5, &rde, &rho, Seed(3)).is_err());
}

#[test]
fn decoupled_complex_pool_has_half_mean_imaginary_part() {
    // Im 1/(V - i) = 1/(V^2 + 1), whose Cauchy mean is 1/2
    let cfg = RdeConfig { n: 100_000, ..RdeConfig::default() };
    let (pop, summary) = solve_rde_complex(&cauchy(), &decoupled(), 0.0, 1.0, &cfg, Seed(9)).unwrap();
    assert!(pop.samples.iter().all(|z| z.im > 0.0 && z.im <= 1.0));
    assert!((summary.mean - 0.5).abs() < 0.01, "{}", summary.mean);
}

#[test]
fn localized_imaginary_parts_shrink_with_eta() {
    let params = ModelParams::new(2, PI);
    let cfg = RdeConfig { n: 20_000, ..RdeConfig::default() };
    let medians: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eta| {
            let (pop, s) = solve_rde_complex(&cauchy(), &params, 8.0, eta, &cfg, Seed(10)).unwrap();
            assert!(pop.samples.iter().all(|z| z.im >= 0.0));
            s.median
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn tail_constant_is_stable_under_doubling() {
    let params = ModelParams::new(4, PI);
    let t2 = params.t() * params.t();
    let k = params.k as f64;
    let constant = |n: usize| {
        let pop = solve_rde(&cauchy(), &params, 0.5, &RdeConfig { n, ..RdeConfig::default() }, Seed(21)).unwrap();
        let q: Vec<f64> = sample_sums(&pop.samples, params.k, n, Seed(22)).iter().map(|s| (t2 * s).abs()).collect();
        [1e-3, 1e-2, 1e-1, 1.0]
            .iter()
            .map(|&a| q.iter().filter(|&&v| v >= a).count() as f64 / n as f64 * a.powf(0.75) / k)
            .fold(0.0, f64::max)
    };
    let (c1, c2) = (constant(50_000), constant(100_000));
    assert!(c1 > 0.0 && (c2 / c1 - 1.0).abs() < 0.2, "{c1} vs {c2}");
}

#[test]
fn checkpoints_round_trip() {
    let dir = std::env::temp_dir().join(format!("mobedge-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let real = real_pool(cauchy_quantiles(0.0, 1.0, 10_000));
    let p = dir.join("real.pool");
    write_checkpoint(&real, &p).unwrap();
    assert_eq!(std::fs::metadata(&p).unwrap().len(), 32 + 8 * 10_000);
    let back: Population<f64> = read_checkpoint(&p).unwrap();
    assert_eq!(back.samples, real.samples);
    assert!(read_checkpoint::<Complex64>(&p).is_err());

    let cplx: Population<Complex64> = Population::initial(&cauchy(), 0.0, 0.25, 10_000, Seed(4));
    let q = dir.join("complex.pool");
    write_checkpoint(&cplx, &q).unwrap();
    let back: Population<Complex64> = read_checkpoint(&q).unwrap();
    assert_eq!(back.samples, cplx.samples);
    assert_eq!(back.eta, 0.25);

    std::fs::write(dir.join("junk.pool"), b"not a checkpoint at all, clearly").unwrap();
    assert!(read_checkpoint::<f64>(&dir.join("junk.pool")).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
