//! Monte Carlo draws of sums of M independent pool resamples.

use crate::rng::Seed;
use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;

const CHUNK: usize = 8192;

/// Above this many pool lookups (M * n) sums are built by pool doubling.
pub const DIRECT_SUM_BUDGET: usize = 50_000_000;

/// n draws of sum_{i<M} X_i with X_i resampled from `pool`.
///
/// Small jobs sum M lookups directly. Large ones build level pools
/// S_{2^j} by adding two random members of S_{2^(j-1)} and assemble M from
/// its binary digits, at cost n log2 M instead of n M. Level 0 is the pool
/// and every later level holds max(n, pool) members; members are reused
/// across outputs, which only mildly correlates the draws.
///
/// Once M is a sizeable fraction of the pool both paths inherit the pool's
/// truncated mean, M times over. That is a property of resampling, not of
/// the doubling.
pub fn sample_sums(pool: &[f64], m: usize, n: usize, seed: Seed) -> Vec<f64> {
    assert!(m >= 1 && n >= 1 && !pool.is_empty());
    let np = pool.len();
    let from_pool = Uniform::new(0, np);
    if m.saturating_mul(n) <= DIRECT_SUM_BUDGET {
        let mut out = vec![0.0; n];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, o)| {
            let mut rng = seed.split("direct", c as u64).rng();
            for v in o.iter_mut() {
                *v = (0..m).map(|_| pool[from_pool.sample(&mut rng)]).sum();
            }
        });
        return out;
    }
    let levels = usize::BITS - m.leading_zeros();
    // level 0 is the pool itself; resampling it first would add a second
    // finite-sample drift on top of the one the direct path already has
    let mut level: Vec<f64> = pool.to_vec();
    let mut out = vec![0.0; n];
    for j in 0..levels {
        let lv = &level;
        let pick = Uniform::new(0, lv.len());
        if m >> j & 1 == 1 {
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, o)| {
                let mut rng = seed.split("pick", ((j as u64) << 32) | c as u64).rng();
                for v in o.iter_mut() {
                    *v += lv[pick.sample(&mut rng)];
                }
            });
        }
        if j + 1 < levels {
            let mut next = vec![0.0; n.max(pool.len())];
            next.par_chunks_mut(CHUNK).enumerate().for_each(|(c, o)| {
                let mut rng = seed.split("double", ((j as u64) << 32) | c as u64).rng();
                for v in o.iter_mut() {
                    *v = lv[pick.sample(&mut rng)] + lv[pick.sample(&mut rng)];
                }
            });
            level = next;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_statistic, quantile_sorted, sorted};
    use rand::Rng as _;
    use std::f64::consts::PI;

    fn cauchy_pool(n: usize) -> Vec<f64> {
        let mut rng = Seed(5).rng();
        (0..n).map(|_| (PI * (rng.gen::<f64>() - 0.5)).tan()).collect()
    }

    // A raw pool drags the sum by M times its truncated mean; mirroring kills that.
    fn mirrored(pool: Vec<f64>) -> Vec<f64> {
        pool.iter().flat_map(|&x| [x, -x]).collect()
    }

    fn quartiles_over_m(sums: &[f64], m: usize) -> Vec<f64> {
        let s = sorted(sums);
        [0.25, 0.5, 0.75].iter().map(|&p| quantile_sorted(&s, p) / m as f64).collect()
    }

    #[test]
    fn doubled_sums_are_cauchy_with_summed_scale() {
        // stability: a sum of M standard Cauchy variables is Cauchy(0, M)
        // exact only while M stays well below the pool size
        let pool = mirrored(cauchy_pool(200_000));
        let m = 64;
        let n = 1_000_000;
        assert!(m * n > DIRECT_SUM_BUDGET);
        let s = sample_sums(&pool, m, n, Seed(9));
        let ks = ks_statistic(&s, |x| 0.5 + (x / m as f64).atan() / PI);
        assert!(ks < 0.02, "ks={ks}");
    }

    #[test]
    fn direct_and_doubled_agree_in_law() {
        // same pool, same M, one run under the budget and one over it
        let pool = cauchy_pool(50_000);
        let m = 1000;
        let direct = sample_sums(&pool, m, 40_000, Seed(1));
        let doubled = sample_sums(&pool, m, 200_000, Seed(2));
        for (a, b) in quartiles_over_m(&direct, m).iter().zip(quartiles_over_m(&doubled, m)) {
            assert!((a - b).abs() < 0.08, "direct {a} doubled {b}");
        }
    }

    #[test]
    fn small_sums_match_stability() {
        let pool = mirrored(cauchy_pool(100_000));
        let s = sample_sums(&pool, 7, 100_000, Seed(3));
        let ks = ks_statistic(&s, |x| 0.5 + (x / 7.0).atan() / PI);
        assert!(ks < 0.01, "ks={ks}");
    }
}
