//! Order statistics and resampling helpers shared by the solvers.

use crate::rng::Seed;
use rand::Rng as _;

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Centre and half-IQR used to compactify heavy-tailed samples.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub median: f64,
    pub half_iqr: f64,
}

impl Scale {
    pub fn of_sorted(sorted: &[f64]) -> Self {
        let median = quantile_sorted(sorted, 0.5);
        let half_iqr = 0.5 * (quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25));
        Scale { median, half_iqr: if half_iqr > 0.0 { half_iqr } else { 1.0 } }
    }

    /// Maps the real line onto (-pi/2, pi/2); the IQR maps to width pi/2.
    pub fn compactify(&self, x: f64) -> f64 {
        ((x - self.median) / self.half_iqr).atan()
    }
}

/// Wasserstein-1 distance between two equally sized samples after
/// compactification by `scale`, in units of the compactified IQR (pi/2).
///
/// The raw W1 of a law with 1/x^2 tails is infinite, so the comparison is
/// made on arctan((x - m) / (IQR/2)), which is bounded and keeps the
/// ordering of the samples.
pub fn compact_w1(a: &[f64], b: &[f64], scale: Scale) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let ya = sorted(&a.iter().map(|&x| scale.compactify(x)).collect::<Vec<_>>());
    let yb = sorted(&b.iter().map(|&x| scale.compactify(x)).collect::<Vec<_>>());
    let s: f64 = ya.iter().zip(&yb).map(|(p, q)| (p - q).abs()).sum();
    s / a.len() as f64 / std::f64::consts::FRAC_PI_2
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical KS value at significance 1% (asymptotic).
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Percentile bootstrap interval for `stat` evaluated on resamples.
pub fn bootstrap_ci<F: Fn(&[f64]) -> f64>(
    data: &[f64],
    resamples: usize,
    level: f64,
    seed: Seed,
    stat: F,
) -> (f64, f64) {
    let mut rng = seed.rng();
    let n = data.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = data[rng.gen_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let a = 0.5 * (1.0 - level);
    (quantile_sorted(&stats, a), quantile_sorted(&stats, 1.0 - a))
}

/// Hill estimate of the density tail exponent `a` in p(x) ~ C |x|^-a from
/// the largest `frac` of |x|, together with the two-sided coefficient C.
pub fn hill_tail(samples: &[f64], frac: f64) -> Option<(f64, f64)> {
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).filter(|x| x.is_finite()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    let n = abs.len();
    let k = ((n as f64 * frac).round() as usize).max(10);
    if k + 1 >= n {
        return None;
    }
    let x0 = abs[k];
    if x0 <= 0.0 {
        return None;
    }
    let lx0 = x0.ln();
    let gamma = abs[..k].iter().map(|x| x.ln() - lx0).sum::<f64>() / k as f64;
    if gamma <= 0.0 {
        return None;
    }
    // P(|X| > x) ~ (k/n) (x/x0)^(-1/gamma); density per side is half of its derivative
    let tail_index = 1.0 / gamma;
    let exponent = 1.0 + tail_index;
    let coefficient = 0.5 * (k as f64 / n as f64) * tail_index * x0.powf(tail_index);
    Some((exponent, coefficient))
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
