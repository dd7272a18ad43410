//! Kernel density estimates for heavy-tailed pools.
//!
//! Smoothing is done in u = asinh(x / s0), which is linear near the origin
//! and logarithmic in the tails, so a single Silverman bandwidth serves both
//! the bulk and the 1/x^2 tails. Samples are linearly binned on a mesh of
//! h/20 before the Gaussian sum.

use super::convolution::sample_sums;
use super::population::Population;
use crate::grid::{bilateral_log_nodes, GridDensity};
use crate::model::ModelParams;
use crate::rng::Seed;
use crate::stats::{hill_tail, quantile_sorted, sorted};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeDensity {
    pub density: GridDensity,
    pub bandwidth: f64,
    /// Hill fit on the extreme 1%: (exponent, coefficient).
    pub tail_fit: Option<(f64, f64)>,
    /// Set when the fitted exponent leaves [1.8, 2.2].
    pub tail_flag: bool,
}

const TAIL_RANGE: (f64, f64) = (1.8, 2.2);
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Density estimate of `samples` tabulated on `nodes`.
pub fn kde_density(samples: &[f64], nodes: Vec<f64>) -> KdeDensity {
    let xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    let n = xs.len() as f64;
    let abs = sorted(&xs.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let s0 = match quantile_sorted(&abs, 0.5) {
        m if m > 0.0 => m,
        _ => 1.0,
    };
    let us = sorted(&xs.iter().map(|x| (x / s0).asinh()).collect::<Vec<_>>());
    let mean = us.iter().sum::<f64>() / n;
    let sd = (us.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(&us, 0.75) - quantile_sorted(&us, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);

    // linear binning on a mesh of h/20
    let delta = h / 20.0;
    let (u0, u1) = (us[0] - 10.0 * h, us[us.len() - 1] + 10.0 * h);
    let nb = ((u1 - u0) / delta).ceil() as usize + 2;
    let mut w = vec![0.0; nb];
    for &u in &us {
        let p = (u - u0) / delta;
        let i = p.floor() as usize;
        let f = p - i as f64;
        w[i] += 1.0 - f;
        w[i + 1] += f;
    }
    let reach = (8.0 * h / delta).ceil() as isize;
    let fu = |u: f64| -> (f64, f64) {
        let c = ((u - u0) / delta).round() as isize;
        let (mut f, mut df) = (0.0, 0.0);
        for i in (c - reach).max(0)..=(c + reach).min(nb as isize - 1) {
            let wi = w[i as usize];
            if wi == 0.0 {
                continue;
            }
            let z = (u - (u0 + i as f64 * delta)) / h;
            let k = wi * (-0.5 * z * z).exp();
            f += k;
            df -= k * z;
        }
        let norm = INV_SQRT_2PI / (n * h);
        (f * norm, df * norm / h)
    };

    let mut values = Vec::with_capacity(nodes.len());
    let mut slopes = Vec::with_capacity(nodes.len());
    for &x in &nodes {
        let r2 = s0 * s0 + x * x;
        let (f, df) = fu((x / s0).asinh());
        values.push(f / r2.sqrt());
        slopes.push(df / r2 - f * x / (r2 * r2.sqrt()));
    }

    let tail_fit = hill_tail(&xs, 0.01);
    let tail_flag = tail_fit.map_or(true, |(a, _)| a < TAIL_RANGE.0 || a > TAIL_RANGE.1);
    let exponent = match tail_fit {
        Some((a, _)) if !tail_flag => a,
        _ => 2.0,
    };
    let mut density = GridDensity::new(nodes, values, slopes, exponent);
    if let Some((_, c)) = tail_fit {
        density.tail_coefficient = c;
    }
    KdeDensity { density, bandwidth: h, tail_fit, tail_flag }
}

fn density_nodes(params: &ModelParams, per_side: usize) -> Vec<f64> {
    let inner = (1e-2 * params.delta()).clamp(1e-300, 1e-3);
    bilateral_log_nodes(0.0, inner, 1e3, per_side)
}

/// p_E: the density of Gamma from a real pool.
pub fn density_p_e(pop: &Population<f64>, params: &ModelParams, per_side: usize) -> KdeDensity {
    kde_density(&pop.samples, density_nodes(params, per_side))
}

/// p_E^(M): the density of t^2 times a sum of M pool resamples, from n draws.
pub fn p_conv_m(pop: &Population<f64>, params: &ModelParams, m: usize, n: usize, per_side: usize, seed: Seed) -> KdeDensity {
    let t2 = params.t() * params.t();
    let sums: Vec<f64> = sample_sums(&pop.samples, m, n, seed).into_iter().map(|s| t2 * s).collect();
    kde_density(&sums, density_nodes(params, per_side))
}
