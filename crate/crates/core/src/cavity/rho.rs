//! rho_E(x) = E_Y[rho(x + E + Y)] with Y = t^2 sum_{i<K} Gamma_i.
//!
//! The outer convolution with the potential is done exactly per draw of Y,
//! so only the Y-sum is sampled. Draws of Y are merged into narrow bins and
//! each bin enters through its mean plus a second-order variance term.

use super::convolution::sample_sums;
use super::population::{solve_rde, Population, RdeConfig};
use super::CavityError;
use crate::grid::{bilateral_log_nodes, merge_nodes, GridDensity};
use crate::model::ModelParams;
use crate::potential::PotentialSpec;
use crate::rng::Seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoConfig {
    pub n_conv: usize,
    /// Nodes per side of each of the two log grids (about 0 and about -E).
    pub per_side: usize,
    /// Bin width for merging Y draws, relative to the potential's scale.
    pub bin_width: f64,
}

impl Default for RhoConfig {
    fn default() -> Self {
        RhoConfig { n_conv: 1_000_000, per_side: 512, bin_width: 1e-4 }
    }
}

/// Log grid about 0 reaching down to Delta/100, merged with a coarser one
/// about -E.
pub fn rho_e_nodes(params: &ModelParams, energy: f64, per_side: usize) -> Vec<f64> {
    let inner = (1e-2 * params.delta()).clamp(1e-300, 1e-3);
    let a = bilateral_log_nodes(0.0, inner, 1e3, per_side);
    let b = bilateral_log_nodes(-energy, 1e-3, 1e3, per_side);
    merge_nodes(&a, &b)
}

pub(crate) fn draw_y(pop: &Population<f64>, params: &ModelParams, n_conv: usize, seed: Seed) -> Vec<f64> {
    let t2 = params.t() * params.t();
    let mut y = sample_sums(&pop.samples, params.k - 1, n_conv, seed);
    for v in y.iter_mut() {
        *v *= t2;
    }
    y
}

struct Bin {
    weight: f64,
    mean: f64,
    var: f64,
}

fn bins(mut y: Vec<f64>, width: f64) -> Vec<Bin> {
    y.retain(|v| v.is_finite());
    y.sort_by(f64::total_cmp);
    let n = y.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < y.len() {
        let start = y[i];
        let (mut c, mut s1, mut s2) = (0.0, 0.0, 0.0);
        while i < y.len() && y[i] - start <= width {
            let d = y[i] - start;
            c += 1.0;
            s1 += d;
            s2 += d * d;
            i += 1;
        }
        let m = s1 / c;
        out.push(Bin { weight: c / n, mean: start + m, var: (s2 / c - m * m).max(0.0) });
    }
    out
}

fn rho_from_y(y: Vec<f64>, spec: &PotentialSpec, energy: f64, nodes: Vec<f64>, bin_width: f64) -> GridDensity {
    let bins = bins(y, bin_width * spec.bulk().1);
    let vs: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&x| {
            let (mut v, mut d) = (0.0, 0.0);
            for b in &bins {
                let z = x + energy + b.mean;
                v += b.weight * (spec.density(z) + 0.5 * b.var * spec.second_derivative(z));
                d += b.weight * spec.derivative(z);
            }
            (v, d)
        })
        .collect();
    let (values, slopes) = vs.into_iter().unzip();
    GridDensity::new(nodes, values, slopes, 2.0)
}

/// rho_E on `nodes` from a converged real pool. The same `seed` at two
/// energies reuses the same resampling indices.
pub fn rho_e(pop: &Population<f64>, spec: &PotentialSpec, params: &ModelParams, energy: f64, config: &RhoConfig, nodes: Vec<f64>, seed: Seed) -> GridDensity {
    let y = draw_y(pop, params, config.n_conv, seed);
    rho_from_y(y, spec, energy, nodes, config.bin_width)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSign {
    Negative,
    Positive,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub e1: f64,
    pub e2: f64,
    /// rho_{E2} - rho_{E1} on the shared grid.
    pub difference: GridDensity,
    /// max |diff| (1+|x|)^(1+1/L) / |E2 - E1|.
    pub lipschitz_ratio: f64,
    pub window_sign: WindowSign,
    /// Extremes of diff / |E2 - E1| over |x| <= 1/(4L).
    pub window_min: f64,
    pub window_max: f64,
    /// Three standard errors of the coupled difference on the window.
    pub noise: f64,
    pub generations: usize,
}

/// Finite difference of rho_E between two energies with common random
/// numbers: both pools use one seed and one generation count, and both
/// Y-samples reuse the same indices.
pub fn rho_e_sensitivity(
    spec: &PotentialSpec,
    params: &ModelParams,
    e1: f64,
    e2: f64,
    rde: &RdeConfig,
    rho: &RhoConfig,
    seed: Seed,
) -> Result<Sensitivity, CavityError> {
    let de = e2 - e1;
    if !(de > 0.0 && de <= 0.1) {
        return Err(CavityError::InvalidParams("need E1 < E2 <= E1 + 0.1".into()));
    }
    let pool_seed = seed.split("pool", 0);
    let pop1 = solve_rde(spec, params, e1, rde, pool_seed)?;
    let fixed = RdeConfig { generations: Some(pop1.generation), ..*rde };
    let pop2 = solve_rde(spec, params, e2, &fixed, pool_seed)?;
    let nodes = rho_e_nodes(params, e1, rho.per_side);
    let y_seed = seed.split("rho", 0);
    let y1 = draw_y(&pop1, params, rho.n_conv, y_seed);
    let y2 = draw_y(&pop2, params, rho.n_conv, y_seed);

    let l = spec.regularity_constant;
    let w = 1.0 / (4.0 * l);
    let noise = [-w, -0.5 * w, 0.0, 0.5 * w, w]
        .iter()
        .map(|&x| {
            let d: Vec<f64> = y1
                .iter()
                .zip(&y2)
                .map(|(a, b)| spec.density(x + e2 + b) - spec.density(x + e1 + a))
                .collect();
            let n = d.len() as f64;
            let m = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            3.0 * (var / n).sqrt()
        })
        .fold(0.0, f64::max);

    let r1 = rho_from_y(y1, spec, e1, nodes.clone(), rho.bin_width);
    let r2 = rho_from_y(y2, spec, e2, nodes, rho.bin_width);
    let difference = r2.difference(&r1);

    let lipschitz_ratio = difference
        .nodes
        .iter()
        .zip(&difference.values)
        .map(|(x, v)| v.abs() * (1.0 + x.abs()).powf(1.0 + 1.0 / l) / de)
        .fold(0.0, f64::max);
    let probe: Vec<f64> = (0..=200).map(|i| -w + 2.0 * w * i as f64 / 200.0).collect();
    let window: Vec<f64> = probe
        .iter()
        .copied()
        .chain(difference.nodes.iter().copied().filter(|x| x.abs() <= w))
        .map(|x| difference.eval(x) / de)
        .collect();
    let window_min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let window_max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = 1.0 / (4.0 * l);
    let window_sign = if window_max <= -floor {
        WindowSign::Negative
    } else if window_min >= floor {
        WindowSign::Positive
    } else {
        WindowSign::Mixed
    };
    if noise > de * floor {
        return Err(CavityError::InsufficientResolution { noise, floor: de * floor });
    }
    Ok(Sensitivity {
        e1,
        e2,
        difference,
        lipschitz_ratio,
        window_sign,
        window_min,
        window_max,
        noise,
        generations: pop1.generation,
    })
}
