//! Single-site potential densities with closed forms.
//!
//! Only families with analytic value, derivative, CDF and level sets are
//! supported, so every regularity verdict has an independent oracle.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("invalid potential parameter: {0}")]
    InvalidParameter(String),
    #[error("sample count must be positive")]
    EmptySample,
    #[error("tangential level set near x = {x}: |rho - c| = {gap:e} without a sign change")]
    TangentialLevelSet { x: f64, gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum PotentialFamily {
    Cauchy { location: f64, scale: f64 },
    Gaussian { mean: f64, stddev: f64 },
    CauchyMixture { weights: Vec<f64>, locations: Vec<f64>, scales: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub family: PotentialFamily,
    pub regularity_constant: f64,
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn cauchy_pdf(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    1.0 / (PI * scale * (1.0 + z * z))
}

fn cauchy_d1(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    let q = 1.0 + z * z;
    -2.0 * z / (PI * scale * scale * q * q)
}

fn cauchy_d2(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    let q = 1.0 + z * z;
    (6.0 * z * z - 2.0) / (PI * scale.powi(3) * q * q * q)
}

impl PotentialSpec {
    pub fn cauchy(location: f64, scale: f64, regularity_constant: f64) -> Self {
        PotentialSpec { family: PotentialFamily::Cauchy { location, scale }, regularity_constant }
    }

    pub fn gaussian(mean: f64, stddev: f64, regularity_constant: f64) -> Self {
        PotentialSpec { family: PotentialFamily::Gaussian { mean, stddev }, regularity_constant }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let bad = |m: &str| Err(PotentialError::InvalidParameter(m.to_string()));
        if !(self.regularity_constant > 0.0 && self.regularity_constant.is_finite()) {
            return bad("regularity_constant must be positive");
        }
        match &self.family {
            PotentialFamily::Cauchy { location, scale } => {
                if !location.is_finite() || !(*scale > 0.0) {
                    return bad("cauchy needs finite location and positive scale");
                }
            }
            PotentialFamily::Gaussian { mean, stddev } => {
                if !mean.is_finite() || !(*stddev > 0.0) {
                    return bad("gaussian needs finite mean and positive stddev");
                }
            }
            PotentialFamily::CauchyMixture { weights, locations, scales } => {
                if weights.is_empty() || weights.len() != locations.len() || weights.len() != scales.len() {
                    return bad("mixture vectors must be non-empty and of equal length");
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad("mixture weights must be a probability vector");
                }
                if scales.iter().any(|s| !(*s > 0.0)) || locations.iter().any(|l| !l.is_finite()) {
                    return bad("mixture scales must be positive and locations finite");
                }
            }
        }
        Ok(())
    }

    pub fn density(&self, x: f64) -> f64 {
        match &self.family {
            PotentialFamily::Cauchy { location, scale } => cauchy_pdf(x, *location, *scale),
            PotentialFamily::Gaussian { mean, stddev } => {
                let z = (x - mean) / stddev;
                INV_SQRT_2PI / stddev * (-0.5 * z * z).exp()
            }
            PotentialFamily::CauchyMixture { weights, locations, scales } => weights
                .iter()
                .zip(locations)
                .zip(scales)
                .map(|((w, l), s)| w * cauchy_pdf(x, *l, *s))
                .sum(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.family {
            PotentialFamily::Cauchy { location, scale } => cauchy_d1(x, *location, *scale),
            PotentialFamily::Gaussian { mean, stddev } => {
                let z = (x - mean) / stddev;
                -z / stddev * self.density(x)
            }
            PotentialFamily::CauchyMixture { weights, locations, scales } => weights
                .iter()
                .zip(locations)
                .zip(scales)
                .map(|((w, l), s)| w * cauchy_d1(x, *l, *s))
                .sum(),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.family {
            PotentialFamily::Cauchy { location, scale } => cauchy_d2(x, *location, *scale),
            PotentialFamily::Gaussian { mean, stddev } => {
                let z = (x - mean) / stddev;
                (z * z - 1.0) / (stddev * stddev) * self.density(x)
            }
            PotentialFamily::CauchyMixture { weights, locations, scales } => weights
                .iter()
                .zip(locations)
                .zip(scales)
                .map(|((w, l), s)| w * cauchy_d2(x, *l, *s))
                .sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.family {
            PotentialFamily::Cauchy { location, scale } => 0.5 + ((x - location) / scale).atan() / PI,
            PotentialFamily::Gaussian { mean, stddev } => {
                0.5 * libm::erfc(-(x - mean) / (stddev * std::f64::consts::SQRT_2))
            }
            PotentialFamily::CauchyMixture { weights, locations, scales } => weights
                .iter()
                .zip(locations)
                .zip(scales)
                .map(|((w, l), s)| w * (0.5 + ((x - l) / s).atan() / PI))
                .sum(),
        }
    }

    /// One draw. Cauchy uses one uniform, mixtures two, so the stream
    /// position after a draw never depends on the value drawn.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            PotentialFamily::Cauchy { location, scale } => {
                location + scale * (PI * (rng.gen::<f64>() - 0.5)).tan()
            }
            PotentialFamily::Gaussian { mean, stddev } => {
                mean + stddev * rng.sample::<f64, _>(StandardNormal)
            }
            PotentialFamily::CauchyMixture { weights, locations, scales } => {
                let u: f64 = rng.gen();
                let v: f64 = rng.gen();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                locations[k] + scales[k] * (PI * (v - 0.5)).tan()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>, PotentialError> {
        if n == 0 {
            return Err(PotentialError::EmptySample);
        }
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }

    /// sup of the density.
    pub fn sup_norm(&self) -> f64 {
        match &self.family {
            PotentialFamily::Cauchy { scale, .. } => 1.0 / (PI * scale),
            PotentialFamily::Gaussian { stddev, .. } => INV_SQRT_2PI / stddev,
            PotentialFamily::CauchyMixture { locations, scales, .. } => {
                // the maximum sits within the hull of the component centres
                let lo = locations.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = locations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let smin = scales.iter().cloned().fold(f64::INFINITY, f64::min);
                let n = (((hi - lo) / (1e-3 * smin)).ceil() as usize).clamp(1, 2_000_000);
                let mut best = (lo, self.density(lo));
                for i in 0..=n {
                    let x = lo + (hi - lo) * i as f64 / n as f64;
                    let v = self.density(x);
                    if v > best.1 {
                        best = (x, v);
                    }
                }
                let step = (hi - lo) / n as f64;
                golden_max(|x| self.density(x), best.0 - step, best.0 + step).max(best.1)
            }
        }
    }

    /// Leading coefficient c of the tail p(x) ~ c / x^2, zero for Gaussian.
    fn tail_coefficient(&self) -> f64 {
        match &self.family {
            PotentialFamily::Cauchy { scale, .. } => scale / PI,
            PotentialFamily::Gaussian { .. } => 0.0,
            PotentialFamily::CauchyMixture { weights, scales, .. } => {
                weights.iter().zip(scales).map(|(w, s)| w * s / PI).sum()
            }
        }
    }

    /// Centre and width of the bulk, used to size grids.
    pub fn bulk(&self) -> (f64, f64) {
        match &self.family {
            PotentialFamily::Cauchy { location, scale } => (*location, *scale),
            PotentialFamily::Gaussian { mean, stddev } => (*mean, *stddev),
            PotentialFamily::CauchyMixture { weights, locations, scales } => {
                let c: f64 = weights.iter().zip(locations).map(|(w, l)| w * l).sum();
                let spread = locations.iter().map(|l| (l - c).abs()).fold(0.0, f64::max);
                let s = scales.iter().cloned().fold(0.0, f64::max);
                (c, spread + s)
            }
        }
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = 0.618_033_988_749_894_8;
    for _ in 0..100 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub pass: bool,
    pub worst_margin: f64,
    pub witness_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regularity_constant: f64,
    pub condition_1: ConditionVerdict,
    pub condition_2: ConditionVerdict,
    pub condition_3: ConditionVerdict,
    pub condition_4: ConditionVerdict,
    pub condition_5: ConditionVerdict,
}

impl RegularityReport {
    pub fn all_pass(&self) -> bool {
        self.conditions().iter().all(|c| c.pass)
    }

    pub fn conditions(&self) -> [ConditionVerdict; 5] {
        [self.condition_1, self.condition_2, self.condition_3, self.condition_4, self.condition_5]
    }
}

/// Resolution of the audit grid.
#[derive(Debug, Clone, Copy)]
pub struct RegularityGrid {
    pub half_width: f64,
    pub log_points: usize,
    pub linear_step: f64,
    pub linear_half_width: f64,
}

impl Default for RegularityGrid {
    fn default() -> Self {
        RegularityGrid { half_width: 1e4, log_points: 4000, linear_step: 1e-3, linear_half_width: 20.0 }
    }
}

impl RegularityGrid {
    fn points(&self, centre: f64) -> Vec<f64> {
        let mut xs = vec![centre];
        let n_lin = (self.linear_half_width / self.linear_step).round() as i64;
        xs.extend((-n_lin..=n_lin).map(|i| centre + i as f64 * self.linear_step));
        let (a, b) = (1e-4f64.ln(), self.half_width.ln());
        for i in 0..self.log_points {
            let r = (a + (b - a) * i as f64 / (self.log_points - 1) as f64).exp();
            xs.push(centre + r);
            xs.push(centre - r);
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }
}

const MAX_CRITICAL_POINTS: usize = 64;

/// Audit the five regularity conditions at constant `l`.
///
/// (1) p <= l/(1+x^2); (2) p >= 1/l on [-1/l, 1/l];
/// (3) |p'| <= l (1+|x|)^(-1-1/l); (4) p bounded below on compacts;
/// (5) finitely many critical points.
/// Margins are positive when the condition holds.
pub fn check_regularity(spec: &PotentialSpec, l: f64, grid: &RegularityGrid) -> Result<RegularityReport, PotentialError> {
    spec.validate()?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(PotentialError::InvalidParameter("regularity constant must be positive".into()));
    }
    let xs = grid.points(0.0);

    let mut c1 = ConditionVerdict { pass: true, worst_margin: f64::INFINITY, witness_x: 0.0 };
    let mut c3 = c1;
    for &x in &xs {
        let m1 = l - spec.density(x) * (1.0 + x * x);
        if m1 < c1.worst_margin {
            c1 = ConditionVerdict { pass: m1 >= 0.0, worst_margin: m1, witness_x: x };
        }
        let m3 = l - spec.derivative(x).abs() * (1.0 + x.abs()).powf(1.0 + 1.0 / l);
        if m3 < c3.worst_margin {
            c3 = ConditionVerdict { pass: m3 >= 0.0, worst_margin: m3, witness_x: x };
        }
    }
    // tails beyond the grid: p ~ c/x^2 and |p'| ~ 2c/|x|^3, compared by exponent
    let tail1 = l - spec.tail_coefficient();
    if tail1 < c1.worst_margin {
        c1 = ConditionVerdict { pass: tail1 >= 0.0, worst_margin: tail1, witness_x: f64::INFINITY };
    }
    c1.pass = c1.worst_margin >= 0.0;
    c3.pass = c3.worst_margin >= 0.0;

    let inner = 1.0 / l;
    let n2 = 10_000;
    let mut c2 = ConditionVerdict { pass: true, worst_margin: f64::INFINITY, witness_x: 0.0 };
    for i in 0..=n2 {
        let x = -inner + 2.0 * inner * i as f64 / n2 as f64;
        let m = spec.density(x) - 1.0 / l;
        if m < c2.worst_margin {
            c2 = ConditionVerdict { pass: m >= 0.0, worst_margin: m, witness_x: x };
        }
    }

    // closed forms are positive everywhere; report the infimum on [-10, 10]
    let mut c4 = ConditionVerdict { pass: true, worst_margin: f64::INFINITY, witness_x: 0.0 };
    for i in 0..=20_000 {
        let x = -10.0 + i as f64 * 1e-3;
        let p = spec.density(x);
        if p < c4.worst_margin {
            c4 = ConditionVerdict { pass: p > 0.0, worst_margin: p, witness_x: x };
        }
    }

    let crit: Vec<f64> = xs
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (spec.derivative(w[0]), spec.derivative(w[1]));
            // an underflowed density has p' == 0 without a critical point
            if spec.density(w[0]) == 0.0 || w[0].abs() >= 1e3 {
                None
            } else if a == 0.0 {
                Some(w[0])
            } else if a * b < 0.0 {
                Some(bisect(|x| spec.derivative(x), w[0], w[1]))
            } else {
                None
            }
        })
        .collect();
    let c5 = ConditionVerdict {
        pass: !crit.is_empty() && crit.len() <= MAX_CRITICAL_POINTS,
        worst_margin: MAX_CRITICAL_POINTS as f64 - crit.len() as f64,
        witness_x: crit.first().copied().unwrap_or(f64::NAN),
    };

    Ok(RegularityReport { regularity_constant: l, condition_1: c1, condition_2: c2, condition_3: c3, condition_4: c4, condition_5: c5 })
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// All roots of p(E) = c in [lo, hi].
pub fn solve_density_level(spec: &PotentialSpec, c: f64, lo: f64, hi: f64) -> Result<Vec<f64>, PotentialError> {
    spec.validate()?;
    if !(c > 0.0) || !(hi > lo) {
        return Err(PotentialError::InvalidParameter("need c > 0 and a non-empty interval".into()));
    }
    let f = |x: f64| spec.density(x) - c;
    let n = ((hi - lo) / 1e-3).ceil() as usize;
    let step = (hi - lo) / n as f64;
    let mut roots = Vec::new();
    let mut near_miss: Option<(f64, f64)> = None;
    let mut prev = (lo, f(lo));
    if prev.1 == 0.0 {
        roots.push(lo);
    }
    for i in 1..=n {
        let x = if i == n { hi } else { lo + step * i as f64 };
        let v = f(x);
        if v == 0.0 {
            roots.push(x);
        } else if prev.1 != 0.0 && (prev.1 > 0.0) != (v > 0.0) {
            roots.push(bisect(f, prev.0, x));
        } else if v.abs() < 1e-9 && near_miss.map_or(true, |(_, g)| v.abs() < g) {
            near_miss = Some((x, v.abs()));
        }
        prev = (x, v);
    }
    if let Some((x, gap)) = near_miss {
        if !roots.iter().any(|r| (r - x).abs() < 2.0 * step) {
            return Err(PotentialError::TangentialLevelSet { x, gap });
        }
    }
    Ok(roots)
}

/// Half-width of the energy window around a predicted edge.
pub fn edge_window(regularity_constant: f64) -> f64 {
    1.0 / (1e3 * regularity_constant * regularity_constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    #[test]
    fn closed_form_values() {
        let c = PotentialSpec::cauchy(0.0, 1.0, 4.0);
        assert!((c.density(0.0) - 1.0 / PI).abs() < 1e-15);
        assert!((c.derivative(1.0) + 0.5 / PI).abs() < 1e-15);
        let g = PotentialSpec::gaussian(0.0, 1.0, 4.0);
        assert!((g.derivative(1.0) + 0.241_970_724_519_143_37).abs() < 1e-12);
    }

    #[test]
    fn draws_have_fixed_stream_cost() {
        use rand::Rng as _;
        let spec = PotentialSpec {
            family: PotentialFamily::CauchyMixture { weights: vec![0.3, 0.7], locations: vec![-1.0, 1.0], scales: vec![1.0, 0.5] },
            regularity_constant: 4.0,
        };
        let mut a = Seed(1).rng();
        let mut b = Seed(1).rng();
        spec.draw(&mut a);
        b.gen::<f64>();
        b.gen::<f64>();
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn edge_window_value() {
        assert!((edge_window(4.0) - 6.25e-5).abs() < 1e-18);
    }
}
