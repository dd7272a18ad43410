//! Tabulated densities on bilateral logarithmic grids.
//!
//! Values are interpolated by cubic Hermite pieces using stored slopes, and
//! extended beyond the outermost nodes by a power law |x|^-a whose amplitude
//! is matched to the edge value on each side.

use crate::quad::{GL3_W, GL3_X};
use serde::{Deserialize, Serialize};

/// `centre ± r` for `per_side` radii log-spaced in [inner, outer].
pub fn bilateral_log_nodes(centre: f64, inner: f64, outer: f64, per_side: usize) -> Vec<f64> {
    assert!(inner > 0.0 && outer > inner && per_side >= 2);
    let (a, b) = (inner.ln(), outer.ln());
    let mut v = Vec::with_capacity(2 * per_side);
    for i in 0..per_side {
        let r = (a + (b - a) * i as f64 / (per_side - 1) as f64).exp();
        v.push(centre - r);
        v.push(centre + r);
    }
    v.sort_by(f64::total_cmp);
    v
}

/// Sorted union, dropping nodes that nearly coincide with a neighbour.
pub fn merge_nodes(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().chain(b).copied().collect();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match out.last() {
            Some(&p) if x - p <= 1e-13 * p.abs().max(x.abs()).max(1e-300) => {}
            _ => out.push(x),
        }
    }
    out
}

/// Index k of the cell [nodes[k], nodes[k+1]] containing x, clamped to the grid.
pub fn locate(nodes: &[f64], x: f64) -> usize {
    let n = nodes.len();
    match nodes.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

#[inline]
pub fn hermite_slope(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * (y0 - y1)) / h + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub tail_exponent: f64,
    /// Reported tail coefficient C in C |x|^-a (mean of the two sides).
    pub tail_coefficient: f64,
}

impl GridDensity {
    /// Builds from nodal values and slopes; the tail amplitude is matched to
    /// the edge values.
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>, tail_exponent: f64) -> Self {
        assert_eq!(nodes.len(), values.len());
        assert_eq!(nodes.len(), slopes.len());
        assert!(nodes.len() >= 2);
        let n = nodes.len();
        let cl = values[0] * nodes[0].abs().powf(tail_exponent);
        let cr = values[n - 1] * nodes[n - 1].abs().powf(tail_exponent);
        GridDensity { nodes, values, slopes, tail_exponent, tail_coefficient: 0.5 * (cl + cr) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    fn tail(&self, x: f64) -> (f64, f64) {
        let n = self.nodes.len();
        let (xe, ve) = if x < self.nodes[0] { (self.nodes[0], self.values[0]) } else { (self.nodes[n - 1], self.values[n - 1]) };
        let a = self.tail_exponent;
        let v = ve * (xe / x).abs().powf(a);
        (v, -a * v / x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return self.tail(x).0;
        }
        let k = locate(&self.nodes, x);
        self.eval_in_cell(k, x)
    }

    #[inline]
    pub fn eval_in_cell(&self, k: usize, x: f64) -> f64 {
        hermite(
            self.nodes[k],
            self.nodes[k + 1],
            self.values[k],
            self.values[k + 1],
            self.slopes[k],
            self.slopes[k + 1],
            x,
        )
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return self.tail(x).1;
        }
        let k = locate(&self.nodes, x);
        hermite_slope(
            self.nodes[k],
            self.nodes[k + 1],
            self.values[k],
            self.values[k + 1],
            self.slopes[k],
            self.slopes[k + 1],
            x,
        )
    }

    /// Exact integral of the cubic piece on cell k.
    pub fn cell_integral(&self, k: usize) -> f64 {
        let h = self.nodes[k + 1] - self.nodes[k];
        // integral of a cubic Hermite piece in closed form
        h * 0.5 * (self.values[k] + self.values[k + 1]) + h * h / 12.0 * (self.slopes[k] - self.slopes[k + 1])
    }

    /// Mass beyond the grid on both sides (requires a > 1).
    pub fn tail_mass(&self) -> f64 {
        let a = self.tail_exponent;
        let n = self.nodes.len();
        (self.values[0] * self.nodes[0].abs() + self.values[n - 1] * self.nodes[n - 1].abs()) / (a - 1.0)
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.nodes.len() - 1).map(|k| self.cell_integral(k)).sum::<f64>() + self.tail_mass()
    }

    /// Integral over [a, b] inside the grid, by 3-point Gauss per cell.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        let (ka, kb) = (locate(&self.nodes, a), locate(&self.nodes, b));
        for k in ka..=kb {
            let lo = a.max(self.nodes[k]);
            let hi = b.min(self.nodes[k + 1]);
            if hi > lo {
                let (m, hw) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                s += hw * (0..3).map(|q| GL3_W[q] * self.eval_in_cell(k, m + hw * GL3_X[q])).sum::<f64>();
            }
        }
        s
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.slopes.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Pointwise difference on a shared node set.
    pub fn difference(&self, other: &GridDensity) -> GridDensity {
        assert_eq!(self.nodes, other.nodes, "difference needs a common grid");
        GridDensity::new(
            self.nodes.clone(),
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            self.slopes.iter().zip(&other.slopes).map(|(a, b)| a - b).collect(),
            self.tail_exponent,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cauchy_grid() -> GridDensity {
        let nodes = bilateral_log_nodes(0.0, 1e-4, 1e3, 400);
        let values = nodes.iter().map(|x| 1.0 / (PI * (1.0 + x * x))).collect();
        let slopes = nodes.iter().map(|x| -2.0 * x / (PI * (1.0 + x * x).powi(2))).collect();
        GridDensity::new(nodes, values, slopes, 2.0)
    }

    #[test]
    fn hermite_reproduces_cauchy() {
        let g = cauchy_grid();
        for x in [-50.0, -1.3, 0.0, 0.2, 2.0, 700.0, 5e3] {
            let exact = 1.0 / (PI * (1.0 + x * x));
            assert!((g.eval(x) - exact).abs() < 1e-6 * exact, "x={x}");
        }
        assert!((g.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cell_integral_matches_gauss() {
        let g = cauchy_grid();
        for k in [10, 200, 400, 700] {
            let gauss = g.integral(g.nodes[k], g.nodes[k + 1]);
            assert!((g.cell_integral(k) - gauss).abs() < 1e-14);
        }
    }

    #[test]
    fn merge_drops_duplicates() {
        let m = merge_nodes(&[0.0, 1.0, 2.0], &[1.0, 1.5]);
        assert_eq!(m, vec![0.0, 1.0, 1.5, 2.0]);
    }
}
