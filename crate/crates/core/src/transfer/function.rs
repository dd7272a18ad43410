use crate::grid::bilateral_log_nodes;
use crate::model::ModelParams;
use serde::{Deserialize, Serialize};

/// Collocation nodes: a bilateral log grid on [1e-3 Delta, 1e4] with the
/// crossover scales Delta/8, Delta, 8 Delta and 1 present exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferGrid {
    pub nodes: Vec<f64>,
    pub delta: f64,
}

pub const GRID_INNER: f64 = 1e-3;
pub const GRID_OUTER: f64 = 1e4;

impl TransferGrid {
    pub fn new(params: &ModelParams, per_side: usize) -> Self {
        let delta = params.delta();
        let mut nodes = bilateral_log_nodes(0.0, GRID_INNER * delta, GRID_OUTER, per_side);
        let mut pinned: Vec<f64> = Vec::new();
        for p in [delta / 8.0, delta, 8.0 * delta, 1.0] {
            if !(p > GRID_INNER * delta && p < GRID_OUTER) {
                continue;
            }
            for sign in [-1.0, 1.0] {
                let target = sign * p;
                let i = nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.signum() == sign)
                    .min_by(|a, b| (a.1.abs() / p).ln().abs().total_cmp(&(b.1.abs() / p).ln().abs()))
                    .map(|(i, _)| i)
                    .unwrap();
                if pinned.contains(&nodes[i]) {
                    nodes.push(target);
                } else {
                    nodes[i] = target;
                }
                pinned.push(target);
            }
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        TransferGrid { nodes, delta }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nodal values of a function in the weighted space, with its exponent s.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedGridFunction {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub s: f64,
}

impl WeightedGridFunction {
    pub fn from_fn<F: Fn(f64) -> f64>(nodes: &[f64], s: f64, f: F) -> Self {
        WeightedGridFunction { nodes: nodes.to_vec(), values: nodes.iter().map(|&x| f(x)).collect(), s }
    }

    pub fn zeros(nodes: &[f64], s: f64) -> Self {
        Self::from_fn(nodes, s, |_| 0.0)
    }

    pub fn weight(&self, x: f64) -> f64 {
        1.0 + x.abs().powf(2.0 - self.s)
    }

    pub fn weighted_sup(&self) -> f64 {
        self.nodes.iter().zip(&self.values).map(|(&x, v)| v.abs() * self.weight(x)).fold(0.0, f64::max)
    }

    /// Integral of the piecewise-linear interpolant plus the power-law tails.
    pub fn integral(&self) -> f64 {
        integral(&self.nodes, &self.values, self.s)
    }

    pub fn l1_norm(&self) -> f64 {
        let a: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        integral(&self.nodes, &a, self.s)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return self.values[0] * (self.nodes[0] / x).abs().powf(2.0 - self.s);
        }
        if x >= self.nodes[n - 1] {
            return self.values[n - 1] * (self.nodes[n - 1] / x).abs().powf(2.0 - self.s);
        }
        let k = crate::grid::locate(&self.nodes, x);
        let f = (x - self.nodes[k]) / (self.nodes[k + 1] - self.nodes[k]);
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightedGridFunction { nodes: self.nodes.clone(), values: self.values.iter().map(|v| c * v).collect(), s: self.s }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// u1 = Delta^-1 1{|x| <= Delta}.
    pub fn u1(nodes: &[f64], params: &ModelParams, s: f64) -> Self {
        let d = params.delta();
        Self::from_fn(nodes, s, |x| if x.abs() <= d { 1.0 / d } else { 0.0 })
    }

    /// u2 = |x|^-(2-s) 1{Delta <= |x| <= 1}.
    pub fn u2(nodes: &[f64], params: &ModelParams, s: f64) -> Self {
        let d = params.delta();
        Self::from_fn(nodes, s, |x| if x.abs() >= d && x.abs() <= 1.0 { x.abs().powf(s - 2.0) } else { 0.0 })
    }

    /// u3 = |x|^-(2-s) 1{|x| >= 1}.
    pub fn u3(nodes: &[f64], _params: &ModelParams, s: f64) -> Self {
        Self::from_fn(nodes, s, |x| if x.abs() >= 1.0 { x.abs().powf(s - 2.0) } else { 0.0 })
    }

    /// The inner plateau (t^2 ln K)^-1 1{|x| <= Delta} of the approximate eigenvector.
    pub fn tilde_u1(nodes: &[f64], params: &ModelParams, s: f64) -> Self {
        let d = params.delta();
        let h = 1.0 / (params.t() * params.t() * params.ln_k());
        Self::from_fn(nodes, s, |x| if x.abs() <= d { h } else { 0.0 })
    }

    /// Approximate eigenvector: plateau on |x| <= Delta, |x|^-(2-s) outside.
    pub fn tilde_u(nodes: &[f64], params: &ModelParams, s: f64) -> Self {
        let d = params.delta();
        let h = 1.0 / (params.t() * params.t() * params.ln_k());
        Self::from_fn(nodes, s, |x| if x.abs() <= d { h } else { x.abs().powf(s - 2.0) })
    }
}

/// Trapezoid on the nodes plus u_edge Y / (1 - s) per side.
pub(crate) fn integral(nodes: &[f64], values: &[f64], s: f64) -> f64 {
    let n = nodes.len();
    let inner: f64 = (0..n - 1).map(|j| 0.5 * (nodes[j + 1] - nodes[j]) * (values[j] + values[j + 1])).sum();
    inner + (values[0] * nodes[0].abs() + values[n - 1] * nodes[n - 1].abs()) / (1.0 - s)
}
