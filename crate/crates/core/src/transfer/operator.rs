use super::function::{integral, WeightedGridFunction};
use super::kernel::Kernel;
use super::power::PositiveOperator;
use super::TransferError;
use crate::grid::GridDensity;
use crate::model::ModelParams;
use rayon::prelude::*;

/// Assembled collocation matrix of F (or of the difference operator when
/// the kernel is signed).
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub nodes: Vec<f64>,
    pub s: f64,
    pub t: f64,
    prefactor: Vec<f64>,
    matrix: Vec<f64>,
    tail_left: Vec<f64>,
    tail_right: Vec<f64>,
    signed: bool,
}

/// Share of the output allowed to come from an unreliable tail closure.
const TAIL_BUDGET: f64 = 1e-6;

pub(crate) fn check_s(s: f64) -> Result<(), TransferError> {
    if (0.5..=0.9999).contains(&s) {
        Ok(())
    } else {
        Err(TransferError::BadExponent(s))
    }
}

impl TransferOperator {
    pub fn new(kernel: &Kernel, params: &ModelParams, s: f64, nodes: &[f64]) -> Result<Self, TransferError> {
        Self::build(kernel, params, s, nodes, false)
    }

    /// Kernel may change sign (difference of two densities).
    pub fn new_signed(kernel: &Kernel, params: &ModelParams, s: f64, nodes: &[f64]) -> Result<Self, TransferError> {
        Self::build(kernel, params, s, nodes, true)
    }

    fn build(kernel: &Kernel, params: &ModelParams, s: f64, nodes: &[f64], signed: bool) -> Result<Self, TransferError> {
        check_s(s)?;
        let n = nodes.len();
        let t = params.t();
        let t2 = t * t;
        let ymax = nodes[n - 1];
        let rows: Vec<(Vec<f64>, f64, f64)> = nodes
            .par_iter()
            .map(|&x| {
                let c = t2 / x;
                let mut row = vec![0.0; n];
                for j in 0..n - 1 {
                    let (mut l, mut r) = kernel.hat_weights(nodes[j], nodes[j + 1], c);
                    if !signed {
                        l = l.max(0.0);
                        r = r.max(0.0);
                    }
                    row[j] += l;
                    row[j + 1] += r;
                }
                let tl = kernel.outer_tail(-nodes[0], c, s, -1.0);
                let tr = kernel.outer_tail(ymax, c, s, 1.0);
                row[0] += tl;
                row[n - 1] += tr;
                (row, tl, tr)
            })
            .collect();
        let mut matrix = Vec::with_capacity(n * n);
        let mut tail_left = Vec::with_capacity(n);
        let mut tail_right = Vec::with_capacity(n);
        for (row, tl, tr) in rows {
            matrix.extend_from_slice(&row);
            tail_left.push(tl);
            tail_right.push(tr);
        }
        let prefactor = nodes.iter().map(|&x| (t / x.abs()).powf(2.0 - s)).collect();
        Ok(TransferOperator { nodes: nodes.to_vec(), s, t, prefactor, matrix, tail_left, tail_right, signed })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Collocation matrix entry (F e_j)(x_i) including the prefactor.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.prefactor[i] * self.matrix[i * self.nodes.len() + j]
    }

    pub fn matvec(&self, u: &[f64], out: &mut [f64]) {
        let n = self.nodes.len();
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &self.matrix[i * n..(i + 1) * n];
            *o = self.prefactor[i] * row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        });
    }

    /// F u, with the tail-closure audit.
    pub fn apply(&self, u: &WeightedGridFunction) -> Result<WeightedGridFunction, TransferError> {
        assert_eq!(u.nodes.len(), self.nodes.len());
        if !self.signed && !u.is_nonnegative() {
            return Err(TransferError::NegativeInput);
        }
        let mut out = vec![0.0; self.dim()];
        self.matvec(&u.values, &mut out);
        self.audit_tail(&u.values, &out)?;
        Ok(WeightedGridFunction { nodes: self.nodes.clone(), values: out, s: self.s })
    }

    /// The closure assumes u decays like |y|^-(2-s). If the weighted values
    /// still grow over the last decade, the closure undercounts by about
    /// the growth factor; that estimate must stay within budget.
    fn audit_tail(&self, u: &[f64], out: &[f64]) -> Result<(), TransferError> {
        let n = self.nodes.len();
        let p = 2.0 - self.s;
        let growth = |edge: usize, inner_x: f64| -> f64 {
            let k = (0..n).min_by(|&a, &b| (self.nodes[a] - inner_x).abs().total_cmp(&(self.nodes[b] - inner_x).abs())).unwrap();
            let we = u[edge].abs() * self.nodes[edge].abs().powf(p);
            let wi = u[k].abs() * self.nodes[k].abs().powf(p);
            if wi > 0.0 {
                (we / wi - 1.0).max(0.0)
            } else if we > 0.0 {
                1.0
            } else {
                0.0
            }
        };
        let gl = growth(0, 0.1 * self.nodes[0]);
        let gr = growth(n - 1, 0.1 * self.nodes[n - 1]);
        if gl == 0.0 && gr == 0.0 {
            return Ok(());
        }
        for i in 0..n {
            let discarded = self.prefactor[i] * (gl * self.tail_left[i] * u[0].abs() + gr * self.tail_right[i] * u[n - 1].abs());
            let total = out[i].abs();
            if discarded > TAIL_BUDGET * total {
                return Err(TransferError::TailBudget { discarded, total });
            }
        }
        Ok(())
    }
}

impl PositiveOperator for TransferOperator {
    fn dim(&self) -> usize {
        self.nodes.len()
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.matvec(u, out);
    }
    fn l1(&self, u: &[f64]) -> f64 {
        let a: Vec<f64> = u.iter().map(|v| v.abs()).collect();
        integral(&self.nodes, &a, self.s)
    }
    fn weight(&self, i: usize) -> f64 {
        1.0 + self.nodes[i].abs().powf(2.0 - self.s)
    }
}

/// F u for a kernel density on u's nodes.
pub fn apply_f(rho_e: &GridDensity, params: &ModelParams, s: f64, u: &WeightedGridFunction) -> Result<WeightedGridFunction, TransferError> {
    let op = TransferOperator::new(&Kernel::new(rho_e.clone()), params, s, &u.nodes)?;
    op.apply(u)
}

/// Difference operator with kernel rho_{E2} - rho_{E1}.
pub fn apply_f_difference(
    rho_e1: &GridDensity,
    rho_e2: &GridDensity,
    params: &ModelParams,
    s: f64,
    u: &WeightedGridFunction,
) -> Result<WeightedGridFunction, TransferError> {
    if rho_e1.nodes != rho_e2.nodes {
        return Err(TransferError::GridsDiffer);
    }
    let op = TransferOperator::new_signed(&Kernel::new(rho_e2.difference(rho_e1)), params, s, &u.nodes)?;
    op.apply(u)
}

/// ln Upsilon_L for L = 0..=l_max: Upsilon_L = t^-(2+s) int F^(L+1) g with
/// g(x) = p_E(-x / t^2). Iterates are renormalised and the scale carried
/// in log space.
pub fn upsilon_l(p_e: &GridDensity, op: &TransferOperator, l_max: usize) -> Vec<f64> {
    let t2 = op.t * op.t;
    let mut f: Vec<f64> = op.nodes.iter().map(|&x| p_e.eval(-x / t2)).collect();
    let mut log_scale = 0.0;
    let mut buf = vec![0.0; f.len()];
    let mut out = Vec::with_capacity(l_max + 1);
    for _ in 0..=l_max {
        op.matvec(&f, &mut buf);
        let mass = integral(&op.nodes, &buf, op.s);
        out.push(-(2.0 + op.s) * op.t.ln() + log_scale + mass.ln());
        for (a, b) in f.iter_mut().zip(&buf) {
            *a = b / mass;
        }
        log_scale += mass.ln();
    }
    out
}
