//! Finite trees sampled directly: resolvent entries by Schur recursion,
//! a dense linear-algebra oracle, and Monte Carlo moments of R_{0v}.
//!
//! Nodes are stored in heap order: the children of v are K v + 1 ..= K v + K,
//! so level l occupies indices (K^l - 1)/(K - 1) .. (K^(l+1) - 1)/(K - 1).
//! The distinguished path follows first children: 0, 1, K + 1, K^2 + K + 1, ...

use crate::cavity::{solve_rde_complex, CavityError, RdeConfig};
use crate::model::ModelParams;
use crate::potential::{PotentialError, PotentialSpec};
use crate::rng::Seed;
use crate::stats::{bootstrap_ci, quantile_sorted, sorted};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest tree the Schur recursion will build.
pub const NODE_BUDGET: usize = 10_000_000;
/// Largest tree the dense oracle will factor.
pub const DENSE_BUDGET: usize = 4096;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("spectral parameter needs Im z > 0, got {0}")]
    NotInUpperHalfPlane(Complex64),
    #[error("tree with {nodes} nodes exceeds budget {budget}")]
    TooLarge { nodes: usize, budget: usize },
    #[error("dense oracle only supports the free boundary")]
    OracleBoundary,
    #[error("confidence interval too wide: half width {half_width:.3} in phi units")]
    CiTooWide { half_width: f64, estimate: Box<PhiEstimate> },
    #[error("depth {depth} leaves t^depth = {reach:e} above 1e-8 with a free boundary")]
    BoundaryTooShallow { depth: usize, reach: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cavity(#[from] CavityError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// What sits below the deepest level.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    /// Leaves see nothing: R = 1/(V - z).
    Free,
    /// Leaf cavity values are drawn from a converged pool at the same z,
    /// standing in for the infinite subtree below each leaf.
    Cavity(Vec<Complex64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    Free,
    Cavity,
}

impl Boundary {
    /// Free, or a complex pool at z solved with `rde`.
    pub fn build(mode: BoundaryMode, spec: &PotentialSpec, params: &ModelParams, z: Complex64, rde: &RdeConfig, seed: Seed) -> Result<Self, TreeError> {
        Ok(match mode {
            BoundaryMode::Free => Boundary::Free,
            BoundaryMode::Cavity => {
                let (pool, _) = solve_rde_complex(spec, params, z.re, z.im, rde, seed.split("boundary", 0))?;
                Boundary::Cavity(pool.samples)
            }
        })
    }
}

pub fn node_count(k: usize, depth: usize) -> usize {
    (0..=depth).map(|l| k.pow(l as u32)).sum()
}

fn first_leaf(k: usize, depth: usize) -> usize {
    if depth == 0 {
        0
    } else {
        node_count(k, depth - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeInstance {
    pub k: usize,
    pub depth: usize,
    pub potentials: Vec<f64>,
    pub z: Complex64,
    /// Cavity values of the leaves when the boundary is not free.
    pub leaf_values: Option<Vec<Complex64>>,
}

impl TreeInstance {
    pub fn generate(spec: &PotentialSpec, k: usize, depth: usize, z: Complex64, boundary: &Boundary, seed: Seed) -> Result<Self, TreeError> {
        if !(z.im > 0.0) {
            return Err(TreeError::NotInUpperHalfPlane(z));
        }
        if k < 1 {
            return Err(TreeError::Invalid("K must be positive".into()));
        }
        let n = checked_count(k, depth, NODE_BUDGET)?;
        let mut rng = seed.rng();
        let potentials: Vec<f64> = (0..n).map(|_| spec.draw(&mut rng)).collect();
        let leaf_values = match boundary {
            Boundary::Free => None,
            Boundary::Cavity(pool) => {
                if pool.is_empty() {
                    return Err(TreeError::Invalid("empty boundary pool".into()));
                }
                let leaves = n - first_leaf(k, depth);
                Some((0..leaves).map(|_| pool[rng.gen_range(0..pool.len())]).collect())
            }
        };
        Ok(TreeInstance { k, depth, potentials, z, leaf_values })
    }

    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    /// Index of the first leaf.
    pub fn first_leaf(&self) -> usize {
        first_leaf(self.k, self.depth)
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        (v > 0).then(|| (v - 1) / self.k)
    }

    /// Distinguished path from the root to depth `l`.
    pub fn path(&self, l: usize) -> Vec<usize> {
        std::iter::successors(Some(0usize), |&v| Some(self.k * v + 1)).take(l + 1).collect()
    }

    /// Entry v holds R^{(parent)}_{vv}; the root entry is R_00.
    pub fn cavity_values(&self, t: f64) -> Vec<Complex64> {
        let n = self.len();
        let leaf0 = self.first_leaf();
        let t2 = t * t;
        let mut r = vec![Complex64::default(); n];
        for v in leaf0..n {
            r[v] = match &self.leaf_values {
                Some(vals) => vals[v - leaf0],
                None => 1.0 / (self.potentials[v] - self.z),
            };
        }
        for v in (0..leaf0).rev() {
            let c = self.k * v + 1;
            let sum: Complex64 = r[c..c + self.k].iter().sum();
            r[v] = 1.0 / (self.potentials[v] - self.z - t2 * sum);
        }
        r
    }

    /// R_{0v} = R_00 prod_{u on path, u != 0} t R^{(u_-)}_{uu}. The sign is
    /// + because each hop contributes -R (-t) R.
    pub fn product_expansion(&self, cavity: &[Complex64], t: f64, v: usize) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        let mut u = v;
        while let Some(p) = self.parent(u) {
            acc *= t * cavity[u];
            u = p;
        }
        acc * cavity[0]
    }

    /// -t A + V; only defined for the free boundary.
    pub fn hamiltonian(&self, t: f64) -> Result<DMatrix<f64>, TreeError> {
        if self.leaf_values.is_some() {
            return Err(TreeError::OracleBoundary);
        }
        let n = checked_count(self.k, self.depth, DENSE_BUDGET)?;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for v in 0..n {
            h[(v, v)] = self.potentials[v];
            if let Some(p) = self.parent(v) {
                h[(v, p)] = -t;
                h[(p, v)] = -t;
            }
        }
        Ok(h)
    }
}

fn checked_count(k: usize, depth: usize, budget: usize) -> Result<usize, TreeError> {
    let mut total = 0usize;
    let mut level = 1usize;
    for _ in 0..=depth {
        total = total.saturating_add(level);
        level = level.saturating_mul(k);
        if total > budget {
            return Err(TreeError::TooLarge { nodes: total, budget });
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventSample {
    pub root_value: Complex64,
    /// R_{0 v_L} for the distinguished leaf.
    pub path_product: Complex64,
    /// R^{(parent)}_{vv} along the path, root first (the root entry is R_00).
    pub cavity_values: Vec<Complex64>,
}

impl ResolventSample {
    pub fn of_tree(tree: &TreeInstance, t: f64) -> Self {
        let cav = tree.cavity_values(t);
        let path = tree.path(tree.depth);
        let leaf = *path.last().expect("path contains the root");
        ResolventSample {
            root_value: cav[0],
            path_product: tree.product_expansion(&cav, t, leaf),
            cavity_values: path.iter().map(|&v| cav[v]).collect(),
        }
    }
}

pub fn sample_resolvent_tree(
    spec: &PotentialSpec,
    params: &ModelParams,
    z: Complex64,
    depth: usize,
    boundary: &Boundary,
    seed: Seed,
) -> Result<ResolventSample, TreeError> {
    let tree = TreeInstance::generate(spec, params.k, depth, z, boundary, seed)?;
    Ok(ResolventSample::of_tree(&tree, params.t()))
}

/// Root row and column of (H - z)^-1 from one dense LU factorisation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseResolvent {
    pub column: Vec<Complex64>,
    pub row: Vec<Complex64>,
}

impl DenseResolvent {
    /// |sum_v |R_0v|^2 - Im R_00 / Im z| relative to Im R_00 / Im z.
    pub fn ward_residual(&self, z: Complex64) -> f64 {
        let lhs: f64 = self.column.iter().map(|r| r.norm_sqr()).sum();
        let rhs = self.column[0].im / z.im;
        (lhs - rhs).abs() / rhs
    }

    /// Largest |R_0v - R_v0|.
    pub fn asymmetry(&self) -> f64 {
        self.column.iter().zip(&self.row).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

pub fn dense_resolvent_oracle(tree: &TreeInstance, t: f64) -> Result<DenseResolvent, TreeError> {
    let h = tree.hamiltonian(t)?;
    let n = h.nrows();
    let a = DMatrix::<Complex64>::from_fn(n, n, |i, j| Complex64::new(h[(i, j)], 0.0) - if i == j { tree.z } else { Complex64::default() });
    let inv = a.lu().try_inverse().ok_or_else(|| TreeError::Invalid("singular H - z".into()))?;
    Ok(DenseResolvent { column: inv.column(0).iter().copied().collect(), row: inv.row(0).iter().copied().collect() })
}

/// (2^s ||rho||^s / (1 - s))^(L+1) t^(s L).
pub fn fractional_moment_bound(spec: &PotentialSpec, params: &ModelParams, s: f64, l: usize) -> f64 {
    let base = 2f64.powf(s) * spec.sup_norm().powf(s) / (1.0 - s);
    base.powi(l as i32 + 1) * params.t().powf(s * l as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    #[serde(rename = "E")]
    pub energy: f64,
    pub eta: f64,
    pub s: f64,
    #[serde(rename = "L")]
    pub depth: usize,
    /// L^-1 ln(K^L mean |R_{0 v_L}|^s); -inf when every sample vanishes.
    #[serde(rename = "phi_L")]
    pub phi_l: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// mean |R_{0 v_L}|^s and its bootstrap interval.
    pub moment: f64,
    pub moment_ci: (f64, f64),
    pub n_samples: usize,
    pub seed: Seed,
}

impl PhiEstimate {
    pub fn degenerate(&self) -> bool {
        self.phi_l == f64::NEG_INFINITY
    }
}

/// Single-path estimate of phi_L = L^-1 ln Phi_L with Phi_L = K^L E|R_{0 v_L}|^s.
/// Trees are independent with seeds split by sample index, so the result
/// does not depend on the number of workers.
#[allow(clippy::too_many_arguments)]
pub fn phi_l_monte_carlo(
    spec: &PotentialSpec,
    params: &ModelParams,
    z: Complex64,
    l: usize,
    s: f64,
    n_samples: usize,
    boundary: &Boundary,
    seed: Seed,
) -> Result<PhiEstimate, TreeError> {
    if !(s > 0.0 && s < 1.0) || l == 0 || n_samples < 2 {
        return Err(TreeError::Invalid("need 0 < s < 1, L >= 1 and two or more samples".into()));
    }
    let t = params.t();
    let moments: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| sample_resolvent_tree(spec, params, z, l, boundary, seed.split("tree", i as u64)).map(|r| r.path_product.norm().powf(s)))
        .collect::<Result<_, _>>()?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let moment = mean(&moments);
    let (mlo, mhi) = bootstrap_ci(&moments, BOOTSTRAP_RESAMPLES, 0.95, seed.split("bootstrap", 0), mean);
    let lf = l as f64;
    let phi = |m: f64| (params.k as f64).ln() + m.ln() / lf;
    let est = PhiEstimate {
        energy: z.re,
        eta: z.im,
        s,
        depth: l,
        phi_l: phi(moment),
        ci_lo: phi(mlo),
        ci_hi: phi(mhi),
        moment,
        moment_ci: (mlo, mhi),
        n_samples,
        seed,
    };
    if t == 0.0 || est.degenerate() {
        return Ok(est);
    }
    let half_width = 0.5 * (est.ci_hi - est.ci_lo);
    if !(half_width <= 0.5) {
        return Err(TreeError::CiTooWide { half_width, estimate: Box::new(est) });
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImStats {
    pub eta: f64,
    pub median: f64,
    pub mean: f64,
    pub frac_above_10eta: f64,
}

/// Statistics of Im R_00 at E + i eta along a decreasing ladder. A free
/// boundary needs t^depth < 1e-8; a cavity boundary solves a pool per rung.
#[allow(clippy::too_many_arguments)]
pub fn imag_part_distribution(
    spec: &PotentialSpec,
    params: &ModelParams,
    energy: f64,
    eta_ladder: &[f64],
    n: usize,
    depth: usize,
    mode: BoundaryMode,
    rde: &RdeConfig,
    seed: Seed,
) -> Result<Vec<ImStats>, TreeError> {
    if eta_ladder.iter().any(|&e| !(e > 0.0)) || eta_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(TreeError::Invalid("eta ladder must be positive and decreasing".into()));
    }
    let reach = params.t().powi(depth as i32);
    if mode == BoundaryMode::Free && !(reach < 1e-8) {
        return Err(TreeError::BoundaryTooShallow { depth, reach });
    }
    eta_ladder
        .iter()
        .enumerate()
        .map(|(j, &eta)| {
            let z = Complex64::new(energy, eta);
            let rung = seed.split("eta", j as u64);
            let boundary = Boundary::build(mode, spec, params, z, rde, rung)?;
            let im: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| sample_resolvent_tree(spec, params, z, depth, &boundary, rung.split("tree", i as u64)).map(|r| r.root_value.im))
                .collect::<Result<_, _>>()?;
            let sorted_im = sorted(&im);
            Ok(ImStats {
                eta,
                median: quantile_sorted(&sorted_im, 0.5),
                mean: im.iter().sum::<f64>() / n as f64,
                frac_above_10eta: im.iter().filter(|&&v| v > 10.0 * eta).count() as f64 / n as f64,
            })
        })
        .collect()
}
