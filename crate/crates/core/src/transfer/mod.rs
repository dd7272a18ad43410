//! The positive transfer operator
//!
//!   (F u)(x) = (t / |x|)^(2-s) \int rho_E(-y - t^2/x) u(y) dy
//!
//! on the weighted space with w(x) = 1 + |x|^(2-s), discretised by nodal
//! collocation on a bilateral log grid. Between nodes u is piecewise
//! linear; beyond the outermost node |y| = Y it is closed by the power law
//! u(Y) (Y/|y|)^(2-s). The kernel integrals are exact for the cubic Hermite
//! representation of rho_E, so the assembled matrix is the operator.

mod bracket;
mod function;
mod kernel;
mod operator;
mod power;

pub use bracket::{bracket_lambda_testvectors, lambda_asymptotic, threshold_check, weird_log, TestVectorBracket};
pub use function::{TransferGrid, WeightedGridFunction};
pub use kernel::Kernel;
pub use operator::{apply_f, apply_f_difference, upsilon_l, TransferOperator};
pub use power::{power_iteration, PositiveOperator, PowerConfig, PowerOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("s = {0} outside [0.5, 0.9999]")]
    BadExponent(f64),
    #[error("input function takes negative values")]
    NegativeInput,
    #[error("tail truncation exceeds budget: estimated discarded mass {discarded:e} of {total:e}")]
    TailBudget { discarded: f64, total: f64 },
    #[error("slow convergence after {} iterations (bracket [{:e}, {:e}])", .0.iterations, .0.cw_lower, .0.cw_upper)]
    SlowConvergence(Box<PowerOutcome>),
    #[error("lost positivity at iteration {0}")]
    LostPositivity(usize),
    #[error("operator annihilates the iterate")]
    ZeroOperator,
    #[error("s = {s} below threshold for Delta = {delta:e}: {reason}")]
    BelowThreshold { s: f64, delta: f64, reason: String },
    #[error("kernels live on different grids")]
    GridsDiffer,
}

/// Perron eigenvalue of the discretised operator with its brackets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda: f64,
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub tv_lower: Option<f64>,
    pub tv_upper: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub s: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub g: f64,
    pub alpha: f64,
    #[serde(skip)]
    pub eigenfunction: WeightedGridFunction,
}
