//! Cavity fixed point by population dynamics, and the densities derived
//! from it.
//!
//! A pool of N samples stands for the law of Gamma solving
//! Gamma = 1 / (V - E - i eta - t^2 sum_{i<=K} Gamma_i). From a converged
//! pool we build p_E (the density of Gamma), rho_E (the density of
//! V - E - t^2 sum_{i<K} Gamma_i) and p_E^(M) (the density of t^2 sum_M Gamma).

mod checkpoint;
mod convolution;
mod kde;
mod population;
mod rho;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, FromParts};
pub use convolution::{sample_sums, DIRECT_SUM_BUDGET};
pub use kde::{density_p_e, kde_density, p_conv_m, KdeDensity};
pub use population::{
    im_summary, population_step, solve_rde, solve_rde_complex, CavityValue, ImSummary, Population, RdeConfig,
    MIN_POOL,
};
pub use rho::{rho_e, rho_e_nodes, rho_e_sensitivity, RhoConfig, Sensitivity, WindowSign};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CavityError {
    #[error("population of {0} samples is below the minimum of {MIN_POOL}")]
    PoolTooSmall(usize),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("no convergence after {iterations} generations (last distance {last:e})")]
    NoConvergence { iterations: usize, last: f64, history: Vec<f64> },
    #[error("insufficient resolution: noise {noise:e} exceeds signal floor {floor:e}")]
    InsufficientResolution { noise: f64, floor: f64 },
    #[error(transparent)]
    Potential(#[from] crate::potential::PotentialError),
}
