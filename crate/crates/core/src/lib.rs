//! Numerics for locating mobility edges of the Anderson model on a rooted
//! K-branching tree with large connectivity.
//!
//! The pipeline is: a single-site law ([`potential`]), the cavity fixed point
//! ([`cavity`]), the positive transfer operator built from the cavity
//! marginal ([`transfer`]), its Perron eigenvalue and the free energy
//! ([`spectrum`]), and a finite-tree Monte Carlo cross-check ([`treesim`]).

pub mod cavity;
pub mod grid;
pub mod model;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod spectrum;
pub mod stats;
pub mod transfer;
pub mod treesim;

pub use model::ModelParams;
pub use potential::{PotentialFamily, PotentialSpec};
pub use rng::Seed;
