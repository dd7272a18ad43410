//! Coupling constants of H = -t A + V on the rooted K-branching tree.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub g: f64,
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(k: usize, g: f64) -> Self {
        ModelParams { k, g, alpha: 0.1 }
    }

    /// Hopping t = g / (K ln K).
    pub fn t(&self) -> f64 {
        let k = self.k as f64;
        self.g / (k * k.ln())
    }

    /// Inner scale Delta = t^2 / alpha.
    pub fn delta(&self) -> f64 {
        let t = self.t();
        t * t / self.alpha
    }

    pub fn ln_k(&self) -> f64 {
        (self.k as f64).ln()
    }

    /// s = 1 - 2^-j / ln K for j = 0..levels.
    pub fn s_ladder(&self, levels: usize) -> Vec<f64> {
        (0..levels).map(|j| 1.0 - 0.5f64.powi(j as i32) / self.ln_k()).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.k >= 2 && self.g >= 0.0 && self.g.is_finite() && self.alpha > 0.0 && self.alpha < 1.0
    }
}
