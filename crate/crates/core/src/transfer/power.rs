use super::TransferError;
use serde::{Deserialize, Serialize};

/// A linear map that sends nonnegative vectors to nonnegative vectors.
pub trait PositiveOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, u: &[f64], out: &mut [f64]);
    /// Norm used to renormalise iterates.
    fn l1(&self, u: &[f64]) -> f64;
    /// Weight of node i in the residual norm.
    fn weight(&self, _i: usize) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    /// Stop once the Collatz-Wielandt gap is below tol * lambda.
    pub tol: f64,
    pub max_iters: usize,
    /// Ratios only count where u > floor * max u.
    pub floor: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig { tol: 1e-10, max_iters: 20_000, floor: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerOutcome {
    pub lambda: f64,
    pub cw_lower: f64,
    pub cw_upper: f64,
    /// sup |(A v - lambda v) w| / (lambda sup |v w|).
    pub residual: f64,
    pub iterations: usize,
    /// Unit-norm Perron vector.
    pub vector: Vec<f64>,
}

fn cw_bounds(u: &[f64], au: &[f64], floor: f64) -> (f64, f64) {
    let umax = u.iter().copied().fold(0.0, f64::max);
    let cut = floor * umax;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (a, b) in u.iter().zip(au) {
        if *a > cut {
            let r = b / a;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

/// Power iteration with L1 renormalisation. For a nonnegative matrix, the
/// Collatz-Wielandt ratios min (Au)_i/u_i <= rho(A) <= max (Au)_i/u_i bracket
/// the spectral radius at every step.
pub fn power_iteration<O: PositiveOperator + ?Sized>(op: &O, init: &[f64], cfg: &PowerConfig) -> Result<PowerOutcome, TransferError> {
    let n = op.dim();
    assert_eq!(init.len(), n);
    if init.iter().any(|&v| v < 0.0) {
        return Err(TransferError::NegativeInput);
    }
    let norm = op.l1(init);
    if !(norm > 0.0) {
        return Err(TransferError::ZeroOperator);
    }
    let mut u: Vec<f64> = init.iter().map(|v| v / norm).collect();
    let mut au = vec![0.0; n];
    let mut best = (f64::NAN, 0.0, f64::INFINITY);
    for it in 1..=cfg.max_iters {
        op.apply_into(&u, &mut au);
        if au.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(TransferError::LostPositivity(it));
        }
        let mass = op.l1(&au);
        if !(mass > 0.0) {
            return Err(TransferError::ZeroOperator);
        }
        let (lo, hi) = cw_bounds(&u, &au, cfg.floor);
        if hi - lo < best.2 - best.1 {
            best = (mass, lo, hi);
        }
        if hi - lo <= cfg.tol * mass {
            let lambda = mass.clamp(lo, hi);
            let residual = residual(op, &u, &au, lambda);
            return Ok(PowerOutcome { lambda, cw_lower: lo, cw_upper: hi, residual, iterations: it, vector: u });
        }
        for (a, b) in u.iter_mut().zip(&au) {
            *a = b / mass;
        }
    }
    op.apply_into(&u, &mut au);
    let lambda = best.0.clamp(best.1, best.2);
    let residual = residual(op, &u, &au, lambda);
    Err(TransferError::SlowConvergence(Box::new(PowerOutcome {
        lambda,
        cw_lower: best.1,
        cw_upper: best.2,
        residual,
        iterations: cfg.max_iters,
        vector: u,
    })))
}

fn residual<O: PositiveOperator + ?Sized>(op: &O, v: &[f64], av: &[f64], lambda: f64) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..v.len() {
        let w = op.weight(i);
        num = num.max((av[i] - lambda * v[i]).abs() * w);
        den = den.max(v[i].abs() * w);
    }
    num / (lambda * den)
}
