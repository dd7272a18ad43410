use super::function::WeightedGridFunction;
use super::operator::{check_s, TransferOperator};
use super::TransferError;
use crate::grid::GridDensity;
use crate::model::ModelParams;
use serde::{Deserialize, Serialize};

/// X(s, Delta) = (1 - Delta^(s-1)) / (s - 1), which tends to ln(1/Delta) as s -> 1.
pub fn weird_log(s: f64, delta: f64) -> f64 {
    let l = -delta.ln();
    let a = (1.0 - s) * l;
    if a == 0.0 {
        l
    } else {
        l * a.exp_m1() / a
    }
}

/// Requires X(s, Delta) within [ln(1/Delta)/2, 2 ln(1/Delta)] and
/// t^(2-s) within [t/2, 2t].
pub fn threshold_check(params: &ModelParams, s: f64) -> Result<(), TransferError> {
    check_s(s)?;
    let delta = params.delta();
    let fail = |reason: String| Err(TransferError::BelowThreshold { s, delta, reason });
    let l = -delta.ln();
    if !(l > 0.0) {
        return fail("Delta >= 1".into());
    }
    let x = weird_log(s, delta);
    if x < 0.5 * l || x > 2.0 * l {
        return fail(format!("X = {x:.4} outside [{:.4}, {:.4}]", 0.5 * l, 2.0 * l));
    }
    let t = params.t();
    let tp = t.powf(2.0 - s);
    if tp < 0.5 * t || tp > 2.0 * t {
        return fail(format!("t^(2-s) / t = {:.4} outside [1/2, 2]", tp / t));
    }
    Ok(())
}

/// 2 t^(2-s) rho_E(0) X(s, Delta).
pub fn lambda_asymptotic(rho_e: &GridDensity, params: &ModelParams, s: f64) -> f64 {
    2.0 * params.t().powf(2.0 - s) * rho_e.eval(0.0) * weird_log(s, params.delta())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVectorBracket {
    pub lower: f64,
    pub upper: f64,
    /// Weight a of the test vector a u1 + u2 + u3 that minimises the upper bound.
    pub weight: f64,
    /// sup over |x| <= Delta of (F u_i)(x) / u1(x).
    pub inner: [f64; 3],
    /// sup over |x| >= Delta of (F u_i)(x) |x|^(2-s).
    pub outer: [f64; 3],
    pub rho0: f64,
    pub lipschitz: f64,
}

/// Eigenvalue bracket from the test vectors u1, u2, u3.
///
/// Lower: F u2 >= mu u2 with
/// mu = t^(2-s) [2 (rho_E(0) - eps - Lip alpha) X - 2 Lip (1 - Delta^s)/s],
/// since the kernel argument moves by at most t^2/Delta = alpha and
/// |rho_E(-y) - rho_E(0)| <= Lip |y|. Upper: for v = a u1 + u2 + u3,
/// F v <= max((a A1 + A2 + A3)/a, a B1 + B2 + B3) v with the sup constants
/// measured on the grid, B2 not below its closed-form majorant.
pub fn bracket_lambda_testvectors(
    op: &TransferOperator,
    rho_e: &GridDensity,
    params: &ModelParams,
    epsilon: f64,
) -> Result<TestVectorBracket, TransferError> {
    let s = op.s;
    threshold_check(params, s)?;
    let delta = params.delta();
    let nodes = &op.nodes;
    let us = [
        WeightedGridFunction::u1(nodes, params, s),
        WeightedGridFunction::u2(nodes, params, s),
        WeightedGridFunction::u3(nodes, params, s),
    ];
    let mut inner = [0.0; 3];
    let mut outer = [0.0; 3];
    for (i, u) in us.iter().enumerate() {
        let mut fu = vec![0.0; nodes.len()];
        op.matvec(&u.values, &mut fu);
        for (x, v) in nodes.iter().zip(&fu) {
            if x.abs() <= delta {
                inner[i] = f64::max(inner[i], v * delta);
            }
            if x.abs() >= delta {
                outer[i] = f64::max(outer[i], v * x.abs().powf(2.0 - s));
            }
        }
    }
    let rho0 = rho_e.eval(0.0);
    let lipschitz = rho_e.max_abs_slope();
    let x = weird_log(s, delta);
    let tp = params.t().powf(2.0 - s);
    let shift = lipschitz * params.alpha;
    let c = 2.0 * lipschitz * (1.0 - delta.powf(s)) / s;
    let lower = tp * (2.0 * (rho0 - epsilon - shift) * x - c);
    outer[1] = outer[1].max(tp * (2.0 * (rho0 + epsilon + shift) * x + c));

    let (a1, a23) = (inner[0], inner[1] + inner[2]);
    let (b1, b23) = (outer[0], outer[1] + outer[2]);
    let (weight, upper) = if b1 > 0.0 && a23 > 0.0 {
        let b = b23 - a1;
        let disc = (b * b + 4.0 * b1 * a23).sqrt();
        let a = if b > 0.0 { 2.0 * a23 / (b + disc) } else { (disc - b) / (2.0 * b1) };
        (a, f64::max(a1 + a23 / a, a * b1 + b23))
    } else {
        (f64::INFINITY, a1.max(b23))
    };
    Ok(TestVectorBracket { lower, upper, weight, inner, outer, rho0, lipschitz })
}
