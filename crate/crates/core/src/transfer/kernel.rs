//! Exact integrals of rho_E against the hat functions of the collocation grid.

use crate::grid::{locate, GridDensity};
use crate::quad::{gauss_legendre, GL3_W, GL3_X};

/// A tabulated kernel with prefix integrals of rho and z rho, anchored at
/// the node nearest 0 so that short spans near the origin do not lose
/// digits to cancellation.
#[derive(Debug, Clone)]
pub struct Kernel {
    density: GridDensity,
    p0: Vec<f64>,
    p1: Vec<f64>,
    tail_x: Vec<f64>,
    tail_w: Vec<f64>,
}

/// Intervals spanning more kernel cells than this use prefix differences.
const DIRECT_CELLS: usize = 8;

impl Kernel {
    pub fn new(density: GridDensity) -> Self {
        let n = density.nodes.len();
        let nodes = &density.nodes;
        let anchor = (0..n).min_by(|&a, &b| nodes[a].abs().total_cmp(&nodes[b].abs())).unwrap();
        let c0: Vec<f64> = (0..n - 1).map(|k| density.cell_integral(k)).collect();
        let c1: Vec<f64> = (0..n - 1)
            .map(|k| {
                let (a, b) = (nodes[k], nodes[k + 1]);
                let (m, hw) = (0.5 * (a + b), 0.5 * (b - a));
                hw * (0..3)
                    .map(|q| {
                        let z = m + hw * GL3_X[q];
                        GL3_W[q] * z * density.eval_in_cell(k, z)
                    })
                    .sum::<f64>()
            })
            .collect();
        let mut p0 = vec![0.0; n];
        let mut p1 = vec![0.0; n];
        for k in anchor + 1..n {
            p0[k] = p0[k - 1] + c0[k - 1];
            p1[k] = p1[k - 1] + c1[k - 1];
        }
        for k in (0..anchor).rev() {
            p0[k] = p0[k + 1] - c0[k];
            p1[k] = p1[k + 1] - c1[k];
        }
        let (tx, tw) = gauss_legendre(24);
        let tail_x = tx.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let tail_w = tw.iter().map(|w| 0.5 * w).collect();
        Kernel { density, p0, p1, tail_x, tail_w }
    }

    pub fn density(&self) -> &GridDensity {
        &self.density
    }

    /// (int rho, int z rho) from the anchor to z, for z inside the grid.
    fn prefix(&self, z: f64) -> (f64, f64) {
        let k = locate(&self.density.nodes, z);
        let a = self.density.nodes[k];
        let (m, hw) = (0.5 * (a + z), 0.5 * (z - a));
        let (mut i0, mut i1) = (0.0, 0.0);
        for q in 0..3 {
            let x = m + hw * GL3_X[q];
            let v = GL3_W[q] * self.density.eval_in_cell(k, x);
            i0 += v;
            i1 += v * x;
        }
        (self.p0[k] + hw * i0, self.p1[k] + hw * i1)
    }

    /// Integrals of rho(-y - c) against the two hat functions of [y0, y1]:
    /// (int rho (y1 - y)/h, int rho (y - y0)/h).
    pub fn hat_weights(&self, y0: f64, y1: f64, c: f64) -> (f64, f64) {
        let h = y1 - y0;
        let nodes = &self.density.nodes;
        let n = nodes.len();
        let z_lo = -y1 - c;
        let z_hi = -y0 - c;
        let inside = z_lo >= nodes[0] && z_hi <= nodes[n - 1];
        // first node above z_lo and first node at or above z_hi
        let k_start = nodes.partition_point(|&x| x <= z_lo);
        let k_end = nodes.partition_point(|&x| x < z_hi);
        if inside && k_end.saturating_sub(k_start) > DIRECT_CELLS {
            let (a0, a1) = self.prefix(z_lo);
            let (b0, b1) = self.prefix(z_hi);
            let (j0, j1) = (b0 - a0, b1 - a1);
            return ((j1 - z_lo * j0) / h, (z_hi * j0 - j1) / h);
        }
        // direct: split [y0, y1] at preimages of kernel nodes, walking y upward
        let (mut wl, mut wr) = (0.0, 0.0);
        let mut ya = y0;
        let mut k = k_end;
        loop {
            let yb = if k > k_start { (-nodes[k - 1] - c).clamp(ya, y1) } else { y1 };
            if yb > ya {
                let (l, r) = self.piece(ya, yb, y0, y1, c);
                wl += l;
                wr += r;
            }
            if k <= k_start {
                break;
            }
            k -= 1;
            ya = yb;
        }
        (wl / h, wr / h)
    }

    /// Gauss rule on a sub-piece lying in one kernel cell (or in a tail).
    fn piece(&self, ya: f64, yb: f64, y0: f64, y1: f64, c: f64) -> (f64, f64) {
        let nodes = &self.density.nodes;
        let n = nodes.len();
        let (m, hw) = (0.5 * (ya + yb), 0.5 * (yb - ya));
        let zm = -m - c;
        let (mut l, mut r) = (0.0, 0.0);
        if zm >= nodes[0] && zm <= nodes[n - 1] {
            let k = locate(nodes, zm);
            for q in 0..3 {
                let y = m + hw * GL3_X[q];
                let v = GL3_W[q] * self.density.eval_in_cell(k, -y - c);
                l += v * (y1 - y);
                r += v * (y - y0);
            }
        } else {
            // pure power tail: exact moments in z = -y - c
            let (m0, m1) = self.tail_moments(-yb - c, -ya - c);
            return ((y1 + c) * m0 + m1, -m1 - (c + y0) * m0);
        }
        (l * hw, r * hw)
    }

    /// Amplitude A and exponent a of the tail A |z|^-a on the side of z.
    fn tail_law(&self, z: f64) -> (f64, f64) {
        let d = &self.density;
        let a = d.tail_exponent;
        let (xe, ve) = if z < 0.0 { (d.lo(), d.values[0]) } else { (d.hi(), d.values[d.len() - 1]) };
        (ve * xe.abs().powf(a), a)
    }

    /// (int rho, int z rho) over [z1, z2] inside one tail.
    fn tail_moments(&self, z1: f64, z2: f64) -> (f64, f64) {
        let (amp, a) = self.tail_law(0.5 * (z1 + z2));
        if z1 > 0.0 {
            (amp * power_integral(1.0 - a, z1, z2), amp * power_integral(2.0 - a, z1, z2))
        } else {
            (amp * power_integral(1.0 - a, -z2, -z1), -amp * power_integral(2.0 - a, -z2, -z1))
        }
    }

    /// Power-law closure beyond |y| = ymax on one side:
    /// int_{|y| > ymax, sign y = side} rho(-y - c) (ymax/|y|)^(2-s) dy.
    pub fn outer_tail(&self, ymax: f64, c: f64, s: f64, side: f64) -> f64 {
        let d = &self.density;
        let z_edge = -side * ymax - c;
        let beyond = if side > 0.0 { z_edge <= d.lo() } else { z_edge >= d.hi() };
        let shift = side * c;
        if beyond && shift.abs() < 0.5 * ymax {
            // rho = A (|y| + side c)^-a on the whole range: binomial series in c / |y|
            let (amp, a) = self.tail_law(z_edge);
            let p = 2.0 - s;
            let r = shift / ymax;
            let mut coef = 1.0;
            let mut sum = 0.0;
            for k in 0..60 {
                let term = coef / (a + p + k as f64 - 1.0);
                sum += term;
                if term.abs() < 1e-17 * sum.abs() {
                    break;
                }
                coef *= -(a + k as f64) / (k as f64 + 1.0) * r;
            }
            return amp * ymax.powf(1.0 - a) * sum;
        }
        // y = side * ymax / w, w in (0, 1]
        ymax * self
            .tail_x
            .iter()
            .zip(&self.tail_w)
            .map(|(&w, &q)| q * self.density.eval(-side * ymax / w - c) * w.powf(-s))
            .sum::<f64>()
    }
}

/// int_{z1}^{z2} z^(p-1) dz for 0 < z1 <= z2, stable as p -> 0.
fn power_integral(p: f64, z1: f64, z2: f64) -> f64 {
    let l = (z2 / z1).ln();
    let q = p * l;
    if q.abs() < 1e-12 {
        z1.powf(p) * l
    } else {
        z1.powf(p) * q.exp_m1() / p
    }
}
