//! Phase diagram from the cavity and transfer pipelines: K lambda at each
//! energy, crossings of K lambda = 1, and the sign of d lambda / dE.

use crate::cavity::{density_p_e, rho_e, rho_e_nodes, solve_rde, CavityError, Population, RdeConfig, RhoConfig};
use crate::grid::GridDensity;
use crate::model::ModelParams;
use crate::potential::{edge_window, solve_density_level, PotentialError, PotentialSpec};
use crate::rng::Seed;
use crate::transfer::{
    bracket_lambda_testvectors, power_iteration, upsilon_l, Kernel, PowerConfig, SpectralResult, TransferError, TransferGrid,
    TransferOperator, WeightedGridFunction,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Cavity(#[from] CavityError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid scan: {0}")]
    InvalidScan(String),
}

/// Every energy uses the same derived seeds. With `coupling` set, the pool
/// also runs a fixed number of generations and rho_E lives on nodes built
/// at `e_ref`, so nearby energies see common random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub spec: PotentialSpec,
    pub params: ModelParams,
    pub rde: RdeConfig,
    pub rho: RhoConfig,
    /// Transfer grid nodes per sign.
    pub grid_per_side: usize,
    pub power: PowerConfig,
    pub seed: Seed,
    pub coupling: Option<Coupling>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub e_ref: f64,
    pub generations: usize,
}

/// Pool, rho_E and kernel at one energy; reused across s.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub energy: f64,
    pub pool: Population<f64>,
    pub rho: GridDensity,
    pub kernel: Kernel,
    pub grid: TransferGrid,
}

impl Pipeline {
    pub fn new(spec: PotentialSpec, params: ModelParams, seed: Seed) -> Self {
        Pipeline {
            spec,
            params,
            rde: RdeConfig { n: 20_000, ..Default::default() },
            rho: RhoConfig::default(),
            grid_per_side: 512,
            power: PowerConfig::default(),
            seed,
            coupling: None,
        }
    }

    pub fn with_params(&self, params: ModelParams) -> Self {
        Pipeline { params, ..self.clone() }
    }

    /// Solves once at `e_ref` to fix the generation count, then couples.
    pub fn coupled_at(&self, e_ref: f64) -> Result<Self, SpectrumError> {
        let pool = solve_rde(&self.spec, &self.params, e_ref, &self.rde, self.seed.split("pool", 0))?;
        Ok(Pipeline { coupling: Some(Coupling { e_ref, generations: pool.generation }), ..self.clone() })
    }

    pub fn prepare(&self, energy: f64) -> Result<Prepared, SpectrumError> {
        let (rde, node_e) = match self.coupling {
            Some(c) => (RdeConfig { generations: Some(c.generations), ..self.rde }, c.e_ref),
            None => (self.rde, energy),
        };
        let pool = solve_rde(&self.spec, &self.params, energy, &rde, self.seed.split("pool", 0))?;
        let nodes = rho_e_nodes(&self.params, node_e, self.rho.per_side);
        let rho = rho_e(&pool, &self.spec, &self.params, energy, &self.rho, nodes, self.seed.split("rho", 0));
        let kernel = Kernel::new(rho.clone());
        let grid = TransferGrid::new(&self.params, self.grid_per_side);
        Ok(Prepared { energy, pool, rho, kernel, grid })
    }

    pub fn operator(&self, prep: &Prepared, s: f64) -> Result<TransferOperator, SpectrumError> {
        Ok(TransferOperator::new(&prep.kernel, &self.params, s, &prep.grid.nodes)?)
    }

    /// Perron eigenvalue at (E, s). The eigenfunction is scaled to L1 mass
    /// 1/(1-s); the test-vector bracket is attached when s passes the
    /// threshold check.
    pub fn lambda_prepared(&self, prep: &Prepared, s: f64) -> Result<SpectralResult, SpectrumError> {
        let op = self.operator(prep, s)?;
        let init = WeightedGridFunction::tilde_u(&op.nodes, &self.params, s);
        let out = power_iteration(&op, &init.values, &self.power)?;
        let mut eigenfunction = WeightedGridFunction { nodes: op.nodes.clone(), values: out.vector, s };
        let mass = eigenfunction.integral();
        eigenfunction = eigenfunction.scaled(1.0 / ((1.0 - s) * mass));
        let tv = bracket_lambda_testvectors(&op, &prep.rho, &self.params, 0.0).ok();
        Ok(SpectralResult {
            lambda: out.lambda,
            cw_lower: out.cw_lower,
            cw_upper: out.cw_upper,
            tv_lower: tv.as_ref().map(|b| b.lower),
            tv_upper: tv.as_ref().map(|b| b.upper),
            residual: out.residual,
            iterations: out.iterations,
            s,
            energy: prep.energy,
            k: self.params.k,
            g: self.params.g,
            alpha: self.params.alpha,
            eigenfunction,
        })
    }

    pub fn lambda_at(&self, energy: f64, s: f64) -> Result<SpectralResult, SpectrumError> {
        self.lambda_prepared(&self.prepare(energy)?, s)
    }

    pub fn free_energy(&self, energy: f64, s: f64) -> Result<f64, SpectrumError> {
        Ok(free_energy(self.params.k, self.lambda_at(energy, s)?.lambda))
    }

    /// ln Upsilon_L for L = 0..=l_max at (E, s).
    pub fn upsilon(&self, prep: &Prepared, s: f64, l_max: usize) -> Result<Vec<f64>, SpectrumError> {
        let op = self.operator(prep, s)?;
        let p = density_p_e(&prep.pool, &self.params, self.rho.per_side);
        Ok(upsilon_l(&p.density, &op, l_max))
    }
}

/// phi = ln K + ln lambda.
pub fn free_energy(k: usize, lambda: f64) -> f64 {
    (k as f64).ln() + lambda.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PurePoint,
    AbsolutelyContinuous,
    Uncertain,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PurePoint => "pure_point",
            Phase::AbsolutelyContinuous => "absolutely_continuous",
            Phase::Uncertain => "uncertain",
        }
    }
}

/// Labels below this distance from K lambda = 1 are discretisation noise.
pub const MARGIN_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    #[serde(rename = "E")]
    pub energy: f64,
    pub s: f64,
    #[serde(rename = "K_lambda")]
    pub k_lambda: f64,
    pub phase: Phase,
    pub free_energy: f64,
    /// Collatz-Wielandt bracket, in units of 1/K.
    pub cw_lower: f64,
    pub cw_upper: f64,
}

impl PhasePoint {
    pub fn from_result(r: &SpectralResult) -> Self {
        let k = r.k as f64;
        let (lo, hi) = (k * r.cw_lower, k * r.cw_upper);
        let k_lambda = k * r.lambda;
        let margin = (0.5 * (hi - lo)).max(MARGIN_FLOOR);
        PhasePoint {
            energy: r.energy,
            s: r.s,
            k_lambda,
            phase: classify(k_lambda, margin),
            free_energy: free_energy(r.k, r.lambda),
            cw_lower: lo,
            cw_upper: hi,
        }
    }
}

pub fn classify(k_lambda: f64, margin: f64) -> Phase {
    if k_lambda < 1.0 - margin {
        Phase::PurePoint
    } else if k_lambda > 1.0 + margin {
        Phase::AbsolutelyContinuous
    } else {
        Phase::Uncertain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    PpToAc,
    AcToPp,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::PpToAc => "pp_to_ac",
            Direction::AcToPp => "ac_to_pp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    #[serde(rename = "E_star")]
    pub energy: f64,
    pub direction: Direction,
    pub predicted_root: Option<f64>,
    pub distance: Option<f64>,
    /// No predicted root within 10 varpi.
    pub unpaired: bool,
    /// [E* - varpi, E* + varpi].
    pub neighborhood: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub phase: Phase,
    /// Label required by the sign of rho' at the paired root of the left
    /// endpoint (rho' < 0 gives pure point); None when the left end is the
    /// scan boundary or unpaired.
    pub expected: Option<Phase>,
}

impl Interval {
    pub fn consistent(&self) -> bool {
        self.expected.map_or(true, |p| p == self.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScanReport {
    pub s: f64,
    pub varpi: f64,
    pub points: Vec<PhasePoint>,
    pub crossings: Vec<Crossing>,
    pub predicted: Vec<f64>,
    pub intervals: Vec<Interval>,
    /// Energies labelled uncertain.
    pub uncertain_band: Vec<f64>,
}

impl EdgeScanReport {
    pub fn crossings_alternate(&self) -> bool {
        self.crossings.windows(2).all(|w| w[0].direction != w[1].direction)
    }

    pub fn unpaired(&self) -> impl Iterator<Item = &Crossing> {
        self.crossings.iter().filter(|c| c.unpaired)
    }

    pub fn rule_consistent(&self) -> bool {
        self.intervals.iter().all(Interval::consistent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Bisect each sign change until the bracket is narrower than this.
    pub resolution: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { resolution: 1e-3 }
    }
}

/// K lambda over `energies` at the largest member of `s_ladder`, with every
/// sign change of K lambda - 1 refined by bisection.
pub fn scan_edges(pipeline: &Pipeline, energies: &[f64], s_ladder: &[f64], cfg: &ScanConfig) -> Result<EdgeScanReport, SpectrumError> {
    if energies.len() < 2 || energies.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SpectrumError::InvalidScan("energy grid must be strictly increasing with two or more points".into()));
    }
    let s = s_ladder.iter().copied().fold(f64::NAN, f64::max);
    if !s.is_finite() {
        return Err(SpectrumError::InvalidScan("empty s ladder".into()));
    }
    let results: Vec<SpectralResult> = energies.par_iter().map(|&e| pipeline.lambda_at(e, s)).collect::<Result<_, _>>()?;
    let mut points: Vec<PhasePoint> = results.iter().map(PhasePoint::from_result).collect();

    let brackets: Vec<(f64, f64, f64)> = points
        .windows(2)
        .filter(|w| (w[0].k_lambda - 1.0).signum() != (w[1].k_lambda - 1.0).signum())
        .map(|w| (w[0].energy, w[1].energy, w[0].k_lambda - 1.0))
        .collect();
    let refined: Vec<(f64, Direction, Vec<PhasePoint>)> = brackets
        .par_iter()
        .map(|&(lo, hi, f_lo)| bisect(pipeline, s, lo, hi, f_lo, cfg.resolution))
        .collect::<Result<_, _>>()?;

    let (elo, ehi) = (energies[0], energies[energies.len() - 1]);
    let spec = &pipeline.spec;
    let predicted = if 1.0 / (4.0 * pipeline.params.g) < spec.sup_norm() {
        solve_density_level(spec, 1.0 / (4.0 * pipeline.params.g), elo, ehi)?
    } else {
        Vec::new()
    };
    let varpi = edge_window(spec.regularity_constant);
    let mut crossings = Vec::with_capacity(refined.len());
    for (e, direction, extra) in refined {
        points.extend(extra);
        let nearest = predicted.iter().copied().min_by(|a, b| (a - e).abs().total_cmp(&(b - e).abs()));
        let distance = nearest.map(|r| (r - e).abs());
        crossings.push(Crossing {
            energy: e,
            direction,
            predicted_root: nearest,
            distance,
            unpaired: distance.map_or(true, |d| d > 10.0 * varpi),
            neighborhood: (e - varpi, e + varpi),
        });
    }
    points.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    // Points bisected onto the crossing itself are not phase evidence.
    for p in points.iter_mut() {
        if crossings.iter().any(|c| (p.energy - c.energy).abs() < cfg.resolution) {
            p.phase = Phase::Uncertain;
        }
    }

    let mut cuts = vec![elo];
    cuts.extend(crossings.iter().map(|c| c.energy));
    cuts.push(ehi);
    let intervals = cuts
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let inside: Vec<&PhasePoint> = points.iter().filter(|p| p.energy > w[0] && p.energy < w[1] && p.phase != Phase::Uncertain).collect();
            let phase = majority(&inside);
            let expected = i.checked_sub(1).and_then(|j| crossings[j].predicted_root).map(|r| {
                if spec.derivative(r) < 0.0 {
                    Phase::PurePoint
                } else {
                    Phase::AbsolutelyContinuous
                }
            });
            Interval { lo: w[0], hi: w[1], phase, expected }
        })
        .collect();
    let uncertain_band = points.iter().filter(|p| p.phase == Phase::Uncertain).map(|p| p.energy).collect();
    Ok(EdgeScanReport { s, varpi, points, crossings, predicted, intervals, uncertain_band })
}

fn majority(points: &[&PhasePoint]) -> Phase {
    let pp = points.iter().filter(|p| p.phase == Phase::PurePoint).count();
    let ac = points.iter().filter(|p| p.phase == Phase::AbsolutelyContinuous).count();
    match pp.cmp(&ac) {
        std::cmp::Ordering::Greater => Phase::PurePoint,
        std::cmp::Ordering::Less => Phase::AbsolutelyContinuous,
        std::cmp::Ordering::Equal => Phase::Uncertain,
    }
}

fn bisect(pipeline: &Pipeline, s: f64, mut lo: f64, mut hi: f64, f_lo: f64, resolution: f64) -> Result<(f64, Direction, Vec<PhasePoint>), SpectrumError> {
    let direction = if f_lo < 0.0 { Direction::PpToAc } else { Direction::AcToPp };
    let mut visited = Vec::new();
    while hi - lo >= resolution {
        let mid = 0.5 * (lo + hi);
        let p = PhasePoint::from_result(&pipeline.lambda_at(mid, s)?);
        if (p.k_lambda - 1.0).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        visited.push(p);
    }
    Ok((0.5 * (lo + hi), direction, visited))
}

/// Every labelled point with |rho(E) - 1/(4g)| > tolerance has
/// sign(K lambda - 1) = sign(rho(E) - 1/(4g)).
pub fn classification_consistent(points: &[PhasePoint], spec: &PotentialSpec, g: f64, tolerance: f64) -> bool {
    let level = 1.0 / (4.0 * g);
    points.iter().all(|p| {
        let gap = spec.density(p.energy) - level;
        p.phase == Phase::Uncertain || gap.abs() <= tolerance || (gap > 0.0) == (p.phase == Phase::AbsolutelyContinuous)
    })
}

/// lambda(E) with a per-point noise estimate.
pub trait LambdaProvider: Sync {
    fn lambda(&self, energy: f64) -> Result<(f64, f64), SpectrumError>;
}

/// A coupled pipeline at fixed s; noise is the power-iteration uncertainty.
pub struct CoupledLambda<'a> {
    pub pipeline: &'a Pipeline,
    pub s: f64,
}

impl LambdaProvider for CoupledLambda<'_> {
    fn lambda(&self, energy: f64) -> Result<(f64, f64), SpectrumError> {
        let r = self.pipeline.lambda_at(energy, self.s)?;
        Ok((r.lambda, (r.residual * r.lambda).max(r.cw_upper - r.cw_lower)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    NonIncreasing,
    NonDecreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub expected: Trend,
    pub energies: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Twice the largest per-point noise.
    pub noise_floor: f64,
    pub violations: usize,
    /// Every adjacent difference is below the noise floor.
    pub flat: bool,
}

/// Sign of rho' on [E0 - 1/L, E0 + 1/L], or an error if it changes.
pub fn derivative_sign(spec: &PotentialSpec, e0: f64) -> Result<Trend, SpectrumError> {
    let w = 1.0 / spec.regularity_constant;
    let n = 2000;
    let signs: Vec<f64> = (0..=n).map(|i| spec.derivative(e0 - w + 2.0 * w * i as f64 / n as f64)).collect();
    if signs.iter().all(|&d| d < 0.0) {
        Ok(Trend::NonIncreasing)
    } else if signs.iter().all(|&d| d > 0.0) {
        Ok(Trend::NonDecreasing)
    } else {
        Err(SpectrumError::HypothesisViolated(format!("rho' changes sign on [{}, {}]", e0 - w, e0 + w)))
    }
}

/// lambda at `n_points` equally spaced energies in [E0 - h, E0 + h]; counts
/// adjacent pairs moving against the sign of rho' by more than the floor.
pub fn monotonicity_check<P: LambdaProvider>(
    provider: &P,
    spec: &PotentialSpec,
    e0: f64,
    half_width: f64,
    n_points: usize,
) -> Result<MonotonicityReport, SpectrumError> {
    let expected = derivative_sign(spec, e0)?;
    if half_width > edge_window(spec.regularity_constant) {
        return Err(SpectrumError::InvalidScan("half width exceeds varpi".into()));
    }
    if n_points < 2 {
        return Err(SpectrumError::InvalidScan("need two or more energies".into()));
    }
    let energies: Vec<f64> = (0..n_points).map(|i| e0 - half_width + 2.0 * half_width * i as f64 / (n_points - 1) as f64).collect();
    let values: Vec<(f64, f64)> = energies.par_iter().map(|&e| provider.lambda(e)).collect::<Result<_, _>>()?;
    let noise_floor = 2.0 * values.iter().map(|v| v.1).fold(0.0, f64::max);
    let lambdas: Vec<f64> = values.iter().map(|v| v.0).collect();
    let diffs: Vec<f64> = lambdas.windows(2).map(|w| w[1] - w[0]).collect();
    let violations = diffs
        .iter()
        .filter(|&&d| match expected {
            Trend::NonIncreasing => d > noise_floor,
            Trend::NonDecreasing => d < -noise_floor,
        })
        .count();
    let flat = diffs.iter().all(|d| d.abs() <= noise_floor);
    Ok(MonotonicityReport { expected, energies, lambdas, noise_floor, violations, flat })
}
