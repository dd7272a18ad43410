//! One function per subcommand. Each returns the summary lines it wants
//! printed; artifacts go through the emitter.

use crate::config::{BoundaryName, RunConfig, TaskKind};
use crate::error::CliError;
use crate::output::{Cell, Emitter, Table};
use crate::suite::{run_suite_with, SuiteOptions};
use mobedge_core::cavity::{density_p_e, solve_rde, write_checkpoint};
use mobedge_core::potential::{check_regularity, RegularityGrid};
use mobedge_core::spectrum::{scan_edges, EdgeScanReport, PhasePoint, ScanConfig};
use mobedge_core::transfer::SpectralResult;
use mobedge_core::treesim::{phi_l_monte_carlo, Boundary, BoundaryMode, PhiEstimate};
use num_complex::Complex64;
use serde::Serialize;

pub struct Outcome {
    pub summary: Vec<String>,
    pub emitter: Emitter,
}

/// Validates, runs the configured task and writes its artifacts.
pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate()?;
    let emitter = Emitter::new(&config.output.directory, config.canonical(), config.output.formats.clone())?;
    let summary = match config.task.kind {
        TaskKind::Regularity => regularity(config, &emitter)?,
        TaskKind::Rde => rde(config, &emitter)?,
        TaskKind::Lambda => lambda(config, &emitter)?,
        TaskKind::Scan => scan(config, &emitter)?,
        TaskKind::Simulate => simulate(config, &emitter)?,
        TaskKind::Validate => validate(config, &emitter)?,
    };
    Ok(Outcome { summary, emitter })
}

fn regularity(config: &RunConfig, out: &Emitter) -> Result<Vec<String>, CliError> {
    let spec = config.spec()?;
    let report = check_regularity(&spec, spec.regularity_constant, &RegularityGrid::default())?;
    out.json("regularity", &report)?;
    let mut table = Table::new(vec!["condition", "pass", "worst_margin", "witness_x"]);
    let mut lines = Vec::new();
    for (i, c) in report.conditions().iter().enumerate() {
        table.push(vec![(i + 1).into(), c.pass.into(), c.worst_margin.into(), c.witness_x.into()]);
        lines.push(format!("condition_{} pass={} worst_margin={:.6e} witness_x={:.6}", i + 1, c.pass, c.worst_margin, c.witness_x));
    }
    out.csv("regularity", &table)?;
    Ok(lines)
}

#[derive(Serialize)]
struct RdeSummary<'a> {
    #[serde(rename = "E")]
    energy: f64,
    generations: usize,
    convergence_history: &'a [f64],
    p_e: &'a mobedge_core::cavity::KdeDensity,
}

fn rde(config: &RunConfig, out: &Emitter) -> Result<Vec<String>, CliError> {
    let e = config.task.energy.expect("validated");
    let params = config.params();
    let pool = solve_rde(&config.spec()?, &params, e, &config.rde(), config.seed().derive("rde", "cavity", 0))?;
    let p = density_p_e(&pool, &params, config.solver.rho_per_side);
    out.json("rde", &RdeSummary { energy: e, generations: pool.generation, convergence_history: &pool.convergence_history, p_e: &p })?;
    let mut table = Table::new(vec!["x", "value"]);
    for (x, v) in p.density.nodes.iter().zip(&p.density.values) {
        table.push(vec![(*x).into(), (*v).into()]);
    }
    out.csv("p_E", &table)?;
    let path = out.dir.join("pool.bin");
    write_checkpoint(&pool, &path)?;
    out.adopt(path);
    let last = pool.convergence_history.last().copied().unwrap_or(f64::NAN);
    Ok(vec![format!("E={e} N={} generations={} last_distance={last:.3e}", pool.len(), pool.generation)])
}

fn lambda(config: &RunConfig, out: &Emitter) -> Result<Vec<String>, CliError> {
    let e = config.task.energy.expect("validated");
    let pipeline = config.pipeline()?;
    let prep = pipeline.prepare(e)?;
    let results: Vec<SpectralResult> = config.s_ladder().iter().map(|&s| pipeline.lambda_prepared(&prep, s)).collect::<Result<_, _>>()?;
    out.json("lambda", &results)?;
    let mut table = Table::new(vec!["E", "s", "K", "lambda", "K_lambda", "cw_lower", "cw_upper", "tv_lower", "tv_upper", "residual", "iterations", "phase"]);
    let mut lines = Vec::new();
    for (j, r) in results.iter().enumerate() {
        let pt = PhasePoint::from_result(r);
        table.push(vec![
            r.energy.into(),
            r.s.into(),
            r.k.into(),
            r.lambda.into(),
            pt.k_lambda.into(),
            r.cw_lower.into(),
            r.cw_upper.into(),
            r.tv_lower.into(),
            r.tv_upper.into(),
            r.residual.into(),
            r.iterations.into(),
            pt.phase.as_str().into(),
        ]);
        let v = &r.eigenfunction;
        let mut eig = Table::new(vec!["x", "v", "weighted_v"]);
        for (x, y) in v.nodes.iter().zip(&v.values) {
            eig.push(vec![(*x).into(), (*y).into(), (y * v.weight(*x)).into()]);
        }
        out.csv(&format!("eigenfunction_{j}"), &eig)?;
        lines.push(format!("E={} s={:.6} K_lambda={:.6} cw=[{:.6}, {:.6}] {}", r.energy, r.s, pt.k_lambda, pt.cw_lower, pt.cw_upper, pt.phase.as_str()));
    }
    out.csv("lambda", &table)?;
    Ok(lines)
}

/// phase_points.csv and crossings.csv for a scan report.
pub fn emit_scan(out: &Emitter, suffix: &str, report: &EdgeScanReport) -> Result<(), CliError> {
    let mut points = Table::new(vec!["E", "s", "K_lambda", "phase", "free_energy", "cw_lower", "cw_upper"]);
    for p in &report.points {
        points.push(vec![p.energy.into(), p.s.into(), p.k_lambda.into(), p.phase.as_str().into(), p.free_energy.into(), p.cw_lower.into(), p.cw_upper.into()]);
    }
    out.csv(&format!("phase_points{suffix}"), &points)?;
    let mut crossings = Table::new(vec!["E", "direction", "predicted_root", "distance", "unpaired", "neighborhood_lo", "neighborhood_hi"]);
    for c in &report.crossings {
        crossings.push(vec![
            c.energy.into(),
            c.direction.as_str().into(),
            c.predicted_root.into(),
            c.distance.into(),
            c.unpaired.into(),
            c.neighborhood.0.into(),
            c.neighborhood.1.into(),
        ]);
    }
    out.csv(&format!("crossings{suffix}"), &crossings)
}

pub fn energy_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn scan(config: &RunConfig, out: &Emitter) -> Result<Vec<String>, CliError> {
    let [lo, hi] = config.task.energy_range.expect("validated");
    let energies = energy_grid(lo, hi, config.task.energy_step.expect("validated"));
    let cfg = config.task.resolution.map_or_else(ScanConfig::default, |resolution| ScanConfig { resolution });
    let report = scan_edges(&config.pipeline()?, &energies, &config.s_ladder(), &cfg)?;
    out.json("scan", &report)?;
    emit_scan(out, "", &report)?;
    let mut lines = vec![format!("{} crossings", report.crossings.len())];
    for c in &report.crossings {
        let dist = c.distance.map_or("none".to_string(), |d| format!("{d:.4}"));
        lines.push(format!("E*={:.6} {} distance_to_prediction={dist}", c.energy, c.direction.as_str()));
    }
    Ok(lines)
}

fn simulate(config: &RunConfig, out: &Emitter) -> Result<Vec<String>, CliError> {
    let t = &config.task;
    let (spec, params) = (config.spec()?, config.params());
    let z = Complex64::new(t.energy.expect("validated"), config.model.eta);
    let mode = match t.boundary.unwrap_or_default() {
        BoundaryName::Free => BoundaryMode::Free,
        BoundaryName::Cavity => BoundaryMode::Cavity,
    };
    let seed = config.seed();
    let boundary = Boundary::build(mode, &spec, &params, z, &config.rde(), seed.derive("simulate", "boundary", 0))?;
    let estimates: Vec<PhiEstimate> = config
        .s_ladder()
        .iter()
        .enumerate()
        .map(|(j, &s)| phi_l_monte_carlo(&spec, &params, z, t.depth.expect("validated"), s, t.n_samples.expect("validated"), &boundary, seed.derive("simulate", "treesim", j as u64)))
        .collect::<Result<_, _>>()?;
    out.json("phi", &estimates)?;
    let mut table = Table::new(vec!["E", "eta", "s", "L", "phi_L", "ci_lo", "ci_hi", "n_samples", "seed"]);
    let mut lines = Vec::new();
    for e in &estimates {
        table.push(vec![e.energy.into(), e.eta.into(), e.s.into(), e.depth.into(), e.phi_l.into(), e.ci_lo.into(), e.ci_hi.into(), e.n_samples.into(), Cell::Text(e.seed.0.to_string())]);
        lines.push(format!("E={} eta={:e} s={:.6} L={} phi_L={:.6} ci=[{:.6}, {:.6}]", e.energy, e.eta, e.s, e.depth, e.phi_l, e.ci_lo, e.ci_hi));
    }
    out.csv("phi", &table)?;
    Ok(lines)
}

fn validate(config: &RunConfig, out: &Emitter) -> Result<Vec<String>, CliError> {
    let opts = SuiteOptions { out_dir: out.dir.clone(), seed: config.solver.seed, criteria: config.task.criteria.clone(), threads: None };
    let report = run_suite_with(&opts)?;
    let lines: Vec<String> = report.lines();
    if !report.all_pass() {
        for l in &lines {
            println!("{l}");
        }
        return Err(CliError::SuiteFailed(format!("{} of {} criteria failed", report.failures(), report.results.len())));
    }
    Ok(lines)
}
