//! Run manifests: a sectioned TOML file with every key checked.

use crate::error::CliError;
use crate::output::sha256_hex;
use mobedge_core::cavity::{RdeConfig, RhoConfig};
use mobedge_core::spectrum::Pipeline;
use mobedge_core::transfer::PowerConfig;
use mobedge_core::{ModelParams, PotentialFamily, PotentialSpec, Seed};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialBlock,
    pub model: ModelBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Cauchy,
    Gaussian,
    CauchyMixture,
}

/// Union of the parameter names of every family; `spec` checks that
/// exactly the right ones are present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stddev: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locations: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    pub family: FamilyName,
    #[serde(default)]
    pub params: FamilyParams,
    pub regularity_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(rename = "K")]
    pub k: usize,
    pub g: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Explicit exponents; when absent the ladder 1 - 2^-j / ln K is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_ladder: Option<Vec<f64>>,
    #[serde(default = "default_levels")]
    pub ladder_levels: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(rename = "N")]
    pub n: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub n_conv: usize,
    pub rho_per_side: usize,
    pub grid_per_side: usize,
    pub power_tol: f64,
    pub power_max_iters: usize,
    pub seed: u64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let rde = RdeConfig::default();
        let rho = RhoConfig::default();
        let power = PowerConfig::default();
        SolverBlock {
            n: 20_000,
            tol: rde.tol,
            max_iters: rde.max_iters,
            n_conv: rho.n_conv,
            rho_per_side: rho.per_side,
            grid_per_side: 512,
            power_tol: power.tol,
            power_max_iters: power.max_iters,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regularity,
    Rde,
    Lambda,
    Scan,
    Simulate,
    Validate,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Regularity => "regularity",
            TaskKind::Rde => "rde",
            TaskKind::Lambda => "lambda",
            TaskKind::Scan => "scan",
            TaskKind::Simulate => "simulate",
            TaskKind::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    Free,
    #[default]
    Cavity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    pub kind: TaskKind,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// [lo, hi] for scans.
    #[serde(rename = "E_range", default, skip_serializing_if = "Option::is_none")]
    pub energy_range: Option<[f64; 2]>,
    #[serde(rename = "E_step", default, skip_serializing_if = "Option::is_none")]
    pub energy_step: Option<f64>,
    /// Bisection width for scan crossings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    /// A single exponent instead of the ladder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryName>,
    /// Subset of acceptance criteria for `validate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Left out of the echoed config: where results go does not change them.
    #[serde(default = "default_dir", skip_serializing)]
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { directory: default_dir(), formats: vec![Format::Csv, Format::Json] }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_alpha() -> f64 {
    0.1
}

fn default_levels() -> usize {
    4
}

fn default_eta() -> f64 {
    1e-4
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub energy: Option<f64>,
    pub k: Option<usize>,
    pub s: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parse errors carry the line and column of the offending key.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let at = e.span().map(|span| line_col(text, span.start));
            CliError::Parse { at, message: e.message().to_string() }
        })
    }

    /// Flags beat `MOBEDGE_OUT`, which beats the file.
    pub fn apply(&mut self, o: &Overrides, env_out: Option<PathBuf>) {
        if let Some(e) = o.energy {
            self.task.energy = Some(e);
        }
        if let Some(k) = o.k {
            self.model.k = k;
        }
        if let Some(s) = o.s {
            self.task.s = Some(s);
        }
        if let Some(seed) = o.seed {
            self.solver.seed = seed;
        }
        if let Some(dir) = o.out.clone().or(env_out) {
            self.output.directory = dir;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Invalid(m.to_string()));
        self.spec()?.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        if !self.params().is_valid() {
            return bad("model needs K >= 2, finite g >= 0 and 0 < alpha < 1");
        }
        if !(self.model.eta > 0.0) {
            return bad("eta must be positive");
        }
        if self.s_ladder().iter().any(|&s| !(s > 0.0 && s < 1.0)) || self.s_ladder().is_empty() {
            return bad("every s must lie in (0, 1)");
        }
        if self.output.formats.is_empty() {
            return bad("output.formats is empty");
        }
        let t = &self.task;
        let needs_energy = matches!(t.kind, TaskKind::Rde | TaskKind::Lambda | TaskKind::Simulate);
        if needs_energy && t.energy.is_none() {
            return bad("task needs E");
        }
        if t.kind == TaskKind::Scan {
            match (t.energy_range, t.energy_step) {
                (Some([lo, hi]), Some(step)) if lo < hi && step > 0.0 => {}
                _ => return bad("scan needs E_range = [lo, hi] with lo < hi and E_step > 0"),
            }
        }
        if t.kind == TaskKind::Simulate && (t.depth.is_none() || t.n_samples.is_none()) {
            return bad("simulate needs L and n_samples");
        }
        if let Some(c) = &t.criteria {
            if c.iter().any(|&i| !(1..=13).contains(&i)) {
                return bad("criteria are numbered 1 to 13");
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<PotentialSpec, CliError> {
        let p = &self.potential.params;
        let missing = |name: &str| CliError::Invalid(format!("potential.params.{name} is required for {:?}", self.potential.family));
        let family = match self.potential.family {
            FamilyName::Cauchy => PotentialFamily::Cauchy {
                location: p.location.ok_or_else(|| missing("location"))?,
                scale: p.scale.ok_or_else(|| missing("scale"))?,
            },
            FamilyName::Gaussian => PotentialFamily::Gaussian {
                mean: p.mean.ok_or_else(|| missing("mean"))?,
                stddev: p.stddev.ok_or_else(|| missing("stddev"))?,
            },
            FamilyName::CauchyMixture => PotentialFamily::CauchyMixture {
                weights: p.weights.clone().ok_or_else(|| missing("weights"))?,
                locations: p.locations.clone().ok_or_else(|| missing("locations"))?,
                scales: p.scales.clone().ok_or_else(|| missing("scales"))?,
            },
        };
        Ok(PotentialSpec { family, regularity_constant: self.potential.regularity_constant })
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { k: self.model.k, g: self.model.g, alpha: self.model.alpha }
    }

    pub fn s_ladder(&self) -> Vec<f64> {
        match (self.task.s, &self.model.s_ladder) {
            (Some(s), _) => vec![s],
            (None, Some(l)) => l.clone(),
            (None, None) => self.params().s_ladder(self.model.ladder_levels),
        }
    }

    pub fn seed(&self) -> Seed {
        Seed(self.solver.seed)
    }

    pub fn rde(&self) -> RdeConfig {
        RdeConfig { n: self.solver.n, tol: self.solver.tol, max_iters: self.solver.max_iters, ..RdeConfig::default() }
    }

    pub fn pipeline(&self) -> Result<Pipeline, CliError> {
        let mut p = Pipeline::new(self.spec()?, self.params(), self.seed());
        p.rde = self.rde();
        p.rho = RhoConfig { n_conv: self.solver.n_conv, per_side: self.solver.rho_per_side, ..RhoConfig::default() };
        p.grid_per_side = self.solver.grid_per_side;
        p.power = PowerConfig { tol: self.solver.power_tol, max_iters: self.solver.power_max_iters, ..PowerConfig::default() };
        Ok(p)
    }

    /// The effective configuration, after overrides, in canonical form.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(&self.canonical())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}
