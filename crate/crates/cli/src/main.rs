use clap::{Args, Parser, Subcommand};
use mobedge_cli::suite::DEFAULT_SEED;
use mobedge_cli::{run, run_suite_with, CliError, Overrides, RunConfig, SuiteOptions, TaskKind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mobedge", version, about = "Mobility edges of the Anderson model on the Bethe lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the five regularity conditions of the potential density.
    Regularity(Common),
    /// Solve the cavity equation at one energy.
    Rde(Common),
    /// Leading transfer-operator eigenvalue along the s ladder.
    Lambda(Common),
    /// Scan an energy range for crossings of K lambda = 1.
    Scan(Common),
    /// Monte Carlo free energy on finite trees.
    Simulate(Common),
    /// Run the acceptance suite.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of criteria.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "E", allow_hyphen_values = true)]
    energy: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { energy: self.energy, k: self.k, s: self.s, seed: self.seed, out: self.out.clone() }
    }
}

fn env_out() -> Option<PathBuf> {
    std::env::var_os("MOBEDGE_OUT").map(PathBuf::from)
}

fn load(common: &Common, kind: TaskKind) -> Result<RunConfig, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Invalid(format!("{} needs --config", kind.as_str())))?;
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut config = RunConfig::parse(&text)?;
    config.task.kind = kind;
    config.apply(&common.overrides(), env_out());
    Ok(config)
}

fn execute(cli: Cli) -> Result<Vec<String>, CliError> {
    let (common, kind, criteria) = match &cli.command {
        Command::Regularity(c) => (c, TaskKind::Regularity, None),
        Command::Rde(c) => (c, TaskKind::Rde, None),
        Command::Lambda(c) => (c, TaskKind::Lambda, None),
        Command::Scan(c) => (c, TaskKind::Scan, None),
        Command::Simulate(c) => (c, TaskKind::Simulate, None),
        Command::Validate { common, criteria } => (common, TaskKind::Validate, criteria.clone()),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    }
    if kind == TaskKind::Validate && common.config.is_none() {
        let out_dir = common.out.clone().or_else(env_out).unwrap_or_else(|| PathBuf::from("out"));
        let opts = SuiteOptions { out_dir, seed: common.seed.unwrap_or(DEFAULT_SEED), criteria, threads: None };
        let report = run_suite_with(&opts)?;
        let lines = report.lines();
        if !report.all_pass() {
            lines.iter().for_each(|l| println!("{l}"));
            return Err(CliError::SuiteFailed(format!("{} of {} criteria failed", report.failures(), report.results.len())));
        }
        return Ok(lines);
    }
    let mut config = load(common, kind)?;
    if criteria.is_some() {
        config.task.criteria = criteria;
    }
    Ok(run(&config)?.summary)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(lines) => {
            lines.iter().for_each(|l| println!("{l}"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.payload());
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mobedge_cli::output::{sha256_hex, Artifact};
    use mobedge_core::potential::RegularityReport;
    use std::path::Path;

    const BASE: &str = r#"
[potential]
family = "cauchy"
params = { location = 0.0, scale = 1.0 }
regularity_constant = 4.0

[model]
K = 16
g = 0.3

[solver]
N = 10000
tol = 1e-3
max_iters = 200
n_conv = 200000
rho_per_side = 128
grid_per_side = 96
power_tol = 1e-10
power_max_iters = 5000
seed = 7

[task]
kind = "scan"
E_range = [-4.0, 4.0]
E_step = 1.0
"#;

    fn write_config(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        path
    }

    fn exec(args: &[&str]) -> Result<Vec<String>, CliError> {
        execute(Cli::try_parse_from(std::iter::once("mobedge").chain(args.iter().copied())).unwrap())
    }

    fn no_temporaries(dir: &Path) -> bool {
        std::fs::read_dir(dir).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp"))
    }

    fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())).collect();
        v.sort();
        v
    }

    #[test]
    fn syntax_errors_report_a_position_and_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), &BASE.replace("g = 0.3", "g = = 0.3"));
        let err = exec(&["regularity", "--config", cfg.to_str().unwrap()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(matches!(err, CliError::Parse { at: Some((9, _)), .. }), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), &BASE.replace("g = 0.3", "g = 0.3\ncoupling = 2.0"));
        let err = exec(&["regularity", "--config", cfg.to_str().unwrap()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("coupling"), "{err}");
        assert!(matches!(err, CliError::Parse { at: Some((10, 1)), .. }), "{err}");
    }

    #[test]
    fn invalid_values_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), BASE);
        let out = dir.path().join("out");
        let err = exec(&["rde", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).unwrap_err();
        assert_eq!(err.exit_code(), 2, "rde without E: {err}");
        let err = exec(&["regularity", "--config", cfg.to_str().unwrap(), "--K", "1", "--out", out.to_str().unwrap()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let payload: serde_json::Value = serde_json::from_str(&err.payload()).unwrap();
        assert_eq!(payload["module"], "config");
    }

    #[test]
    fn missing_config_file_exits_1() {
        let err = exec(&["regularity", "--config", "/nonexistent/run.toml"]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn regularity_artifacts_round_trip_and_repeat_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), BASE);
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let lines = exec(&["regularity", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).unwrap();
        assert_eq!(lines.len(), 5);
        assert!(lines.iter().all(|l| l.contains("pass=true")), "{lines:?}");
        exec(&["regularity", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]).unwrap();
        assert_eq!(listing(&a), listing(&b));
        assert!(no_temporaries(&a));

        let text = std::fs::read_to_string(a.join("regularity.json")).unwrap();
        let art: Artifact<RegularityReport> = serde_json::from_str(&text).unwrap();
        assert_eq!(art.config_hash, sha256_hex(&art.config));
        // the echo is itself a loadable config, minus the output directory
        let echoed = RunConfig::parse(&art.config).unwrap();
        assert_eq!(echoed.task.kind, TaskKind::Regularity);
        assert_eq!(echoed.solver.seed, 7);
        let again = serde_json::to_string_pretty(&art).unwrap() + "\n";
        assert_eq!(again, text);

        let csv = std::fs::read_to_string(a.join("regularity.csv")).unwrap();
        assert!(csv.starts_with(&format!("# config_hash={}\n", art.config_hash)));
        assert!(csv.lines().any(|l| l == "condition,pass,worst_margin,witness_x"));
    }

    #[test]
    fn flags_change_the_hash_but_the_directory_does_not() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), BASE);
        let hash = |args: &[&str]| {
            let out = dir.path().join(format!("run{}", args.join("_").replace('-', "")));
            let mut full = vec!["regularity", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
            full.extend_from_slice(args);
            exec(&full).unwrap();
            let art: Artifact<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(out.join("regularity.json")).unwrap()).unwrap();
            art.config_hash
        };
        let plain = hash(&[]);
        let elsewhere = dir.path().join("elsewhere");
        exec(&["regularity", "--config", cfg.to_str().unwrap(), "--out", elsewhere.to_str().unwrap()]).unwrap();
        let art: Artifact<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(elsewhere.join("regularity.json")).unwrap()).unwrap();
        assert_eq!(plain, art.config_hash);
        assert_ne!(plain, hash(&["--seed", "8"]));
        assert_ne!(plain, hash(&["--E", "-1.5"]));
    }

    #[test]
    fn output_directory_precedence() {
        let mut config = RunConfig::parse(BASE).unwrap();
        config.apply(&Overrides::default(), None);
        assert_eq!(config.output.directory, PathBuf::from("out"));
        config.apply(&Overrides::default(), Some("from_env".into()));
        assert_eq!(config.output.directory, PathBuf::from("from_env"));
        config.apply(&Overrides { out: Some("from_flag".into()), ..Overrides::default() }, Some("from_env".into()));
        assert_eq!(config.output.directory, PathBuf::from("from_flag"));
    }

    #[test]
    fn weak_coupling_scan_finds_no_crossings() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), BASE);
        let out = dir.path().join("scan");
        let lines = exec(&["scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).unwrap();
        assert_eq!(lines, vec!["0 crossings".to_string()]);
        let csv = std::fs::read_to_string(out.join("crossings.csv")).unwrap();
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1, "header only");
        let points = std::fs::read_to_string(out.join("phase_points.csv")).unwrap();
        assert_eq!(points.lines().filter(|l| !l.starts_with('#')).count(), 1 + 9);
        assert!(no_temporaries(&out));
    }

    #[test]
    fn validate_rejects_unknown_criteria() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), &BASE.replace("kind = \"scan\"", "kind = \"validate\"\ncriteria = [14]"));
        let err = exec(&["validate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("v").to_str().unwrap()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn validate_runs_a_subset() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("v");
        let lines = exec(&["validate", "--criteria", "1,2", "--out", out.to_str().unwrap()]).unwrap();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.contains("PASS")), "{lines:?}");
        assert!(out.join("criterion_01.json").is_file() && out.join("validate.json").is_file());
    }
}
