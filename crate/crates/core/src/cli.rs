//! Command-line front end: argument parsing, run configuration, artifact
//! output and exit codes.
//!
//! Exit codes: 0 success, 1 runtime failure (including a failed `validate`),
//! 2 weight matrix not positive definite, 3 invalid input or precondition.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::conformal::{deformed_spectrum_with, in_accepted_range, ConformalFactor};
use crate::eigensolver::Tolerances;
use crate::error::{DiracError, Result};
use crate::experiments::{
    genericity_scan, random_factor, split_search, ScanParams, SplitOptions,
};
use crate::perturbation::{fd_check, perturbation_matrix, EigenCluster, FdReport, PerturbationReport};
use crate::torus::{build_mode_set, closed_form_spectrum, SpinStructure};
use crate::validation::run_validation;

pub const MAX_ORDER: usize = 8;

#[derive(Parser, Debug)]
#[command(name = "dirac-spectra", version, about = "Dirac spectra of conformally deformed flat 3-tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Spectrum of the (deformed) Dirac operator.
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        factor: FactorArgs,
    },
    /// Closed-form flat spectrum up to a bound.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        lambda_max: Option<f64>,
    },
    /// First-order rates of a flat eigenvalue cluster, with a finite-difference check.
    Perturb {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        factor: FactorArgs,
        /// Signed cluster position: k > 0 is the k-th positive eigenvalue.
        #[arg(long, allow_hyphen_values = true)]
        cluster: Option<i64>,
        /// Comma-separated deformation parameters for the finite-difference table.
        #[arg(long, value_delimiter = ',')]
        fd_t: Option<Vec<f64>>,
    },
    /// Search for a conformal factor that splits a flat eigenvalue cluster.
    SplitSearch {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, allow_hyphen_values = true)]
        cluster: Option<i64>,
        #[arg(long)]
        max_degree: Option<usize>,
    },
    /// Monte Carlo multiplicity scan over random conformal factors.
    Genericity {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        amplitude: Option<f64>,
        /// Number of positive clusters examined per trial.
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Run the self-check suite.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Spin structure as `a,b,c` with entries 0 or 1.
    #[arg(long)]
    pub delta: Option<SpinStructure>,
    /// Truncation order.
    #[arg(long = "N")]
    pub order: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// JSON run configuration; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct FactorArgs {
    /// Constant conformal factor.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["f_file", "f_json", "f_random_degree"])]
    pub f_const: Option<f64>,
    /// Conformal factor JSON file.
    #[arg(long, conflicts_with_all = ["f_json", "f_random_degree"])]
    pub f_file: Option<PathBuf>,
    /// Inline conformal factor JSON.
    #[arg(long, conflicts_with = "f_random_degree")]
    pub f_json: Option<String>,
    /// Random factor of this degree (seeded by `--seed`).
    #[arg(long)]
    pub f_random_degree: Option<usize>,
    #[arg(long, requires = "f_random_degree")]
    pub f_random_amplitude: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Where the conformal factor comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FactorSource {
    Const { value: f64 },
    File { path: PathBuf },
    Inline { factor: serde_json::Value },
    Random { seed: u64, degree: usize, amplitude: f64 },
}

impl FactorSource {
    pub fn load(&self) -> Result<ConformalFactor> {
        match self {
            FactorSource::Const { value } => Ok(ConformalFactor::constant(*value)),
            FactorSource::File { path } => ConformalFactor::from_json(&std::fs::read_to_string(path)?),
            FactorSource::Inline { factor } => Ok(serde_json::from_value(factor.clone())?),
            FactorSource::Random {
                seed,
                degree,
                amplitude,
            } => Ok(random_factor(*seed, *degree, *amplitude)),
        }
    }
}

/// Run configuration, read from a JSON file and/or flags. Absent entries
/// take command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub delta: Option<SpinStructure>,
    #[serde(rename = "N")]
    pub order: Option<usize>,
    pub t: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub factor: Option<FactorSource>,
    pub tolerances: Option<Tolerances>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
    pub cluster: Option<i64>,
    pub max_degree: Option<usize>,
    pub trials: Option<usize>,
    pub degree: Option<usize>,
    pub amplitude: Option<f64>,
    pub clusters: Option<usize>,
    pub lambda_max: Option<f64>,
}

macro_rules! merge_fields {
    ($base:ident, $over:ident; $($field:ident),*) => {
        $( if $over.$field.is_some() { $base.$field = $over.$field; } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Entries of `other` replace those of `self`.
    pub fn merged(mut self, other: RunConfig) -> Self {
        merge_fields!(self, other; delta, order, t, t_grid, seed, factor, tolerances, out,
            format, workers, cluster, max_degree, trials, degree, amplitude, clusters, lambda_max);
        self
    }

    fn from_common(c: &CommonArgs) -> Self {
        RunConfig {
            delta: c.delta,
            order: c.order,
            t: c.t,
            seed: c.seed,
            out: c.out.clone(),
            format: c.format,
            workers: c.workers,
            ..Default::default()
        }
    }

    fn load(common: &CommonArgs, flags: RunConfig) -> Result<Self> {
        let base = match &common.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let cfg = base.merged(RunConfig::from_common(common)).merged(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks shared by all commands.
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.order {
            if !(1..=MAX_ORDER).contains(&n) {
                return Err(DiracError::InvalidInput(format!("N must lie in [1, {MAX_ORDER}], got {n}")));
            }
        }
        if let Some(tol) = &self.tolerances {
            if !(tol.cluster_flat > 0.0 && tol.cluster_split > 0.0 && tol.residual > 0.0) {
                return Err(DiracError::InvalidInput("tolerances must be positive".into()));
            }
        }
        for t in self.t.iter().chain(self.t_grid.iter().flatten()) {
            if !t.is_finite() {
                return Err(DiracError::InvalidInput(format!("t = {t} is not finite")));
            }
        }
        if self.workers == Some(0) {
            return Err(DiracError::InvalidInput("workers must be positive".into()));
        }
        Ok(())
    }

    pub fn delta(&self) -> SpinStructure {
        self.delta.unwrap_or(SpinStructure::TRIVIAL)
    }

    pub fn order(&self) -> usize {
        self.order.unwrap_or(3)
    }

    pub fn t(&self) -> f64 {
        self.t.unwrap_or(0.0)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn factor(&self) -> Result<ConformalFactor> {
        self.factor
            .as_ref()
            .map_or(Ok(ConformalFactor::zero()), FactorSource::load)
    }

    /// The factor, rejecting a `t` outside `|t| (max f - min f) ≤ 1`.
    fn checked_factor(&self) -> Result<ConformalFactor> {
        let f = self.factor()?;
        for &t in self.t.iter().chain(self.t_grid.iter().flatten()) {
            if !in_accepted_range(&f, t) {
                return Err(DiracError::InvalidInput(format!(
                    "t = {t} is outside the accepted range for {}",
                    f.describe()
                )));
            }
        }
        Ok(f)
    }
}

fn factor_source(args: &FactorArgs, seed: Option<u64>) -> Result<Option<FactorSource>> {
    if let Some(value) = args.f_const {
        return Ok(Some(FactorSource::Const { value }));
    }
    if let Some(path) = &args.f_file {
        return Ok(Some(FactorSource::File { path: path.clone() }));
    }
    if let Some(text) = &args.f_json {
        return Ok(Some(FactorSource::Inline {
            factor: serde_json::from_str(text)?,
        }));
    }
    if let Some(degree) = args.f_random_degree {
        return Ok(Some(FactorSource::Random {
            seed: seed.unwrap_or(0),
            degree,
            amplitude: args.f_random_amplitude.unwrap_or(0.3),
        }));
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbOutput {
    pub report: PerturbationReport,
    pub fd: Option<FdReport>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let DiracError::SplitExhausted { table, .. } = &e {
                if let Ok(t) = serde_json::to_string_pretty(table) {
                    eprintln!("{t}");
                }
            }
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Spectrum { common, factor } => {
            let flags = RunConfig {
                factor: factor_source(&factor, common.seed)?,
                ..Default::default()
            };
            let cfg = RunConfig::load(&common, flags)?;
            let f = cfg.checked_factor()?;
            let modes = build_mode_set(cfg.order(), cfg.delta())?;
            let spec = deformed_spectrum_with(&f, cfg.t(), &modes, &cfg.tolerances.unwrap_or_default())?;
            let art = spec.to_artifact();
            let body = match cfg.format() {
                Format::Json => pretty(&art),
                Format::Csv => art.to_csv(),
            };
            emit(&cfg, &body)?;
        }
        Command::Oracle { common, lambda_max } => {
            let cfg = RunConfig::load(&common, RunConfig { lambda_max, ..Default::default() })?;
            let lines = closed_form_spectrum(cfg.delta(), cfg.lambda_max.unwrap_or(2.5))?;
            let body = match cfg.format() {
                Format::Json => pretty(&lines),
                Format::Csv => {
                    let mut s = String::from("lambda,mult_complex,mult_quaternionic\n");
                    for l in &lines {
                        s.push_str(&format!("{},{},{}\n", l.lambda, l.mult_complex, l.mult_quaternionic));
                    }
                    s
                }
            };
            emit(&cfg, &body)?;
        }
        Command::Perturb {
            common,
            factor,
            cluster,
            fd_t,
        } => {
            let flags = RunConfig {
                factor: factor_source(&factor, common.seed)?,
                cluster,
                t_grid: fd_t,
                ..Default::default()
            };
            let cfg = RunConfig::load(&common, flags)?;
            require_json(&cfg)?;
            let f = cfg.checked_factor()?;
            let modes = build_mode_set(cfg.order(), cfg.delta())?;
            let c = EigenCluster::flat(modes, cfg.cluster.unwrap_or(1))?;
            let report = perturbation_matrix(&c, &f)?;
            let t_grid = cfg.t_grid.clone().unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]);
            let fd = if t_grid.is_empty() || f.is_constant() && f.mean() == 0.0 {
                None
            } else {
                Some(fd_check(&c, &f, &t_grid)?)
            };
            emit(&cfg, &pretty(&PerturbOutput { report, fd }))?;
        }
        Command::SplitSearch {
            common,
            cluster,
            max_degree,
        } => {
            let cfg = RunConfig::load(&common, RunConfig { cluster, max_degree, ..Default::default() })?;
            require_json(&cfg)?;
            let modes = build_mode_set(cfg.order(), cfg.delta())?;
            let c = EigenCluster::flat(modes, cfg.cluster.unwrap_or(1))?;
            let opts = SplitOptions {
                t_verify: cfg.t.unwrap_or(0.05),
                seed: cfg.seed(),
                ..SplitOptions::default()
            };
            let cert = split_search(&c, cfg.max_degree.unwrap_or(2), &opts)?;
            emit(&cfg, &pretty(&cert))?;
        }
        Command::Genericity {
            common,
            trials,
            degree,
            amplitude,
            clusters,
        } => {
            let flags = RunConfig {
                trials,
                degree,
                amplitude,
                clusters,
                ..Default::default()
            };
            let cfg = RunConfig::load(&common, flags)?;
            let d = ScanParams::default();
            let params = ScanParams {
                delta: cfg.delta.unwrap_or(d.delta),
                trials: cfg.trials.unwrap_or(d.trials),
                t: cfg.t.unwrap_or(d.t),
                order: cfg.order.unwrap_or(d.order),
                degree: cfg.degree.unwrap_or(d.degree),
                amplitude: cfg.amplitude.unwrap_or(d.amplitude),
                seed: cfg.seed(),
                clusters: cfg.clusters.unwrap_or(d.clusters),
                workers: cfg.workers.unwrap_or(d.workers),
            };
            let report = genericity_scan(&params)?;
            let body = match cfg.format() {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
            };
            emit(&cfg, &body)?;
        }
        Command::Validate { common } => {
            let cfg = RunConfig::load(&common, RunConfig::default())?;
            require_json(&cfg)?;
            let report = run_validation(cfg.seed());
            emit(&cfg, &pretty(&report))?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAILED {}: {}", c.name, c.detail);
            }
            return Ok(if report.passed { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn require_json(cfg: &RunConfig) -> Result<()> {
    if cfg.format() == Format::Csv {
        return Err(DiracError::InvalidInput("this command only writes JSON".into()));
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn emit(cfg: &RunConfig, body: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, body)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let file = RunConfig {
            order: Some(2),
            t: Some(0.1),
            seed: Some(4),
            ..Default::default()
        };
        let flags = RunConfig {
            t: Some(0.3),
            ..Default::default()
        };
        let m = file.merged(flags);
        assert_eq!((m.order, m.t, m.seed), (Some(2), Some(0.3), Some(4)));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = RunConfig {
            delta: Some(SpinStructure::new([1, 0, 1]).unwrap()),
            order: Some(3),
            factor: Some(FactorSource::Random {
                seed: 3,
                degree: 2,
                amplitude: 0.3,
            }),
            tolerances: Some(Tolerances::default()),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"N\":3"));
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(RunConfig { order: Some(9), ..Default::default() }.validate().is_err());
        assert!(RunConfig { order: Some(0), ..Default::default() }.validate().is_err());
        let bad_tol = Tolerances { residual: 0.0, ..Tolerances::default() };
        assert!(RunConfig { tolerances: Some(bad_tol), ..Default::default() }.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn parse_errors_exit_with_validation_code() {
        assert_eq!(run(["dirac-spectra", "spectrum", "--delta", "2,0,0"]), 3);
        assert_eq!(run(["dirac-spectra", "frobnicate"]), 3);
    }

    #[test]
    fn t_outside_accepted_range_is_rejected() {
        let cfg = RunConfig {
            t: Some(5.0),
            factor: Some(FactorSource::Const { value: 0.0 }),
            ..Default::default()
        };
        assert!(cfg.checked_factor().is_ok());
        let cfg = RunConfig {
            t: Some(5.0),
            factor: Some(FactorSource::Random { seed: 0, degree: 1, amplitude: 0.3 }),
            ..Default::default()
        };
        assert_eq!(cfg.checked_factor().unwrap_err().exit_code(), 3);
    }
}
