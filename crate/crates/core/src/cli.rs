//! Command-line front end.
//!
//! ```text
//! verk run --problem wind --methods mverk41,sverk41,rk4 --k 4..8 --t-end 10 --out results
//! verk check-tableau tableaux/three-eighths.json
//! ```
//!
//! Exit codes: 0 success, 1 order conditions violated (`check-tableau`),
//! 2 configuration error, 3 divergence, 4 unreliable reference. Fatal errors
//! are printed to stderr as one JSON object.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::harness::{self, Environment, HarnessError, RunReport, StudyConfig, TimingMode};
use crate::integrators::{resolve_scheme, IntegrationError, Scheme};
use crate::matfun::Vector;
use crate::problems::{self, AllenCahnGrid, Problem, ToyKind};
use crate::tableau::{check_order4, Tableau, TableauError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ORDER_VIOLATED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_UNRELIABLE_REFERENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "verk", version, about = "Explicit exponential Runge-Kutta convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a convergence/efficiency study and write CSV and JSON results.
    Run(RunArgs),
    /// Check a JSON tableau against the eight fourth-order conditions.
    CheckTableau {
        path: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// wind | allen-cahn | nls | scalar-linear | scalar-quadratic
    #[arg(long)]
    problem: String,
    /// Comma-separated method ids.
    #[arg(long, value_delimiter = ',', default_value = "mverk41,mverk42,sverk41,sverk42")]
    methods: Vec<String>,
    /// Stepsize exponents A..B, h = 2^-k.
    #[arg(long)]
    k: Option<String>,
    /// Final time (defaults per problem).
    #[arg(long)]
    t_end: Option<f64>,
    /// Reference stepsize is the finest h divided by this factor.
    #[arg(long, default_value_t = harness::MIN_REFINEMENT)]
    ref_factor: usize,
    /// Output directory for `<problem>.csv` and `<problem>.json`.
    #[arg(long, default_value = "verk-out")]
    out: PathBuf,
    /// sequential | parallel
    #[arg(long, default_value = "sequential")]
    timing: String,
    /// Custom coefficients for the mverk4/sverk4/rk methods.
    #[arg(long)]
    tableau: Option<PathBuf>,
    /// Problem parameter override, key=value; repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
    /// Timing repetitions per (method, h).
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
}

/// Fully resolved run configuration, embedded in the JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: String,
    pub params: BTreeMap<String, Value>,
    pub methods: Vec<String>,
    pub k_min: i32,
    pub k_max: i32,
    pub t_end: f64,
    pub ref_factor: usize,
    pub out: PathBuf,
    pub timing: TimingMode,
    pub repetitions: usize,
    pub tableau: Option<PathBuf>,
}

impl RunConfig {
    pub fn k_range(&self) -> RangeInclusive<i32> {
        self.k_min..=self.k_max
    }
}

/// A fatal CLI error with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({"error": self.kind, "message": self.message, "exit_code": self.code}).to_string()
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let (code, kind) = match &e {
            HarnessError::UnreliableReference { .. } => (EXIT_UNRELIABLE_REFERENCE, "unreliable-reference"),
            HarnessError::Integration(IntegrationError::Divergence { .. }) => (EXIT_DIVERGENCE, "divergence"),
            HarnessError::Io(_) => (EXIT_CONFIG, "io"),
            _ => (EXIT_CONFIG, "config"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<IntegrationError> for CliError {
    fn from(e: IntegrationError) -> Self {
        HarnessError::from(e).into()
    }
}

impl From<TableauError> for CliError {
    fn from(e: TableauError) -> Self {
        Self {
            code: EXIT_CONFIG,
            kind: "tableau",
            message: e.to_string(),
        }
    }
}

/// Parses `A..B` (or `A..=B`) into an inclusive range.
pub fn parse_k_range(s: &str) -> Result<(i32, i32), CliError> {
    let bad = || CliError::config(format!("--k expects A..B with integers A <= B, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: i32 = a.trim().parse().map_err(|_| bad())?;
    let b: i32 = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

/// Default (k_min, k_max, t_end) per problem.
fn problem_defaults(problem: &str) -> Result<(i32, i32, f64), CliError> {
    match problem {
        "wind" => Ok((4, 8, 10.0)),
        "allen-cahn" => Ok((9, 13, 10.0)),
        "nls" => Ok((3, 7, 10.0)),
        "scalar-linear" | "scalar-quadratic" => Ok((4, 8, 1.0)),
        other => Err(CliError::config(format!(
            "unknown problem `{other}` (expected wind, allen-cahn, nls, scalar-linear or scalar-quadratic)"
        ))),
    }
}

#[derive(Clone, Copy)]
enum ParamKind {
    Real,
    Count,
    Grid,
}

fn param_schema(problem: &str) -> &'static [(&'static str, ParamKind)] {
    use ParamKind::*;
    match problem {
        "wind" => &[("theta", Real), ("r", Real), ("x1", Real), ("x2", Real)],
        "allen-cahn" => &[("epsilon", Real), ("n", Count), ("grid", Grid)],
        "nls" => &[("n", Count)],
        _ => &[("lambda", Real)],
    }
}

fn default_params(problem: &str) -> BTreeMap<String, Value> {
    let pairs: Vec<(&str, Value)> = match problem {
        "wind" => vec![("theta", json!(FRAC_PI_2)), ("r", json!(20.0)), ("x1", json!(1.0)), ("x2", json!(0.0))],
        "allen-cahn" => vec![("epsilon", json!(0.01)), ("n", json!(32)), ("grid", json!("chebyshev"))],
        "nls" => vec![("n", json!(16))],
        _ => vec![("lambda", json!(1.0))],
    };
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Applies `key=value` overrides, type-checked against the problem.
fn resolve_params(problem: &str, overrides: &[String]) -> Result<BTreeMap<String, Value>, CliError> {
    let mut params = default_params(problem);
    let schema = param_schema(problem);
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--param expects key=value, got `{item}`")))?;
        let kind = schema.iter().find(|(k, _)| *k == key).map(|(_, t)| *t).ok_or_else(|| {
            let known: Vec<_> = schema.iter().map(|(k, _)| *k).collect();
            CliError::config(format!(
                "problem `{problem}` has no parameter `{key}` (known: {})",
                known.join(", ")
            ))
        })?;
        let parsed = match kind {
            ParamKind::Real => value
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(|x| json!(x)),
            ParamKind::Count => value.parse::<usize>().ok().map(|x| json!(x)),
            ParamKind::Grid => ["chebyshev", "uniform-fd"].contains(&value).then(|| json!(value)),
        }
        .ok_or_else(|| CliError::config(format!("invalid value `{value}` for parameter `{key}`")))?;
        params.insert(key.to_string(), parsed);
    }
    Ok(params)
}

fn real(params: &BTreeMap<String, Value>, key: &str) -> f64 {
    params[key].as_f64().expect("type-checked")
}

fn count(params: &BTreeMap<String, Value>, key: &str) -> usize {
    params[key].as_u64().expect("type-checked") as usize
}

/// Builds the selected problem with its span ending at `t_end`.
pub fn build_problem(problem: &str, params: &BTreeMap<String, Value>, t_end: f64) -> Result<Problem, CliError> {
    let p = match problem {
        "wind" => problems::wind_oscillation(real(params, "theta"), real(params, "r"))
            .map(|p| p.with_y0(Vector::from_vec(vec![real(params, "x1"), real(params, "x2")]))),
        "allen-cahn" => {
            let grid = match params["grid"].as_str() {
                Some("uniform-fd") => AllenCahnGrid::UniformFd,
                _ => AllenCahnGrid::Chebyshev,
            };
            problems::allen_cahn_with_grid(real(params, "epsilon"), count(params, "n"), grid)
        }
        "nls" => problems::nls_pseudospectral(count(params, "n")),
        "scalar-linear" => Ok(problems::scalar_toy(real(params, "lambda"), ToyKind::Linear)),
        "scalar-quadratic" => Ok(problems::scalar_toy(real(params, "lambda"), ToyKind::Quadratic)),
        other => return Err(problem_defaults(other).unwrap_err()),
    }
    .map_err(|e| CliError::config(e.to_string()))?;
    if !(t_end > p.t_span().0 && t_end.is_finite()) {
        return Err(CliError::config(format!("--t-end must exceed the start time, got {t_end}")));
    }
    Ok(p.with_t_end(t_end))
}

fn resolve(args: RunArgs) -> Result<RunConfig, CliError> {
    let (dk_min, dk_max, dt_end) = problem_defaults(&args.problem)?;
    let (k_min, k_max) = match &args.k {
        Some(s) => parse_k_range(s)?,
        None => (dk_min, dk_max),
    };
    let methods: Vec<String> = args
        .methods
        .iter()
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    if methods.is_empty() {
        return Err(CliError::config("--methods must name at least one method"));
    }
    if args.repetitions == 0 {
        return Err(CliError::config("--repetitions must be positive"));
    }
    let timing: TimingMode = args.timing.parse()?;
    Ok(RunConfig {
        params: resolve_params(&args.problem, &args.params)?,
        problem: args.problem,
        methods,
        k_min,
        k_max,
        t_end: args.t_end.unwrap_or(dt_end),
        ref_factor: args.ref_factor,
        out: args.out,
        timing,
        repetitions: args.repetitions,
        tableau: args.tableau,
    })
}

fn prepare_output(dir: &Path) -> Result<(), CliError> {
    let unwritable = |e: std::io::Error| CliError {
        code: EXIT_CONFIG,
        kind: "io",
        message: format!("output path {} is not writable: {e}", dir.display()),
    };
    fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".verk-write-probe");
    fs::write(&probe, b"").map_err(unwritable)?;
    let _ = fs::remove_file(probe);
    Ok(())
}

/// Executes a resolved run; returns the report that was written.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<RunReport, CliError> {
    let p = build_problem(&cfg.problem, &cfg.params, cfg.t_end)?;
    let custom = cfg.tableau.as_ref().map(Tableau::from_json_file).transpose()?;
    let schemes: Vec<(String, Scheme)> = cfg
        .methods
        .iter()
        .map(|m| Ok((m.clone(), resolve_scheme(m, custom.as_ref())?)))
        .collect::<Result<_, CliError>>()?;
    let study = StudyConfig {
        refinement: cfg.ref_factor,
        repetitions: cfg.repetitions,
        timing: cfg.timing,
    };
    // Fail on a bad output path before spending time on the study.
    prepare_output(&cfg.out)?;

    let (y_ref, reports) = harness::run_studies(&p, &schemes, cfg.k_range(), &study)?;
    let tableau_meta = match (&cfg.tableau, &custom) {
        (Some(path), Some(t)) => Some(json!({
            "path": path.display().to_string(),
            "coefficients": serde_json::from_str::<Value>(&t.to_json()).unwrap_or_default(),
        })),
        _ => None,
    };
    let report = RunReport {
        config: serde_json::to_value(cfg).unwrap_or_default(),
        environment: Environment::capture(&p, &y_ref, tableau_meta),
        reports,
    };

    let io = |e: std::io::Error| CliError {
        code: EXIT_CONFIG,
        kind: "io",
        message: e.to_string(),
    };
    let csv_path = cfg.out.join(format!("{}.csv", cfg.problem));
    let json_path = cfg.out.join(format!("{}.json", cfg.problem));
    harness::write_csv(fs::File::create(&csv_path).map_err(io)?, &report.reports)?;
    harness::write_json(fs::File::create(&json_path).map_err(io)?, &report)?;

    write_summary(stdout, &report).map_err(io)?;
    writeln!(stdout, "wrote {} and {}", csv_path.display(), json_path.display()).map_err(io)?;
    Ok(report)
}

fn write_summary(out: &mut dyn Write, report: &RunReport) -> std::io::Result<()> {
    let env = &report.environment;
    writeln!(
        out,
        "problem {} (dim {}, t in [{}, {}])",
        env.problem, env.dimension, env.t_span.0, env.t_span.1
    )?;
    writeln!(out, "{:<16} {:>8}  GE by k", "method", "order")?;
    for rep in &report.reports {
        let order = rep.fitted_order.map_or("-".to_string(), |o| format!("{o:.3}"));
        let errors: Vec<String> = rep
            .rows
            .iter()
            .map(|r| {
                if r.diverged {
                    format!("{}:diverged", r.k)
                } else {
                    format!("{}:{:.2e}{}", r.k, r.global_error, if r.at_floor { "*" } else { "" })
                }
            })
            .collect();
        write!(out, "{:<16} {:>8}  {}", rep.method, order, errors.join(" "))?;
        if rep.all_at_floor() {
            write!(out, "  (exact: every error at the roundoff floor)")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "* at or below the roundoff floor {:.2e}", env.roundoff_floor)
}

/// Prints the residuals; returns whether all conditions hold.
pub fn check_tableau(path: &Path, out: &mut dyn Write) -> Result<bool, CliError> {
    let t = Tableau::from_json_file(path)?;
    let report = check_order4(&t)?;
    let names = [
        "sum b_i = 1",
        "sum b_i c_i = 1/2",
        "sum b_i c_i^2 = 1/3",
        "sum b_i a_ij c_j = 1/6",
        "sum b_i c_i^3 = 1/4",
        "sum b_i c_i a_ij c_j = 1/8",
        "sum b_i a_ij c_j^2 = 1/12",
        "b_4 a_43 a_32 c_2 = 1/24",
    ];
    let io = |e: std::io::Error| CliError {
        code: EXIT_CONFIG,
        kind: "io",
        message: e.to_string(),
    };
    for (name, r) in names.iter().zip(report.residuals) {
        writeln!(out, "{name:<28} residual {r:+.3e}").map_err(io)?;
    }
    writeln!(
        out,
        "{} (max residual {:.3e}, tolerance {:.0e})",
        if report.satisfied { "PASS" } else { "FAIL" },
        report.max_residual(),
        crate::tableau::ORDER_TOLERANCE
    )
    .map_err(io)?;
    Ok(report.satisfied)
}

/// Entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return EXIT_OK;
            }
            let err = CliError::config(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return err.code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Run(args) => resolve(args).and_then(|cfg| run(&cfg, &mut out)).map(|_| EXIT_OK),
        Command::CheckTableau { path } => {
            check_tableau(&path, &mut out).map(|ok| if ok { EXIT_OK } else { EXIT_ORDER_VIOLATED })
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}
