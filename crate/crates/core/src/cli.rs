//! Command-line frontend.
//!
//! Every command reads a CSV with a header row and a schema sidecar (see
//! [`crate::schema`] for the format). Files are written to a temporary file in the
//! target directory and renamed into place, so a failed run never leaves partial output.
//!
//! Exit status: 0 on success, 1 when a checked constraint does not hold, 2 on usage,
//! input or I/O errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::construct::{anonymize_t_close_with, integer_t, QiStrategy};
use crate::distance::DEFAULT_GRID_RESOLUTION;
use crate::dpbridge::{anonymize_dp, dp_to_t_bound_with, t_to_eps, verify_class_pairs, CoefficientVariant};
use crate::model::{load_dataset, Microdata};
use crate::oracle::{run_sweep, SweepConfig};
use crate::schema::{load_schema, render_schema};
use crate::tcheck::{
    check_stochastic_t_closeness, check_t_closeness, check_t_closeness_per_attribute, StochasticMechanismSpec,
};

#[derive(Debug, Parser)]
#[command(
    name = "tclose",
    version,
    about = "t-closeness and differential privacy for microdata"
)]
pub struct Cli {
    /// Worker threads for parallel checks (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check (stochastic) t-closeness of a table and print a closeness report.
    Check(CheckArgs),
    /// Release a k-anonymous t-close table by bucketizing a confidential column.
    AnonymizeTclose(TcloseArgs),
    /// Release a k-anonymous table with Laplace-perturbed confidential columns.
    AnonymizeDp(DpArgs),
    /// Convert between epsilon and t.
    Bound(BoundArgs),
    /// Run a verification sweep and append one JSON report per line.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Input {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Schema sidecar (`column.key = value` lines).
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub io: Input,
    #[arg(long)]
    pub t: f64,
    /// Confidential columns to check jointly (default: all confidential columns).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// One report per column instead of the joint check.
    #[arg(long)]
    pub per_attribute: bool,
    /// Also report class-to-class distances against `t^2`.
    #[arg(long, conflicts_with_all = ["per_attribute", "laplace_scale"])]
    pub pairwise: bool,
    /// Check stochastic t-closeness of Laplace masking with this scale.
    #[arg(long, conflicts_with = "per_attribute")]
    pub laplace_scale: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID_RESOLUTION)]
    pub grid_resolution: usize,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TcloseArgs {
    #[command(flatten)]
    pub io: Input,
    /// Release CSV; the certificate goes next to it with a `.json` extension and the
    /// release schema with a `.schema` extension.
    #[arg(long)]
    pub output: PathBuf,
    /// Confidential column to bucketize.
    #[arg(long)]
    pub column: String,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 1)]
    pub l: usize,
    #[arg(long, default_value = "greedy-seed")]
    pub strategy: String,
}

#[derive(Debug, Args)]
pub struct DpArgs {
    #[command(flatten)]
    pub io: Input,
    /// Release CSV; sidecars as for `anonymize-tclose`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Total budget, split equally over the confidential columns.
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("direction").required(true).args(["dp_to_t", "t_to_eps"])))]
pub struct BoundArgs {
    /// t guaranteed by epsilon-DP over the given classes.
    #[arg(long, requires_all = ["n", "classes", "epsilon"])]
    pub dp_to_t: bool,
    /// epsilon implied by t-closeness.
    #[arg(long, requires = "t")]
    pub t_to_eps: bool,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated class sizes.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Use the `N - |E| - 1` coefficient instead of `N - |E|`.
    #[arg(long, requires = "dp_to_t")]
    pub stated_coefficient: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Sweep configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// JSON-lines log to append to (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Record wall-clock runtimes (makes the log non-reproducible).
    #[arg(long)]
    pub with_timing: bool,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ConstraintFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::ConstraintFailed => 1,
        }
    }

    fn from_passed(passed: bool) -> Self {
        if passed {
            Outcome::Success
        } else {
            Outcome::ConstraintFailed
        }
    }
}

/// Usage, input and I/O errors (exit status 2).
#[derive(Debug)]
pub struct CliError(pub String);

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

fn fail<E: std::fmt::Display>(e: E) -> CliError {
    CliError(e.to_string())
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError("--jobs must be at least 1".into()));
        }
        // Ignore the error raised when a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Check(args) => check(args),
        Command::AnonymizeTclose(args) => anonymize_tclose(args),
        Command::AnonymizeDp(args) => anonymize_dp_cmd(args),
        Command::Bound(args) => bound(args),
        Command::Verify(args) => verify(args),
    }
}

fn load(io: &Input) -> Result<Microdata, CliError> {
    let schema = load_schema(&io.schema).map_err(fail)?;
    load_dataset(&io.input, schema).map_err(fail)
}

/// Write `bytes` to `path` atomically.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.persist(path)
        .map_err(|e| CliError(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check(args: CheckArgs) -> Result<Outcome, CliError> {
    let data = load(&args.io)?;
    let columns: Vec<String> = if args.columns.is_empty() {
        data.confidential_columns()
            .iter()
            .map(|&c| data.schema()[c].name.clone())
            .collect()
    } else {
        args.columns.clone()
    };
    let (doc, passed) = if let Some(scale) = args.laplace_scale {
        let [column] = columns.as_slice() else {
            return Err(CliError("--laplace-scale needs exactly one confidential column".into()));
        };
        let mech = StochasticMechanismSpec::laplace(column.as_str(), scale).map_err(fail)?;
        let report = check_stochastic_t_closeness(&data, &mech, args.t, args.grid_resolution).map_err(fail)?;
        (to_json(&report), report.satisfied)
    } else if args.per_attribute {
        let reports = check_t_closeness_per_attribute(&data, &columns, args.t).map_err(fail)?;
        let passed = reports.iter().all(|r| r.report.satisfied);
        (to_json(&reports), passed)
    } else {
        let report = check_t_closeness(&data, &columns, args.t).map_err(fail)?;
        if args.pairwise && report.satisfied {
            let pairwise = verify_class_pairs(&data, args.t).map_err(fail)?;
            let passed = pairwise.passed;
            (to_json(&json!({ "report": report, "pairwise": pairwise })), passed)
        } else {
            (to_json(&report), report.satisfied)
        }
    };
    emit(args.output.as_deref(), &doc)?;
    Ok(Outcome::from_passed(passed))
}

fn write_release(output: &Path, data: &Microdata, sidecar: &serde_json::Value) -> Result<(), CliError> {
    let csv = data.to_csv_string().map_err(fail)?;
    write_atomic(
        &output.with_extension("schema"),
        render_schema(data.schema()).as_bytes(),
    )?;
    write_atomic(&output.with_extension("json"), to_json(sidecar).as_bytes())?;
    write_atomic(output, csv.as_bytes())
}

fn anonymize_tclose(args: TcloseArgs) -> Result<Outcome, CliError> {
    let data = load(&args.io)?;
    let t = integer_t(args.t).map_err(fail)?;
    let strategy: QiStrategy = args.strategy.parse().map_err(fail)?;
    let release = anonymize_t_close_with(&data, &args.column, t, args.l, strategy).map_err(fail)?;
    let sidecar = json!({
        "certificate": release.certificate,
        "t": t,
        "l": args.l,
        "k": release.partition.k,
        "strategy": strategy.name(),
        "buckets": release.buckets.buckets,
        "classes": release.partition.classes,
        "provenance": release.provenance,
    });
    write_release(&args.output, &release.data, &sidecar)?;
    Ok(Outcome::from_passed(release.certificate.satisfied))
}

fn anonymize_dp_cmd(args: DpArgs) -> Result<Outcome, CliError> {
    let data = load(&args.io)?;
    let release = anonymize_dp(&data, args.k, args.epsilon, args.seed).map_err(fail)?;
    let sidecar = json!({
        "certificate": release.certificate,
        "k": release.partition.k,
        "seed": args.seed,
        "mechanisms": release.mechanisms,
        "provenance": release.provenance,
    });
    write_release(&args.output, &release.data, &sidecar)?;
    Ok(Outcome::Success)
}

fn bound(args: BoundArgs) -> Result<Outcome, CliError> {
    let certificate = if args.dp_to_t {
        let variant = if args.stated_coefficient {
            CoefficientVariant::Stated
        } else {
            CoefficientVariant::Derived
        };
        dp_to_t_bound_with(args.n.unwrap(), &args.classes, args.epsilon.unwrap(), variant).map_err(fail)?
    } else {
        t_to_eps(args.t.unwrap()).map_err(fail)?
    };
    print!("{}", to_json(&certificate));
    Ok(Outcome::Success)
}

fn verify(args: VerifyArgs) -> Result<Outcome, CliError> {
    let config = SweepConfig::load(&args.config).map_err(|e| CliError(format!("{}: {e}", args.config.display())))?;
    let reports = run_sweep(&config, args.with_timing).map_err(fail)?;
    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&r.to_json_line());
        lines.push('\n');
    }
    match &args.output {
        Some(path) => {
            let mut log = match fs::read(path) {
                Ok(bytes) => bytes,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                Err(e) => return Err(CliError(format!("{}: {e}", path.display()))),
            };
            if !log.is_empty() && !log.ends_with(b"\n") {
                log.push(b'\n');
            }
            log.extend_from_slice(lines.as_bytes());
            write_atomic(path, &log)?;
        }
        None => print!("{lines}"),
    }
    Ok(Outcome::from_passed(reports.iter().all(|r| r.passed)))
}
