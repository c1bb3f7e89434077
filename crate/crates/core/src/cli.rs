//! Command-line front end. Exit codes: 0 success, 1 verification or
//! computation failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{overlay_sections, Config};
use crate::error::{Error, Result};
use crate::koornwinder::{eigenvalue_d, interpolation_checks, koornwinder_poly, theorem_equality, InterpKind, Shape, MAX_RETRIES};
use crate::laurent::{ExactParams, Partition, PolyJson};
use crate::sigma::{Kind, Truncation};
use crate::verify::{run_suite, IdentityId, SuiteSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ruijsenaars", version, about = "Kernel identities of Ruijsenaars operators and exact Koornwinder polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate identity residuals at random points; one JSON report per line.
    Verify(VerifyArgs),
    /// Compute a Koornwinder polynomial, optionally checking a column or row formula.
    Koornwinder(KoornwinderArgs),
    /// Check the interpolation (vanishing and normalization) properties.
    Interp(InterpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Rational,
    Trig,
    Elliptic,
}

impl From<FamilyArg> for Kind {
    fn from(f: FamilyArg) -> Kind {
        match f {
            FamilyArg::Rational => Kind::Rational,
            FamilyArg::Trig => Kind::Trigonometric,
            FamilyArg::Elliptic => Kind::Elliptic,
        }
    }
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    /// Comma-separated identity names; all identities valid for the family when omitted.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    #[arg(long, value_enum, default_value = "trig")]
    family: FamilyArg,
    /// Run a single size instead of each identity's default grid.
    #[arg(long)]
    m: Option<usize>,
    /// Second size; defaults to the value of --m.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Override the family tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Number of factors kept in infinite products.
    #[arg(long)]
    trunc: Option<usize>,
    /// TOML overlay on the default configuration.
    #[arg(long)]
    params_file: Option<PathBuf>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CheckArg {
    Column,
    Row,
}

#[derive(Debug, clap::Args)]
struct KoornwinderArgs {
    /// Partition as a comma list, e.g. 2,1; 0 is the empty partition.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    m: usize,
    /// Compare with the explicit column or row formula.
    #[arg(long, value_enum)]
    check: Option<CheckArg>,
    /// Length of the column or row for --check.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    params_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InterpArg {
    ColumnE,
    RowH,
}

#[derive(Debug, clap::Args)]
struct InterpArgs {
    #[arg(long, value_enum)]
    kind: InterpArg,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    params_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure carrying its exit code.
struct Exit(i32, String);

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            _ => EXIT_FAIL,
        };
        Exit(code, e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Exit {
    Exit(EXIT_USAGE, msg.into())
}

/// Load the configuration, refusing overlays meant for the other mode.
fn load_config(path: &Option<PathBuf>, numeric: bool) -> std::result::Result<Config, Exit> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let sections = overlay_sections(&text)?;
    let foreign: &[&str] = if numeric { &["exact"] } else { &["params", "family", "truncation", "tolerance"] };
    if let Some(s) = sections.iter().find(|s| foreign.contains(&s.as_str())) {
        let mode = if numeric { "numeric (additive)" } else { "exact (square-rational)" };
        return Err(usage(format!("section [{s}] does not belong to the {mode} mode of this command")));
    }
    Ok(Config::with_overlay(&text)?)
}

fn emit<T: Serialize>(value: &T, out: &Option<PathBuf>, stdout: &mut dyn Write) -> std::result::Result<(), Exit> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Exit(EXIT_FAIL, e.to_string()))?;
    text.push('\n');
    write_out(&text, out, stdout)
}

fn write_out(text: &str, out: &Option<PathBuf>, stdout: &mut dyn Write) -> std::result::Result<(), Exit> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Exit(EXIT_FAIL, e.to_string())),
    }
}

fn cmd_verify(a: VerifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> std::result::Result<i32, Exit> {
    let mut cfg = load_config(&a.params_file, true)?;
    if let Some(k) = a.trunc {
        cfg.truncation = Truncation::new(k, cfg.truncation.term_tol).map_err(|e| usage(e.to_string()))?;
    }
    let kind: Kind = a.family.into();
    let ids: Vec<IdentityId> = if a.ids.is_empty() {
        IdentityId::ALL.into_iter().filter(|id| !id.default_sizes(kind).is_empty()).collect()
    } else {
        a.ids.iter().map(|s| s.trim().parse()).collect::<Result<_>>()?
    };
    let sizes = match (a.m, a.n) {
        (None, None) => None,
        (Some(m), n) => Some(vec![(m, n.unwrap_or(m))]),
        (None, Some(_)) => return Err(usage("--n needs --m")),
    };
    let tol = a.tol.unwrap_or(cfg.tolerance.of(kind));
    if !(tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let samples = a.samples.unwrap_or(cfg.samples);
    if samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let spec = SuiteSpec {
        ids,
        fam: cfg.family(kind)?,
        params: cfg.params.for_kind(kind)?,
        sizes,
        samples,
        seed: a.seed.unwrap_or(cfg.seed),
        tol,
    };
    for id in &spec.ids {
        if !spec.cases().iter().any(|c| c.0 == *id) {
            let _ = writeln!(stderr, "skipped {id}: not applicable to the {kind} family at the requested size");
        }
    }
    let reports = run_suite(&spec)?;
    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&serde_json::to_string(r).map_err(|e| Exit(EXIT_FAIL, e.to_string()))?);
        lines.push('\n');
    }
    write_out(&lines, &a.out, stdout)?;
    for r in &reports {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(stderr, "{verdict} {} {} m={} n={} max_residual={:.3e}", r.id, r.family, r.m, r.n, r.max_residual);
    }
    match reports.iter().find(|r| !r.passed) {
        Some(r) => {
            let dump = serde_json::to_string_pretty(r).unwrap_or_default();
            let _ = writeln!(stderr, "first failure:\n{dump}");
            Ok(EXIT_FAIL)
        }
        None => Ok(EXIT_OK),
    }
}

#[derive(Serialize)]
struct Fraction {
    num: String,
    den: String,
}

#[derive(Serialize)]
struct CheckOut {
    kind: Shape,
    r: usize,
    equal: bool,
}

#[derive(Serialize)]
struct PolyOut {
    lambda: Vec<u32>,
    m: usize,
    params: ExactParams,
    eigenvalue: Fraction,
    poly: PolyJson,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    retry_log: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check: Option<CheckOut>,
}

fn cmd_koornwinder(a: KoornwinderArgs, stdout: &mut dyn Write) -> std::result::Result<i32, Exit> {
    let cfg = load_config(&a.params_file, false)?;
    let shape = a.check.map(|c| match c {
        CheckArg::Column => Shape::Column,
        CheckArg::Row => Shape::Row,
    });
    if shape.is_some() != a.r.is_some() {
        return Err(usage("--check and --r go together"));
    }
    let lambda: Partition = match (&a.lambda, shape, a.r) {
        (Some(s), _, _) => s.parse().map_err(|e: Error| usage(e.to_string()))?,
        (None, Some(Shape::Column), Some(r)) => Partition::column(r),
        (None, Some(Shape::Row), Some(r)) => Partition::row(u32::try_from(r).map_err(|_| usage("--r too large"))?),
        _ => return Err(usage("give --lambda or --check with --r")),
    };
    if lambda.length() > a.m {
        return Err(usage(format!("partition {lambda} has more than {} parts", a.m)));
    }
    let base = cfg.exact.params.clone();
    let mut ep = base.clone();
    let mut retry_log = Vec::new();
    let mut attempt: u32 = 0;
    let (poly, check) = loop {
        let res = koornwinder_poly(&lambda, &ep, a.m).and_then(|p| {
            let check = match (shape, a.r) {
                (Some(kind), Some(r)) => Some(CheckOut { kind, r, equal: theorem_equality(kind, r, a.m, &ep)? }),
                _ => None,
            };
            Ok((p, check))
        });
        match res {
            Err(Error::Collision(msg)) if attempt < MAX_RETRIES => {
                retry_log.push(format!("attempt {attempt}: {msg}; perturbing √t"));
                ep = base.perturbed(attempt);
                attempt += 1;
            }
            other => break other?,
        }
    };
    let d = eigenvalue_d(&lambda, &ep, a.m)?;
    let failed = check.as_ref().is_some_and(|c| !c.equal);
    let out = PolyOut {
        lambda: lambda.parts().to_vec(),
        m: a.m,
        params: ep,
        eigenvalue: Fraction { num: d.numer().to_string(), den: d.denom().to_string() },
        poly: poly.to_json(),
        retry_log,
        check,
    };
    emit(&out, &a.out, stdout)?;
    Ok(if failed { EXIT_FAIL } else { EXIT_OK })
}

fn cmd_interp(a: InterpArgs, stdout: &mut dyn Write) -> std::result::Result<i32, Exit> {
    let cfg = load_config(&a.params_file, false)?;
    let kind = match a.kind {
        InterpArg::ColumnE => InterpKind::ColumnE,
        InterpArg::RowH => InterpKind::RowH,
    };
    if a.m == 0 {
        return Err(usage("--m must be positive"));
    }
    let report = interpolation_checks(kind, a.m, &cfg.exact.params)?;
    emit(&report, &a.out, stdout)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAIL })
}

/// Run the command line `args` (program name first) and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let res = match cli.command {
        Command::Verify(a) => cmd_verify(a, stdout, stderr),
        Command::Koornwinder(a) => cmd_koornwinder(a, stdout),
        Command::Interp(a) => cmd_interp(a, stdout),
    };
    match res {
        Ok(code) => code,
        Err(Exit(code, msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            code
        }
    }
}
