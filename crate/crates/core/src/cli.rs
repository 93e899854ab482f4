//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 when the numerics or the
//! output fail.

use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::convergence;
use crate::eigen::{self, eigenfunction_values};
use crate::error::{Error, Result};
use crate::kernel::{Interval, Kernel, MAX_ORDER};
use crate::knots::{self, KnotReport};
use crate::nwidths::{self, NWidthResult};
use crate::nystrom::{assemble, build_grid};
use crate::output::{fmt_f64, write_atomic};

pub const DEFAULT_M: usize = 2047;
pub const DEFAULT_H_LIST: &str = "2^-4,2^-5,2^-6,2^-7,2^-8";
pub const DEFAULT_H_REF: &str = "2^-11";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Compute,
    ConjectureTable,
    Convergence,
    Knots,
    Eigenfunctions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "nwidth",
    version,
    about = "L2 n-widths of Sobolev spaces via a Nyström eigenproblem"
)]
struct Args {
    #[arg(value_enum)]
    command: Command,

    /// Sobolev order
    #[arg(long)]
    r: Option<usize>,

    /// Widths to compute: `5`, `2..8` or `2,4,6`
    #[arg(long)]
    n: Option<String>,

    /// Eigenfunction ranks: `4`, `1..4` or `21,22`
    #[arg(long)]
    k: Option<String>,

    /// Interior grid nodes
    #[arg(long, default_value_t = DEFAULT_M)]
    m: usize,

    /// Interval endpoints `a,b`
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    interval: String,

    /// Mesh sizes of a convergence study, e.g. `2^-4,2^-5,0.01`
    #[arg(long, default_value = DEFAULT_H_LIST)]
    h_list: String,

    /// Reference mesh size of a convergence study
    #[arg(long, default_value = DEFAULT_H_REF)]
    h_ref: String,

    /// Eigensolver residual tolerance relative to ‖A‖_F
    #[arg(long, default_value_t = eigen::DEFAULT_TOL_RES)]
    tol: f64,

    /// Knot refinement tolerance [default: 1e-10·(b-a)]
    #[arg(long)]
    refine_tol: Option<f64>,

    /// Largest order of the conjecture table
    #[arg(long, default_value_t = MAX_ORDER)]
    r_max: usize,

    /// Offsets `n - r` of the conjecture table
    #[arg(long, default_value = "0..5")]
    offsets: String,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads [default: available parallelism]
    #[arg(long, env = "NWIDTH_THREADS")]
    threads: Option<usize>,

    /// Also write the assembled matrix as text (compute only)
    #[arg(long)]
    dump_matrix: Option<PathBuf>,

    /// Also write gnuplot data (convergence only)
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub r: usize,
    pub r_max: usize,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub m: usize,
    pub interval: Interval,
    pub h_list: Vec<f64>,
    pub h_ref: f64,
    pub tol: f64,
    pub refine_tol: f64,
    pub offsets: RangeInclusive<usize>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dump_matrix: Option<PathBuf>,
    pub gnuplot: Option<PathBuf>,
}

/// Failure to build a [`RunConfig`]. `exit_code` is 0 for `--help` and
/// `--version`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub exit_code: i32,
}

impl ParseError {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 1,
        }
    }
}

/// Parses `argv` (program name first) into a validated configuration.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<RunConfig, ParseError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| ParseError {
        message: e.render().to_string(),
        exit_code: if e.use_stderr() { 1 } else { 0 },
    })?;
    validate(args).map_err(ParseError::invalid)
}

fn validate(args: Args) -> std::result::Result<RunConfig, String> {
    let cmd = args.command;
    let needs_r = !matches!(cmd, Command::ConjectureTable);
    let r = match (args.r, needs_r) {
        (Some(0), _) => return Err("--r must be at least 1 (r ≥ 1)".into()),
        (Some(r), _) if r > MAX_ORDER => return Err(format!("--r must be at most {MAX_ORDER}")),
        (Some(r), _) => r,
        (None, true) => return Err("--r is required for this command".into()),
        (None, false) => 1,
    };
    if args.m == 0 {
        return Err("--m must be at least 1".into());
    }
    let interval = parse_interval(&args.interval)?;
    if !(args.tol > 0.0) {
        return Err("--tol must be positive".into());
    }
    let refine_tol = args
        .refine_tol
        .unwrap_or(knots::DEFAULT_REL_TOL * interval.length());
    if !(refine_tol > 0.0) {
        return Err("--refine-tol must be positive".into());
    }
    if args.threads == Some(0) {
        return Err("--threads must be at least 1".into());
    }
    if !(1..=MAX_ORDER).contains(&args.r_max) {
        return Err(format!("--r-max must lie in 1..={MAX_ORDER}"));
    }

    let n = match (&args.n, cmd) {
        (Some(s), _) => parse_indices(s, "--n")?,
        (None, Command::Compute | Command::Convergence) => {
            return Err("--n is required for this command".into())
        }
        (None, _) => Vec::new(),
    };
    if let Some(&bad) = n.iter().find(|&&n| n < r) {
        return Err(format!("--n value {bad} is below r = {r} (need n ≥ r)"));
    }
    let k = match (&args.k, cmd) {
        (Some(s), _) => parse_indices(s, "--k")?,
        (None, Command::Knots | Command::Eigenfunctions) => {
            return Err("--k is required for this command".into())
        }
        (None, _) => Vec::new(),
    };
    if k.contains(&0) {
        return Err("--k ranks start at 1".into());
    }
    let largest_k = k.iter().max().copied().unwrap_or(0);
    if largest_k > args.m {
        return Err(format!(
            "--k {largest_k} exceeds the grid size m = {}",
            args.m
        ));
    }
    if cmd == Command::Eigenfunctions && k.len() > 1 && args.out.is_none() {
        return Err("several --k values need --out (one file per rank)".into());
    }

    let h_list = args
        .h_list
        .split(',')
        .map(|t| parse_mesh(t, "--h-list"))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let h_ref = parse_mesh(&args.h_ref, "--h-ref")?;
    let offsets = match parse_indices_range(&args.offsets)? {
        Some(range) => range,
        None => return Err("--offsets must be a range like 0..5".into()),
    };

    Ok(RunConfig {
        command: cmd,
        r,
        r_max: args.r_max,
        n,
        k,
        m: args.m,
        interval,
        h_list,
        h_ref,
        tol: args.tol,
        refine_tol,
        offsets,
        format: args.format,
        out: args.out,
        threads: args.threads,
        dump_matrix: args.dump_matrix,
        gnuplot: args.gnuplot,
    })
}

fn parse_interval(s: &str) -> std::result::Result<Interval, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts[..] else {
        return Err(format!("--interval expects `a,b`, got `{s}`"));
    };
    let a: f64 = a
        .parse()
        .map_err(|_| format!("--interval: cannot parse `{a}` as a number"))?;
    let b: f64 = b
        .parse()
        .map_err(|_| format!("--interval: cannot parse `{b}` as a number"))?;
    Interval::new(a, b).map_err(|e| format!("--interval: {e}"))
}

fn parse_index(s: &str, flag: &str) -> std::result::Result<usize, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("{flag}: cannot parse `{s}` as a nonnegative integer"))
}

fn parse_indices_range(s: &str) -> std::result::Result<Option<RangeInclusive<usize>>, String> {
    let Some((lo, hi)) = s.split_once("..") else {
        return Ok(None);
    };
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let (lo, hi) = (parse_index(lo, "range")?, parse_index(hi, "range")?);
    if lo > hi {
        return Err(format!("empty range `{s}`"));
    }
    Ok(Some(lo..=hi))
}

/// `5`, `2..8` (inclusive) or `2,4,6`; sorted and deduplicated.
fn parse_indices(s: &str, flag: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out: Vec<usize> = match parse_indices_range(s).map_err(|e| format!("{flag}: {e}"))? {
        Some(range) => range.collect(),
        None => s
            .split(',')
            .map(|t| parse_index(t, flag))
            .collect::<std::result::Result<_, _>>()?,
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// A positive mesh size, either a number or `2^-k`.
fn parse_mesh(s: &str, flag: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let h = match t.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base
                .parse()
                .map_err(|_| format!("{flag}: bad base in `{t}`"))?;
            let exp: i32 = exp
                .parse()
                .map_err(|_| format!("{flag}: bad exponent in `{t}`"))?;
            base.powi(exp)
        }
        None => t
            .parse()
            .map_err(|_| format!("{flag}: cannot parse `{t}` as a number"))?,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(format!("{flag}: mesh size must be positive, got `{t}`"));
    }
    Ok(h)
}

/// Runs the configured pipeline and returns the process exit code.
/// Diagnostics go to stderr.
pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nwidth: {e}");
            exit_code(&e)
        }
    }
}

/// 1 for invalid input, 2 for numerical and output failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidKnots(_)
        | Error::InvalidInterval { .. }
        | Error::OutOfDomain { .. }
        | Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

/// Parses and runs; the body of `main`.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(config) => run(&config),
        Err(e) => {
            if e.exit_code == 0 {
                print!("{}", e.message);
            } else {
                eprint!("{}", e.message.trim_end());
                eprintln!();
            }
            e.exit_code
        }
    }
}

fn execute(config: &RunConfig) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match config.command {
        Command::Compute => run_compute(config),
        Command::ConjectureTable => run_table(config),
        Command::Convergence => run_convergence(config),
        Command::Knots => run_knots(config),
        Command::Eigenfunctions => run_eigenfunctions(config),
    })
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// `dir/stem<suffix>.ext` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

/// CSV `r,n,m,d_n,dn_inv_r,lower,upper,conjecture,rel_err,flag`.
pub fn widths_csv(rows: &[NWidthResult]) -> Vec<u8> {
    let mut s = String::from("r,n,m,d_n,dn_inv_r,lower,upper,conjecture,rel_err,flag\n");
    for row in rows {
        let nums = [
            row.d_n,
            row.dn_inv_r,
            row.lower,
            row.upper,
            row.conjecture,
            row.rel_err,
        ];
        let nums: Vec<String> = nums.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            row.r,
            row.n,
            row.m,
            nums.join(","),
            row.flag.as_str()
        ));
    }
    s.into_bytes()
}

fn widths_output(config: &RunConfig, rows: &[NWidthResult]) -> Result<()> {
    let bytes = match config.format {
        Format::Csv => widths_csv(rows),
        Format::Json => json(rows)?,
    };
    emit(config.out.as_deref(), &bytes)
}

fn run_compute(config: &RunConfig) -> Result<()> {
    let kernel = Kernel::new(config.r, config.interval)?;
    let sys = assemble(&kernel, &build_grid(config.interval, config.m)?)?;
    if let Some(path) = &config.dump_matrix {
        let mut buf = Vec::new();
        sys.matrix().write_text(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    let rows = nwidths::compute_on(&sys, &config.n, config.tol)?;
    widths_output(config, &rows)
}

fn run_table(config: &RunConfig) -> Result<()> {
    let rows = nwidths::conjecture_table(
        config.r_max,
        config.offsets.clone(),
        config.m,
        config.interval,
        config.tol,
    )?;
    widths_output(config, &rows)
}

fn run_convergence(config: &RunConfig) -> Result<()> {
    let study = convergence::run_study(
        config.r,
        &config.n,
        &config.h_list,
        config.h_ref,
        config.interval,
        config.tol,
    )?;
    if let Some(path) = &config.gnuplot {
        let mut buf = Vec::new();
        study.write_gnuplot(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    match config.format {
        Format::Json => emit(config.out.as_deref(), &json(&study)?),
        Format::Csv => {
            let mut errors = Vec::new();
            study.write_errors_csv(&mut errors)?;
            let mut summary = Vec::new();
            study.write_summary_csv(&mut summary)?;
            match &config.out {
                Some(path) => {
                    write_atomic(path, &errors)?;
                    write_atomic(&sibling(path, "_summary"), &summary)
                }
                None => {
                    errors.push(b'\n');
                    errors.extend_from_slice(&summary);
                    emit(None, &errors)
                }
            }
        }
    }
}

fn run_knots(config: &RunConfig) -> Result<()> {
    let count = *config.k.iter().max().expect("validated non-empty");
    let (sys, pairs) = nwidths::solve(config.r, config.interval, config.m, count, config.tol)?;
    let reports: Vec<KnotReport> = config
        .k
        .iter()
        .map(|&k| knots::extract_knots(&pairs[k - 1], sys.grid(), config.r, config.refine_tol))
        .collect::<Result<_>>()?;
    let bytes = match config.format {
        Format::Csv => {
            let mut buf = Vec::new();
            knots::write_knots_csv(&reports, &mut buf)?;
            buf
        }
        Format::Json => json(&reports)?,
    };
    emit(config.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct Eigenfunction {
    r: usize,
    k: usize,
    lambda: f64,
    x: Vec<f64>,
    phi: Vec<f64>,
}

fn run_eigenfunctions(config: &RunConfig) -> Result<()> {
    let count = *config.k.iter().max().expect("validated non-empty");
    let (sys, pairs) = nwidths::solve(config.r, config.interval, config.m, count, config.tol)?;
    let grid = sys.grid();
    if config.format == Format::Json {
        let dumps: Vec<Eigenfunction> = config
            .k
            .iter()
            .map(|&k| {
                let pair = &pairs[k - 1];
                Ok(Eigenfunction {
                    r: config.r,
                    k,
                    lambda: pair.value,
                    x: grid.nodes().to_vec(),
                    phi: eigenfunction_values(pair, grid)?,
                })
            })
            .collect::<Result<_>>()?;
        return emit(config.out.as_deref(), &json(&dumps)?);
    }
    for &k in &config.k {
        let mut buf = Vec::new();
        knots::eigenfunction_dump(&pairs[k - 1], grid, &mut buf)?;
        let path = match (&config.out, config.k.len()) {
            (Some(p), 1) => Some(p.clone()),
            (Some(p), _) => Some(sibling(p, &format!("_k{k}"))),
            (None, _) => None,
        };
        emit(path.as_deref(), &buf)?;
    }
    Ok(())
}
