use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;
use serde_json::json;

use squeeze_core::channel::{
    build_squeeze_params, lambda_range, params_from_r_lambda, ChannelMatrix, Distribution,
    ParamsFile, SqueezeParams, ValidateOptions,
};
use squeeze_core::experiments::{run_benchmark, write_records_csv, BenchConfig};
use squeeze_core::info::Units;
use squeeze_core::rate::{fixed_point, matrix_rate, verify_aba_bound};
use squeeze_core::select::{lambda_upper_bound, plan, SqueezePlan, Strategy};
use squeeze_core::solver::{solve, Method, SolverConfig, DEFAULT_EPSILON, DEFAULT_MAX_ITERS};
use squeeze_core::Error;

/// Relative distance within which a requested λ is moved onto the nearest
/// end of its admissible interval.
const LAMBDA_SNAP: f64 = 1e-4;
/// Below this relative distance the move is rounding noise and not reported.
const LAMBDA_SNAP_QUIET: f64 = 1e-12;

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_BOUNDARY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "squeeze-aba",
    version,
    about = "Channel capacity by squeezed Arimoto-Blahut iterations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the capacity of a channel.
    Solve(SolveArgs),
    /// Choose squeeze parameters for a channel.
    Params(ParamsArgs),
    /// Local convergence rate at the fixed point.
    Rate(RateArgs),
    /// Iteration-count benchmark on random channels.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Aba,
    Alg1,
    Alg2,
    Alg3,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    Nats,
    Bits,
}

impl From<UnitsArg> for Units {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Nats => Units::Nats,
            UnitsArg::Bits => Units::Bits,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    None,
    LambdaOnly,
    OptimalM2,
    Heuristic,
    Auto,
}

#[derive(Args)]
struct ChannelArgs {
    /// Channel matrix as CSV (one row per input) or JSON `{"matrix": [...]}`.
    channel: PathBuf,
    /// Remove all-zero output columns instead of rejecting them.
    #[arg(long)]
    drop_zero_columns: bool,
}

impl ChannelArgs {
    fn load(&self) -> Result<ChannelMatrix, Error> {
        let w = ChannelMatrix::load(
            &self.channel,
            ValidateOptions {
                drop_zero_columns: self.drop_zero_columns,
                ..Default::default()
            },
        )?;
        if !w.dropped_columns().is_empty() {
            warn!("dropped zero columns {:?}", w.dropped_columns());
        }
        Ok(w)
    }
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Exponent gain; accepts fractions such as 5/3.
    #[arg(long, value_parser = parse_number)]
    lambda: Option<f64>,
    /// Floor vector, comma separated.
    #[arg(long, value_parser = parse_vector_arg)]
    r: Option<Vector>,
    /// Output shift vector, comma separated.
    #[arg(long, value_parser = parse_vector_arg)]
    f: Option<Vector>,
    /// JSON file `{"r": [...], "f": [...], "lambda": x}`; overrides the flags.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = parse_number)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Starting input distribution, comma separated.
    #[arg(long, value_parser = parse_vector_arg)]
    initial: Option<Vector>,
    #[arg(long, value_enum, default_value = "nats")]
    units: UnitsArg,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the result as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Run with parameters outside the convergence guarantees.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, value_enum, default_value = "auto")]
    strategy: StrategyArg,
    /// Reference distribution for the heuristic floor: `uniform` or a vector.
    #[arg(long, default_value = "uniform")]
    q: String,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = parse_number)]
    epsilon: f64,
    /// Writes `<prefix>.csv` and `<prefix>_summary.json`.
    #[arg(long, default_value = "bench")]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

/// Parse a decimal or a fraction `a/b`.
fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
            a / b
        }
        None => s.parse().map_err(|e| format!("{s:?}: {e}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

/// Comma-separated vector flag.
#[derive(Clone, Debug)]
struct Vector(Vec<f64>);

fn parse_vector_arg(s: &str) -> Result<Vector, String> {
    parse_vector(s).map(Vector)
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EXIT_IO,
            Error::BoundaryFixedPoint { .. } => EXIT_BOUNDARY,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn snap_lambda(w: &ChannelMatrix, r_plus: f64, lambda: f64) -> f64 {
    let (lower, upper) = lambda_range(w, r_plus);
    for bound in [upper, lower] {
        let dist = (lambda - bound).abs();
        if lambda != bound && dist <= LAMBDA_SNAP * bound {
            if dist > LAMBDA_SNAP_QUIET * bound {
                warn!("lambda {lambda} moved to the admissible bound {bound}");
            }
            return bound;
        }
    }
    lambda
}

/// Resolved method and the squeeze it implies.
struct Resolved {
    method: Method,
    params: Option<ParamsFile>,
}

fn auto_plan(w: &ChannelMatrix) -> Result<Option<SqueezePlan>, Error> {
    match plan(w, Strategy::auto(w)) {
        Ok(p) => Ok(Some(p)),
        Err(Error::DegenerateChannel) => Ok(None),
        Err(e) => Err(e),
    }
}

fn resolve_method(w: &ChannelMatrix, args: &MethodArgs) -> Result<Resolved, Failure> {
    let mut lambda = args.lambda;
    let mut r = args.r.clone().map(|v| v.0);
    let mut f = args.f.clone().map(|v| v.0);
    if let Some(path) = &args.params {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let file: ParamsFile = serde_json::from_str(&text).map_err(Error::from)?;
        lambda = Some(file.lambda);
        r = Some(file.r);
        f = Some(file.f);
    }
    let m = w.inputs();
    let planned = || -> Result<SqueezePlan, Failure> {
        auto_plan(w)?.ok_or_else(|| usage("all rows of the channel are equal; use --method aba"))
    };

    let method = match args.method {
        MethodArg::Aba => Method::Aba,
        MethodArg::Alg1 => {
            let lambda = match lambda {
                Some(l) => snap_lambda(w, 0.0, l),
                None => lambda_upper_bound(w)?,
            };
            Method::Alg1 { lambda }
        }
        MethodArg::Alg2 => {
            let (r, lambda) = match (r, lambda) {
                (Some(r), Some(l)) => {
                    let l = snap_lambda(w, r.iter().sum(), l);
                    (r, l)
                }
                (Some(r), None) => (r, lambda_upper_bound(w)?),
                (None, Some(l)) => (vec![0.0; m], snap_lambda(w, 0.0, l)),
                (None, None) => {
                    let p = planned()?;
                    (p.r, p.lambda)
                }
            };
            Method::Alg2 { r, lambda }
        }
        MethodArg::Alg3 => {
            let (r, f) = match (r, f) {
                (Some(r), Some(f)) => (r, f),
                (Some(r), None) => (r, vec![0.0; w.outputs()]),
                (None, Some(f)) => (vec![0.0; m], f),
                (None, None) => {
                    let p = planned()?;
                    (p.r, p.f)
                }
            };
            Method::Alg3 { r, f }
        }
        MethodArg::Auto => match auto_plan(w)? {
            Some(p) => Method::Alg3 { r: p.r, f: p.f },
            None => Method::Aba,
        },
    };
    let params = squeeze_of(w, &method)?.map(|p| p.to_file());
    Ok(Resolved { method, params })
}

/// Validated squeeze for a method; `None` for plain ABA.
fn squeeze_of(w: &ChannelMatrix, method: &Method) -> Result<Option<SqueezeParams>, Error> {
    Ok(match method {
        Method::Aba => None,
        Method::Alg1 { lambda } => Some(params_from_r_lambda(w, &vec![0.0; w.inputs()], *lambda)?),
        Method::Alg2 { r, lambda } => Some(params_from_r_lambda(w, r, *lambda)?),
        Method::Alg3 { r, f } => Some(build_squeeze_params(w, r, f)?),
    })
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn unit_name(u: Units) -> &'static str {
    match u {
        Units::Nats => "nats",
        Units::Bits => "bits",
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, Failure> {
    let w = args.channel.load()?;
    let resolved = if args.force {
        // parameters are taken as given; the solver warns about violations
        Resolved {
            method: forced_method(&w, &args.method)?,
            params: None,
        }
    } else {
        resolve_method(&w, &args.method)?
    };
    let initial = args.initial.map(|v| Distribution::new(v.0)).transpose()?;
    let cfg = SolverConfig {
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        initial,
        record_trace: args.trace.is_some(),
        force: args.force,
    };
    let res = solve(&w, &resolved.method, &cfg)?;
    let units: Units = args.units.into();

    if let Some(path) = &args.trace {
        res.write_trace_csv(BufWriter::new(File::create(path)?))?;
    }
    let capacity = units.convert(res.capacity_lower);
    let lower = capacity;
    let upper = units.convert(res.capacity_upper);
    if let Some(path) = &args.json {
        let doc = json!({
            "capacity": capacity,
            "capacity_lower": lower,
            "capacity_upper": upper,
            "units": units,
            "p_hat": res.p_hat.probs(),
            "iterations": res.iterations,
            "converged": res.converged,
            "method": resolved.method,
            "params": resolved.params,
        });
        write_json(path, &doc)?;
    }

    let unit = unit_name(units);
    println!("method      {}", resolved.method.name());
    println!("capacity    {capacity:.9} {unit}");
    println!("bounds      [{lower:.9}, {upper:.9}] {unit}");
    println!("p_hat       {}", fmt_vec(res.p_hat.probs()));
    println!("iterations  {}", res.iterations);
    println!("converged   {}", res.converged);
    if res.monotonicity_warnings > 0 {
        println!(
            "warnings    {} objective decreases",
            res.monotonicity_warnings
        );
    }
    if res.converged {
        Ok(0)
    } else {
        eprintln!("error: not converged after {} iterations", res.iterations);
        Ok(EXIT_NOT_CONVERGED)
    }
}

/// Method from flags without range checks, for `--force`.
fn forced_method(w: &ChannelMatrix, args: &MethodArgs) -> Result<Method, Failure> {
    match args.method {
        MethodArg::Alg1 => Ok(Method::Alg1 {
            lambda: match args.lambda {
                Some(l) => l,
                None => lambda_upper_bound(w)?,
            },
        }),
        MethodArg::Alg3 if args.params.is_none() => Ok(Method::Alg3 {
            r: args
                .r
                .clone()
                .map_or_else(|| vec![0.0; w.inputs()], |v| v.0),
            f: args
                .f
                .clone()
                .map_or_else(|| vec![0.0; w.outputs()], |v| v.0),
        }),
        _ => Ok(resolve_method(w, args)?.method),
    }
}

fn cmd_params(args: ParamsArgs) -> Result<u8, Failure> {
    let w = args.channel.load()?;
    let q = if args.q.trim().eq_ignore_ascii_case("uniform") {
        vec![1.0 / w.inputs() as f64; w.inputs()]
    } else {
        parse_vector(&args.q).map_err(usage)?
    };
    let strategy = match args.strategy {
        StrategyArg::None => Strategy::None,
        StrategyArg::LambdaOnly => Strategy::LambdaOnly,
        StrategyArg::OptimalM2 => Strategy::OptimalM2,
        StrategyArg::Heuristic => Strategy::HeuristicDeltaQ(q),
        StrategyArg::Auto => Strategy::auto(&w),
    };
    let p = plan(&w, strategy)?;
    if p.lambda <= 1.0 && !matches!(p.strategy, Strategy::None) {
        warn!("channel not squeezable");
        eprintln!("warning: channel not squeezable");
    }
    let text = serde_json::to_string_pretty(&p).map_err(Error::from)?;
    if let Some(path) = &args.json {
        write_json(path, &p)?;
    }
    println!("{text}");
    Ok(0)
}

fn cmd_rate(args: RateArgs) -> Result<u8, Failure> {
    let w = args.channel.load()?;
    let resolved = resolve_method(&w, &args.method)?;
    let params = squeeze_of(&w, &resolved.method)?.unwrap_or_else(|| SqueezeParams::identity(&w));
    let p_star = fixed_point(&w, &params)?;
    let report = matrix_rate(&w, &params, &p_star)?;
    let p_hat = params.unsqueeze(&p_star);
    let bound = verify_aba_bound(&w, &p_hat)?;

    let mut doc = serde_json::to_value(&report).map_err(Error::from)?;
    doc["method"] = serde_json::to_value(&resolved.method).map_err(Error::from)?;
    doc["affine_residual"] = json!(report.affine_residual());
    doc["aba_bound_margin"] = json!(bound.margin);
    if let Some(path) = &args.json {
        write_json(path, &doc)?;
    }

    println!("method          {}", resolved.method.name());
    println!("p_star          {}", fmt_vec(&report.p_star));
    println!("global_rate     {:.9}", report.global_rate);
    println!("rate_r0         {:.9}", report.rate_r0);
    println!("aba_lower_bound {:.9}", report.aba_lower_bound);
    println!("eigenvalues     {}", fmt_vec(&report.eigenvalues));
    println!("R");
    for i in 0..report.rate_matrix.nrows() {
        let row: Vec<f64> = report.rate_matrix.row(i).iter().copied().collect();
        println!("  {}", fmt_vec(&row));
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<u8, Failure> {
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let cfg = BenchConfig {
        m: args.m,
        n: args.n,
        replications: args.reps,
        seed: args.seed,
        epsilon: args.epsilon,
        ..Default::default()
    };
    let out = run_benchmark(&cfg)?;

    let prefix = args.out.as_os_str().to_string_lossy().into_owned();
    let csv_path = PathBuf::from(format!("{prefix}.csv"));
    let summary_path = PathBuf::from(format!("{prefix}_summary.json"));
    write_records_csv(&out.records, BufWriter::new(File::create(&csv_path)?))?;
    write_json(&summary_path, &out.summary)?;

    println!(
        "{:<8} {:>8} {:>8} {:>8} {:>12}",
        "method", "median", "min", "max", "log2 ratio"
    );
    for (name, s) in [
        ("aba", &out.summary.aba),
        ("alg1", &out.summary.alg1),
        ("alg2", &out.summary.alg2),
    ] {
        let (med, min, max) = s
            .iterations
            .map_or((f64::NAN, f64::NAN, f64::NAN), |t| (t.median, t.min, t.max));
        let ratio = s
            .log2_ratio
            .map_or_else(|| "-".to_string(), |t| format!("{:.3}", t.median));
        println!("{name:<8} {med:>8.1} {min:>8} {max:>8} {ratio:>12}");
    }
    if out.summary.failures > 0 {
        eprintln!(
            "warning: {} replications reported errors",
            out.summary.failures
        );
    }
    println!(
        "wrote {} and {}",
        csv_path.display(),
        summary_path.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SQUEEZE_ABA_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Params(a) => cmd_params(a),
        Command::Rate(a) => cmd_rate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
