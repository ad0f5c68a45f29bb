use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crnsens::estimators::{MethodKind, DEFAULT_M0, DEFAULT_N0};
use crnsens::model::builtin_names;
use crnsens::oracle::exact_sensitivity_affine;
use crnsens::stats::{run_adaptive, run_fixed, AdaptivePolicy, DEFAULT_N_MAX};
use crnsens_cli::record::{write_records, Format, ResultRecord};
use crnsens_cli::setup::{
    apply_overrides, exit, load_model, method_from, parse_assignment, CliError, Problem, Reference,
};
use crnsens_cli::suite::{run_suite, BenchmarkSuite, BUILTIN_SUITES};

/// Parameter sensitivities of stochastic reaction networks.
///
/// Every flag can also be set through an environment variable named
/// CRNSENS_<FLAG>, e.g. CRNSENS_SEED=7 or CRNSENS_THREADS=4.
#[derive(Debug, Parser)]
#[command(name = "crnsens", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "CRNSENS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate one sensitivity.
    Estimate(EstimateArgs),
    /// Run a benchmark suite and print one CSV/JSON row per case.
    Benchmark(BenchmarkArgs),
    /// Exact sensitivity of an affine network.
    Oracle(OracleArgs),
    /// Print a model in canonical form.
    ShowModel(ShowModelArgs),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Model file, or builtin:<name>.
    #[arg(long, env = "CRNSENS_MODEL")]
    model: String,
    /// Override a parameter value or a species' initial count.
    #[arg(long = "set", value_name = "ID=VAL", value_parser = parse_assignment,
          env = "CRNSENS_SET", value_delimiter = ',')]
    sets: Vec<(String, f64)>,
    /// Sensitive parameter.
    #[arg(long, env = "CRNSENS_PARAM")]
    param: String,
    /// Output function, an expression in the species counts.
    #[arg(long, env = "CRNSENS_F")]
    f: String,
    /// Observation time.
    #[arg(long = "T", env = "CRNSENS_T", value_name = "T")]
    t_end: f64,
}

impl ProblemArgs {
    fn problem(&self) -> Result<Problem, CliError> {
        let net = load_model(&self.model)?;
        let net = apply_overrides(net, self.sets.iter().map(|(k, v)| (k, v)))?;
        Problem::new(net, &self.param, &self.f, self.t_end)
    }

    /// Model column of the output, with overrides appended.
    fn label(&self) -> String {
        if self.sets.is_empty() {
            return self.model.clone();
        }
        let sets: Vec<String> = self.sets.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.model, sets.join(","))
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("size").required(true).args(["n", "target_p"])))]
struct EstimateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, env = "CRNSENS_METHOD", default_value = "ppa")]
    method: MethodKind,
    /// Finite-difference step (crp and cfd only).
    #[arg(long, env = "CRNSENS_H")]
    h: Option<f64>,
    /// Fixed number of samples.
    #[arg(long, env = "CRNSENS_N")]
    n: Option<u64>,
    /// Sample until this confidence level is reached (needs --ref).
    #[arg(long, env = "CRNSENS_TARGET_P", requires = "reference")]
    target_p: Option<f64>,
    /// Reference value for the confidence level: a number or `oracle`.
    #[arg(long = "ref", env = "CRNSENS_REF", allow_negative_numbers = true)]
    reference: Option<Reference>,
    /// Sample cap for --target-p.
    #[arg(long, env = "CRNSENS_N_MAX", default_value_t = DEFAULT_N_MAX, requires = "target_p")]
    n_max: u64,
    /// PPA calibration paths.
    #[arg(long, env = "CRNSENS_N0", default_value_t = DEFAULT_N0)]
    n0: u64,
    /// PPA expected auxiliary pairs per path.
    #[arg(long, env = "CRNSENS_M0", default_value_t = DEFAULT_M0)]
    m0: u64,
    #[arg(long, env = "CRNSENS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "CRNSENS_FORMAT", value_enum, default_value = "json")]
    format: Format,
    /// Leave out elapsed_s so output is byte-for-byte reproducible.
    #[arg(long, env = "CRNSENS_NO_TIMING")]
    no_timing: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["suite", "builtin_suite"])))]
struct BenchmarkArgs {
    /// Suite file (JSON).
    #[arg(env = "CRNSENS_SUITE")]
    suite: Option<PathBuf>,
    /// Use a built-in suite instead of a file.
    #[arg(long, env = "CRNSENS_BUILTIN_SUITE", value_parser = BUILTIN_SUITES)]
    builtin_suite: Option<String>,
    /// Multiplies every sample count and cap; must lie in (0, 1].
    #[arg(long, env = "CRNSENS_SCALE", default_value_t = 1.0)]
    scale: f64,
    /// Seed for cases that do not set their own.
    #[arg(long, env = "CRNSENS_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "CRNSENS_FORMAT", value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, env = "CRNSENS_NO_TIMING")]
    no_timing: bool,
    /// Print each row to stderr as it finishes.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
}

#[derive(Debug, Args)]
struct ShowModelArgs {
    /// Model file, or builtin:<name>. Lists the built-in models if omitted.
    #[arg(long, env = "CRNSENS_MODEL")]
    model: Option<String>,
}

fn emit(records: &[ResultRecord], format: Format, single: bool) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    write_records(&mut out, records, format, single)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))
}

fn estimate(args: EstimateArgs) -> Result<i32, CliError> {
    let problem = args.problem.problem()?;
    let method = method_from(args.method, args.h, args.n0, args.m0)?;
    let request = problem.request(method, args.seed);
    let reference = args
        .reference
        .map(|r| r.resolve(&problem.network, &problem.param, &problem.f, problem.t_end))
        .transpose()?;
    let (report, code) = match (args.n, args.target_p) {
        (Some(n), None) => (run_fixed(request, n, reference)?, exit::OK),
        (None, Some(p)) => {
            let policy = AdaptivePolicy::new(p).with_n_max(args.n_max);
            let report = run_adaptive(request, &policy, reference.expect("clap: --ref required"))?;
            let code = if report.target_met == Some(true) {
                exit::OK
            } else {
                eprintln!(
                    "target confidence {p} not reached within {} samples",
                    args.n_max
                );
                exit::TARGET_NOT_REACHED
            };
            (report, code)
        }
        _ => unreachable!("clap enforces exactly one of --n and --target-p"),
    };
    let record = ResultRecord::from_report(
        &args.problem.label(),
        &problem.param,
        problem.t_end,
        &report,
        !args.no_timing,
    );
    emit(&[record], args.format, true)?;
    Ok(code)
}

fn benchmark(args: BenchmarkArgs) -> Result<i32, CliError> {
    let suite = match (&args.suite, &args.builtin_suite) {
        (Some(path), None) => BenchmarkSuite::load(path)?,
        (None, Some(name)) => BenchmarkSuite::builtin(name)
            .ok_or_else(|| CliError::Usage(format!("unknown built-in suite `{name}`")))?,
        _ => unreachable!("clap enforces exactly one suite source"),
    };
    let mut suite = suite.with_scale(args.scale)?;
    if let Some(seed) = args.seed {
        suite = suite.with_seed(seed);
    }
    let verbose = args.verbose;
    let outcome = run_suite(&suite, !args.no_timing, |r| {
        if verbose {
            eprintln!(
                "{} {} T={} {} h={:?}: N={} mean={} sd={} p={:?}",
                r.model, r.param, r.t_end, r.method, r.h, r.n, r.mean, r.std_dev, r.p
            );
        }
    })?;
    emit(&outcome.records, args.format, false)?;
    if outcome.complete {
        Ok(exit::OK)
    } else {
        eprintln!("some cases did not reach their target confidence");
        Ok(exit::PARTIAL)
    }
}

/// `v` with `sig` significant digits, switching to exponent form for very
/// large or small magnitudes.
fn format_significant(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..16).contains(&exp) {
        return format!("{:.*e}", sig - 1, v);
    }
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

fn oracle(args: OracleArgs) -> Result<i32, CliError> {
    let problem = args.problem.problem()?;
    let s = exact_sensitivity_affine(&problem.network, &problem.param, &problem.f, problem.t_end)?;
    println!("{}", format_significant(s, 10));
    Ok(exit::OK)
}

fn show_model(args: ShowModelArgs) -> Result<i32, CliError> {
    match args.model {
        Some(m) => print!("{}", load_model(&m)?),
        None => {
            for name in builtin_names() {
                println!("builtin:{name}");
            }
        }
    }
    Ok(exit::OK)
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Estimate(a) => estimate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Oracle(a) => oracle(a),
        Command::ShowModel(a) => show_model(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
