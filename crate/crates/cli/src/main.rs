use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slbqp::bench::{performance_profile, run_batch, run_batch_sequential, tasks_from_suite, write_csv, Metric};
use slbqp::format::{read_problem, write_problem, HessianFormat, ProblemFile, Sidecar};
use slbqp::gen::{generate, suite, GenParams, GeneratedInstance, SuiteKind};
use slbqp::svmio::{build_dual, read_libsvm};
use slbqp::{solve, Error, Mode, SolveReport, SolverConfig, TolMode};

const EXIT_USAGE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "slbqp", version, about = "Gradient projection solvers for box- and singly-linearly-constrained QPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random problem (or a whole suite) with a known solution.
    Gen(GenCmd),
    /// Solve a problem file or a generated problem and print the report as JSON.
    Solve(SolveCmd),
    /// Run modes over generated suites; write records CSV and profile TSVs.
    Bench(BenchCmd),
    /// Solve the dual of a linear-kernel C-SVM on a LIBSVM data file.
    Svm(SvmCmd),
}

#[derive(Args, Debug, Clone)]
struct GenArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// log10 of the Hessian condition number.
    #[arg(long, default_value_t = 4.0)]
    ncond: f64,
    #[arg(long, default_value_t = 0.0)]
    zeroeig: f64,
    #[arg(long, default_value_t = 0.0)]
    negeig: f64,
    /// Fraction of active variables at the planted solution.
    #[arg(long, default_value_t = 0.5)]
    naxsol: f64,
    /// Fraction of active variables with a zero multiplier.
    #[arg(long, default_value_t = 0.0)]
    degvar: f64,
    /// Multipliers are 10^(-u ndeg) with u uniform in (0, 1).
    #[arg(long, default_value_t = 1.0)]
    ndeg: f64,
    /// Drop the linear equality constraint.
    #[arg(long)]
    bqp: bool,
    /// Fraction of variables on a bound at the starting point.
    #[arg(long, default_value_t = 0.0)]
    nax0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GenArgs {
    fn params(&self) -> GenParams {
        GenParams {
            n: self.n,
            ncond: self.ncond,
            zeroeig: self.zeroeig,
            negeig: self.negeig,
            naxsol: self.naxsol,
            degvar: self.degvar,
            ndeg: self.ndeg,
            linear: !self.bqp,
            nax0: self.nax0,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct GenCmd {
    #[command(flatten)]
    gen: GenArgs,
    /// Generate every instance of a suite into the `--out` directory instead.
    #[arg(long)]
    suite: Option<SuiteKind>,
    /// Hessian storage: dense, coo or reflections.
    #[arg(long, default_value = "reflections")]
    format: HessianFormat,
    /// Output file (single problem) or directory (suite). A sidecar with the
    /// planted solution is written next to each problem.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "p2gp-cg")]
    mode: Mode,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    tol_mode: Option<TolMode>,
    #[arg(long, default_value_t = 30_000)]
    max_matvecs: u64,
    #[arg(long, default_value_t = 30_000)]
    max_projections: u64,
}

impl SolverArgs {
    fn config(&self, mode: Mode, tol: f64, tol_mode: TolMode) -> SolverConfig {
        SolverConfig {
            tol: self.tol.unwrap_or(tol),
            tol_mode: self.tol_mode.unwrap_or(tol_mode),
            max_matvecs: self.max_matvecs,
            max_projections: self.max_projections,
            ..SolverConfig::new(mode)
        }
    }
}

#[derive(Args, Debug)]
struct SolveCmd {
    /// Problem JSON file; without it a problem is generated from the flags.
    problem: Option<PathBuf>,
    /// Starting point as a JSON array (default: zeros, projected).
    #[arg(long)]
    x0: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    gen: GenArgs,
    /// Print the report without the final iterate and multipliers.
    #[arg(long)]
    brief: bool,
}

#[derive(Args, Debug)]
struct BenchCmd {
    /// Comma-separated suites: sconv_nondeg, sconv_deg, convex, nonconvex.
    #[arg(long, value_delimiter = ',', required = true)]
    suite: Vec<SuiteKind>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "p2gp-cg,p2gp-sdc,gpcg-like,pabbmin")]
    modes: Vec<Mode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop the linear equality constraint.
    #[arg(long)]
    bqp: bool,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 30_000)]
    max_matvecs: u64,
    #[arg(long, default_value_t = 30_000)]
    max_projections: u64,
    /// Solve one instance at a time.
    #[arg(long)]
    sequential: bool,
    /// Directory for records.csv and profile_<metric>.tsv; records go to
    /// stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SvmCmd {
    data: PathBuf,
    #[arg(long = "C", default_value_t = 10.0)]
    c: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    brief: bool,
}

enum Failure {
    Usage(String),
    Solver(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::InvalidDataset(_) => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(cmd) => run_gen(cmd),
        Command::Solve(cmd) => run_solve(cmd),
        Command::Bench(cmd) => run_bench(cmd),
        Command::Svm(cmd) => run_svm(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failed: {m}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn sidecar_path(problem: &Path) -> PathBuf {
    let stem = problem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    problem.with_file_name(format!("{stem}.sidecar.json"))
}

fn write_instance(inst: &GeneratedInstance, format: HessianFormat, path: &Path) -> Result<(), Failure> {
    let file = ProblemFile::from_problem(&inst.problem, format, Some(&inst.hessian))?;
    write_problem(path, &file)?;
    let sidecar = serde_json::to_string(&Sidecar::from_instance(inst)).map_err(Error::from)?;
    fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

fn run_gen(cmd: GenCmd) -> Result<(), Failure> {
    let gp = cmd.gen.params();
    match cmd.suite {
        None => write_instance(&generate(&gp)?, cmd.format, &cmd.out),
        Some(kind) => {
            fs::create_dir_all(&cmd.out)?;
            for sp in suite(kind, gp.linear, gp.n, gp.seed)? {
                write_instance(&sp.instance, cmd.format, &cmd.out.join(format!("{}.json", sp.id)))?;
            }
            Ok(())
        }
    }
}

fn print_report(report: &SolveReport, brief: bool) -> Result<(), Failure> {
    let mut value = serde_json::to_value(report).map_err(Error::from)?;
    if brief {
        if let Some(obj) = value.as_object_mut() {
            for key in ["x_final", "multipliers", "phase_trace", "certificate"] {
                obj.remove(key);
            }
        }
    }
    let text = serde_json::to_string_pretty(&value).map_err(Error::from)?;
    println!("{text}");
    if report.status.is_failure() {
        return Err(Failure::Solver(format!("status {}", report.status.name())));
    }
    Ok(())
}

fn run_solve(cmd: SolveCmd) -> Result<(), Failure> {
    let (problem, default_x0) = match &cmd.problem {
        Some(path) => {
            let p = read_problem(path)?;
            let n = p.n();
            (p, vec![0.0; n])
        }
        None => {
            let inst = generate(&cmd.gen.params())?;
            (inst.problem, inst.x0)
        }
    };
    let x0 = match &cmd.x0 {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?).map_err(Error::from)?,
        None => default_x0,
    };
    let cfg = cmd.solver.config(cmd.solver.mode, 1e-6, TolMode::RelativeSplitNorm);
    let report = solve(&problem, &x0, &cfg)?;
    print_report(&report, cmd.brief)
}

fn run_svm(cmd: SvmCmd) -> Result<(), Failure> {
    let ds = read_libsvm(&cmd.data)?;
    let problem = build_dual(&ds, cmd.c)?;
    let cfg = cmd.solver.config(cmd.solver.mode, 1e-3, TolMode::InfNormPg);
    let report = solve(&problem, &vec![0.0; problem.n()], &cfg)?;
    print_report(&report, cmd.brief)
}

fn run_bench(cmd: BenchCmd) -> Result<(), Failure> {
    let mut tasks = Vec::new();
    for kind in &cmd.suite {
        let problems = suite(*kind, !cmd.bqp, cmd.n, cmd.seed)?;
        tasks.extend(tasks_from_suite(&problems, &cmd.modes));
    }
    let configure = |mode: Mode| SolverConfig {
        tol: cmd.tol,
        max_matvecs: cmd.max_matvecs,
        max_projections: cmd.max_projections,
        ..SolverConfig::new(mode)
    };
    let records = if cmd.sequential { run_batch_sequential(&tasks, &configure) } else { run_batch(&tasks, &configure) };
    match &cmd.out {
        None => write_csv(io::stdout().lock(), &records)?,
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_csv(BufWriter::new(File::create(dir.join("records.csv"))?), &records)?;
            for metric in Metric::ALL {
                match performance_profile(&records, metric) {
                    Ok(table) => {
                        let mut f = BufWriter::new(File::create(dir.join(format!("profile_{}.tsv", metric.name())))?);
                        f.write_all(table.to_tsv().as_bytes())?;
                        f.flush()?;
                        if table.excluded > 0 {
                            eprintln!("{}: {} problem(s) unsolved by every mode", metric.name(), table.excluded);
                        }
                    }
                    Err(e) => log::warn!("no {} profile: {e}", metric.name()),
                }
            }
        }
    }
    Ok(())
}
