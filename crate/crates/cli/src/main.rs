//! `rotavg` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input or unusable path,
//! 3 solver finished without an optimal status.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rotavg::bench::{write_bench, BenchConfig, BenchProtocol, BenchRow};
use rotavg::io::{read_problem, write_atomic, write_problem, Metadata, Problem};
use rotavg::pipeline::{solve_problem, Method, SolveOptions};
use rotavg::solver::SolverStatus;
use rotavg::synth::{generate, Axis, Protocol, SynthConfig, RNG_ALGORITHM};

/// Directory used when `--out` is omitted.
const OUT_DIR_ENV: &str = "ROTAVG_OUT_DIR";

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NOT_OPTIMAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rotavg",
    version,
    about = "Certifiable anisotropic rotation averaging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write a JSON report.
    Solve(SolveArgs),
    /// Run a synthetic benchmark sweep and write rows.csv and summary.csv.
    Bench(BenchArgs),
    /// Generate a synthetic problem file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SolverFlags {
    /// Absolute feasibility tolerance.
    #[arg(long)]
    abs_feas: Option<f64>,
    /// Relative feasibility tolerance.
    #[arg(long)]
    rel_feas: Option<f64>,
    /// Infeasibility certificate tolerance.
    #[arg(long)]
    infeas_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Initial ADMM step size.
    #[arg(long)]
    rho: Option<f64>,
    /// Relative duality-gap tolerance used by the certificate.
    #[arg(long)]
    gap_tol: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, opts: &mut SolveOptions) {
        let s = &mut opts.solver;
        if let Some(v) = self.abs_feas {
            s.abs_feas = v;
        }
        if let Some(v) = self.rel_feas {
            s.rel_feas = v;
        }
        if let Some(v) = self.infeas_tol {
            s.infeas_tol = v;
        }
        if let Some(v) = self.max_iters {
            s.max_iters = v;
        }
        if let Some(v) = self.rho {
            s.rho = v;
        }
        if let Some(v) = self.gap_tol {
            opts.gap_tol = v;
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (rotavg-problem/1 JSON).
    problem: PathBuf,
    /// o3-iso, o3-aniso, cso3-iso, cso3-aniso or spectral.
    #[arg(long)]
    method: Option<Method>,
    /// Exponent of the weighted measurement, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// JSON file with solve options; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Report path. Defaults to `$ROTAVG_OUT_DIR/<stem>.report.json`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// fig2, fig3 or toy.
    #[arg(long)]
    protocol: BenchProtocol,
    /// Camera counts: a comma list (`5,10,20`) or an inclusive range (`5..20` or `5..20:5`).
    #[arg(long)]
    n_range: Option<String>,
    /// Comma list of edge fractions.
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<f64>>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma list of methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Lower bound of the covariance eigenvalue range.
    #[arg(long)]
    eig_lo: Option<f64>,
    /// Upper bound of the covariance eigenvalue range.
    #[arg(long)]
    eig_hi: Option<f64>,
    /// Toy protocol: comma list of gray-edge variances.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Toy protocol: comma list of axes (x, y, z).
    #[arg(long, value_delimiter = ',')]
    axes: Option<Vec<Axis>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory. Defaults to `$ROTAVG_OUT_DIR`, else `rotavg-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-row progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of cameras.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Probability that a camera pair is measured.
    #[arg(long, default_value_t = 0.8)]
    p: f64,
    /// Lower bound of the covariance eigenvalue range.
    #[arg(long, default_value_t = 0.01)]
    eig_lo: f64,
    /// Upper bound of the covariance eigenvalue range.
    #[arg(long, default_value_t = 0.1)]
    eig_hi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generate the three-camera toy with this gray-edge variance instead.
    #[arg(long)]
    toy_sigma: Option<f64>,
    /// Toy protocol: axis of the gray edge's large variance.
    #[arg(long, default_value = "x")]
    toy_axis: Axis,
    /// Toy protocol: small variance.
    #[arg(long, default_value_t = 0.001)]
    eps: f64,
    /// Output path. Defaults to `$ROTAVG_OUT_DIR/problem-<seed>.json`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    NotOptimal(String),
}

impl From<rotavg::Error> for Failure {
    fn from(e: rotavg::Error) -> Self {
        match e {
            rotavg::Error::Solver(msg) => Failure::NotOptimal(format!("solver failure: {msg}")),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
            }
            write_atomic(p, text.as_bytes())
                .map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Input(format!("cannot write to stdout: {e}")))
        }
    }
}

fn parse_n_range(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Input(format!("invalid --n-range '{s}'"));
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, step.trim().parse::<usize>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if step == 0 || lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
        .collect()
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let mut opts = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SolveOptions>(&text)
                .map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))?
        }
        None => SolveOptions::default(),
    };
    if let Some(m) = args.method {
        opts.method = m;
    }
    if let Some(a) = args.alpha {
        opts.alpha = a;
    }
    args.solver.apply(&mut opts);

    let problem = read_problem(&args.problem)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.problem.display())))?;
    let (report, outcome) = solve_problem(&problem, &opts)?;

    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| Failure::Input(format!("cannot serialise report: {e}")))?;
    text.push('\n');
    let out = args.out.or_else(|| {
        let stem = args.problem.file_stem()?.to_string_lossy().into_owned();
        env_out_dir().map(|d| d.join(format!("{stem}.report.json")))
    });
    emit(out.as_deref(), &text)?;

    let mut line = format!(
        "{}: {} cameras, {} edges",
        report.method, report.n_cams, report.n_edges
    );
    if let Some(s) = &report.solver {
        line += &format!(", {:?} after {} iterations", s.status, s.iterations);
    }
    if let Some(c) = &report.certificate {
        line += &format!(", rank {}, tight {}", c.rank_estimate, c.tight);
    }
    if let Some(m) = &report.metrics {
        line += &format!(", chordal error {:.3e}", m.chordal_err);
    }
    eprintln!("{line}");

    match outcome.solver.as_ref().map(|s| s.status) {
        Some(status) if status != SolverStatus::Optimal => Err(Failure::NotOptimal(format!(
            "solver stopped with status {status:?}"
        ))),
        _ => Ok(()),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut cfg = BenchConfig::defaults(args.protocol);
    cfg.seed = args.seed;
    if let Some(s) = &args.n_range {
        cfg.n_list = parse_n_range(s)?;
    }
    if let Some(p) = args.p_list {
        cfg.p_list = p;
    }
    if let Some(k) = args.instances {
        cfg.instances = k;
    }
    if let Some(m) = args.methods {
        cfg.methods = m;
    }
    if let Some(lo) = args.eig_lo {
        cfg.cov_eig_range.0 = lo;
    }
    if let Some(hi) = args.eig_hi {
        cfg.cov_eig_range.1 = hi;
    }
    if let Some(s) = args.sigmas {
        cfg.sigmas = s;
    }
    if let Some(a) = args.axes {
        cfg.axes = a;
    }
    if let Some(a) = args.alpha {
        cfg.solve.alpha = a;
    }
    args.solver.apply(&mut cfg.solve);

    let dir = args
        .out
        .or_else(env_out_dir)
        .unwrap_or_else(|| PathBuf::from("rotavg-out"));
    let quiet = args.quiet;
    let progress = |r: &BenchRow| {
        if !quiet {
            eprintln!(
                "{} #{} {}: {} chordal {}",
                r.config,
                r.instance,
                r.method,
                r.status,
                r.chordal_err.map_or("-".into(), |e| format!("{e:.4}"))
            );
        }
    };
    let (rows, summary) = write_bench(&cfg, &dir, progress).map_err(|e| match e {
        rotavg::Error::Io(io) => {
            Failure::Input(format!("output directory {}: {io}", dir.display()))
        }
        other => other.into(),
    })?;
    eprintln!("wrote {} and {}", rows.display(), summary.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let cfg = match args.toy_sigma {
        Some(sigma) => SynthConfig {
            n_cams: 3,
            edge_fraction: 1.0,
            cov_eig_range: (args.eps.min(sigma), args.eps.max(sigma)),
            seed: args.seed,
            protocol: Protocol::ToyThreeCam {
                sigma,
                axis: args.toy_axis,
                eps: args.eps,
            },
        },
        None => SynthConfig::uniform(args.n, args.p, (args.eig_lo, args.eig_hi), args.seed),
    };
    let inst = generate(&cfg)?;
    let protocol = serde_json::to_value(&cfg)
        .map_err(|e| Failure::Input(format!("cannot serialise config: {e}")))?;
    let problem = Problem {
        n_cams: inst.n_cams,
        edges: inst.edges,
        ground_truth: Some(inst.ground_truth),
        metadata: Some(Metadata {
            seed: Some(args.seed),
            rng: Some(RNG_ALGORITHM.to_string()),
            generator: Some(format!("rotavg {}", env!("CARGO_PKG_VERSION"))),
            protocol: Some(protocol),
        }),
    };
    let out = args
        .out
        .or_else(|| env_out_dir().map(|d| d.join(format!("problem-{}.json", args.seed))));
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
            }
            write_problem(&problem, &path)
                .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
            eprintln!(
                "wrote {} ({} cameras, {} edges)",
                path.display(),
                problem.n_cams,
                problem.edges.len()
            );
            Ok(())
        }
        None => {
            let mut text = rotavg::io::problem_to_json(&problem)?;
            text.push('\n');
            emit(None, &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::NotOptimal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NOT_OPTIMAL)
        }
    }
}
