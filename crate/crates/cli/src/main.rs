//! `vartodd`: benchmark generation, optimization, tuning and verification
//! of parity matrices.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vartodd_core::bench::{gen_gf2n, gen_random, gf2n_network, verify, MultiplicationSpec};
use vartodd_core::policy::{greedy_preset, GreedyKind, Policy, Schedule};
use vartodd_core::search::{optimize_beam, optimize_restarts, SearchBudget, StopReason, Trajectory};
use vartodd_core::tuner::{tune, PathStore, TunerConfig};
use vartodd_core::ParityMatrix;

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_VERIFY: u8 = 4;

const GF2N_CAVEAT: &str = "naive CCZ network: column counts are comparable to published results \
only where those start from the same naive circuit";

#[derive(Parser, Debug)]
#[command(name = "vartodd", version, about = "T-count optimization of parity matrices")]
struct Cli {
    /// Worker threads for parallel sections (VARTODD_THREADS takes precedence).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a benchmark or random parity matrix.
    Gen(GenArgs),
    /// Optimize a parity matrix and write its trajectory.
    Optimize(OptimizeArgs),
    /// Tune a policy on a benchmark with the particle swarm.
    Tune(TuneArgs),
    /// Check that two parity matrices have the same signature tensor.
    Verify(VerifyArgs),
    /// Best-so-far column count of a trajectory as CSV.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Degree n of the GF(2^n) multiplier.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    gf2n: Option<usize>,
    /// Modulus bits, most significant first (e.g. 111 for x^2+x+1).
    #[arg(long, requires = "gf2n")]
    modulus: Option<String>,
    /// Write the raw network instead of its simplified form.
    #[arg(long, requires = "gf2n")]
    raw: bool,
    /// Random instance of `--qubits` rows and up to `--columns` columns.
    #[arg(long, requires_all = ["qubits", "columns"])]
    random: bool,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    columns: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Default,
    GreedyMax,
    GreedyMin,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    /// Maximum optimizer iterations.
    #[arg(long)]
    iterations: Option<u64>,
    /// Maximum parity-matrix evaluations.
    #[arg(long)]
    max_evals: Option<u64>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl BudgetArgs {
    fn to_budget(&self) -> Result<SearchBudget, Failure> {
        let wall_clock_limit = match self.time_limit {
            Some(s) if !(s >= 0.0 && s.is_finite()) => {
                return Err(Failure::usage(anyhow!("--time-limit must be a non-negative number")))
            }
            s => s.map(Duration::from_secs_f64),
        };
        let b = SearchBudget {
            wall_clock_limit,
            max_matrix_evals: self.max_evals,
            max_iterations: self.iterations,
        };
        b.validate().map_err(|_| {
            Failure::usage(anyhow!(
                "give at least one of --iterations, --max-evals or --time-limit"
            ))
        })?;
        Ok(b)
    }

    fn is_zero(&self) -> bool {
        self.iterations == Some(0) || self.max_evals == Some(0) || self.time_limit == Some(0.0)
    }
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Input parity matrix.
    matrix: PathBuf,
    /// Policy JSON file.
    #[arg(long, conflicts_with = "preset")]
    policy: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Independent descents with derived seeds; the best is kept.
    #[arg(long)]
    restarts: Option<u64>,
    /// Stop restarting once this column count is reached.
    #[arg(long)]
    target_rho: Option<usize>,
    /// Beam width, overriding the policy's schedule.
    #[arg(long)]
    beam_width: Option<u32>,
    /// Trajectory output file.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the best matrix found.
    #[arg(long)]
    best_matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Benchmark parity matrix.
    matrix: PathBuf,
    /// Tuner configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Path store directory, overriding the configuration.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Where to write the best policy JSON.
    #[arg(long)]
    out_policy: Option<PathBuf>,
    /// Where to write the best trajectory.
    #[arg(long)]
    out_trajectory: Option<PathBuf>,
    /// Where to write the leaderboard JSON.
    #[arg(long)]
    leaderboard: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    trajectory: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self { code: EXIT_USAGE, error }
    }

    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self::usage(error)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_matrix(path: &Path) -> CliResult<(ParityMatrix, Vec<String>)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)?;
    let p = text
        .parse::<ParityMatrix>()
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::input)?;
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect();
    Ok((p, comments))
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> CliResult {
    let (p, comments) = if let Some(n) = args.gf2n {
        let spec = match &args.modulus {
            Some(bits) => MultiplicationSpec::from_bit_string(n, bits),
            None => MultiplicationSpec::standard(n),
        }
        .map_err(|e| Failure::usage(e.into()))?;
        let raw = gf2n_network(&spec);
        let (simplified, _) = gen_gf2n(&spec);
        let comments = vec![
            format!(
                "gf2n n={} modulus={} terms={} raw_columns={} simplified_columns={}",
                n,
                spec.modulus_bits(),
                spec.terms().len(),
                raw.column_count(),
                simplified.column_count()
            ),
            GF2N_CAVEAT.to_string(),
        ];
        (if args.raw { raw } else { simplified }, comments)
    } else {
        let (n, m) = (args.qubits.unwrap_or(0), args.columns.unwrap_or(0));
        if n == 0 || m == 0 {
            return Err(Failure::usage(anyhow!("--qubits and --columns must be positive")));
        }
        let p = gen_random(n, m, args.seed);
        (p, vec![format!("random qubits={n} columns={m} seed={}", args.seed)])
    };
    write_output(args.output.as_deref(), &p.to_text_with_comments(&comments))
}

fn load_policy(args: &OptimizeArgs) -> CliResult<Policy> {
    let mut pol = match (&args.policy, args.preset) {
        (Some(path), _) => Policy::load(path).map_err(Failure::input)?,
        (None, Some(Preset::GreedyMax)) => greedy_preset(GreedyKind::Max),
        (None, Some(Preset::GreedyMin)) => greedy_preset(GreedyKind::Min),
        (None, _) => Policy::default(),
    };
    if let Some(w) = args.beam_width {
        if w == 0 {
            return Err(Failure::usage(anyhow!("--beam-width must be at least 1")));
        }
        pol.beamsearch_width = Schedule::constant(w);
    }
    Ok(pol)
}

fn cmd_optimize(args: &OptimizeArgs) -> CliResult {
    let budget = args.budget.to_budget()?;
    let pol = load_policy(args)?;
    let (p, comments) = read_matrix(&args.matrix)?;
    if args.budget.is_zero() {
        return Err(Failure {
            code: EXIT_BUDGET,
            error: anyhow!("budget exhausted before the first iteration"),
        });
    }
    let (traj, runs) = if args.restarts.is_some_and(|r| r > 1) || args.target_rho.is_some() {
        let out = optimize_restarts(&p, &pol, &budget, args.seed, args.restarts, args.target_rho)
            .map_err(|e| Failure::usage(e.into()))?;
        (out.best, Some((out.runs, out.best_restart)))
    } else {
        let t = optimize_beam(&p, &pol, &budget, args.seed).map_err(|e| Failure::usage(e.into()))?;
        (t, None)
    };
    if traj.iterations == 0 && traj.stop_reason == StopReason::BudgetExhausted {
        return Err(Failure {
            code: EXIT_BUDGET,
            error: anyhow!("budget exhausted before the first iteration"),
        });
    }
    traj.verify().map_err(|e| Failure {
        code: EXIT_VERIFY,
        error: e.into(),
    })?;
    if let Some(out) = &args.output {
        traj.write(out).map_err(|e| Failure::usage(e.into()))?;
    }
    if let Some(out) = &args.best_matrix {
        let mut c = comments.clone();
        c.push(format!("best of trajectory, seed {}", traj.seed));
        write_output(Some(out), &traj.best().to_text_with_comments(&c))?;
    }
    for c in &comments {
        println!("input: {c}");
    }
    println!("policy: {}", pol.digest());
    if let Some((n, k)) = runs {
        println!("restarts: {n} (best from restart {k})");
    }
    println!("seed: {}", traj.seed);
    println!("stop: {}", traj.stop_reason.as_str());
    println!("iterations: {}", traj.iterations);
    println!("matrix_evals: {}", traj.total_evals);
    println!("initial_rho: {}", traj.initial_rho());
    println!("final_rho: {}", traj.final_rho());
    println!("best_rho: {}", traj.best_rho());
    println!("best_density: {:.6}", traj.best().density());
    Ok(())
}

fn cmd_tune(args: &TuneArgs) -> CliResult {
    let mut cfg = match &args.config {
        Some(path) => TunerConfig::load(path).map_err(Failure::input)?,
        None => TunerConfig::default(),
    };
    if let Some(dir) = &args.store {
        cfg.store = Some(dir.clone());
    }
    cfg.validate().map_err(Failure::input)?;
    let (p, comments) = read_matrix(&args.matrix)?;
    let tensor = p.signature_tensor();
    let mut store = match &cfg.store {
        Some(dir) => PathStore::open(dir, tensor).map_err(Failure::input)?,
        None => PathStore::in_memory(tensor),
    };
    let out = tune(&p, &cfg, &mut store, args.seed).map_err(|e| Failure::usage(e.into()))?;
    if !out.best_report.valid {
        return Err(Failure {
            code: EXIT_BUDGET,
            error: anyhow!("no valid result within the budget"),
        });
    }
    if let Some(path) = &args.out_policy {
        write_output(Some(path), &out.best_policy.to_json())?;
    }
    if let Some(path) = &args.out_trajectory {
        out.best_trajectory
            .write(path)
            .map_err(|e| Failure::usage(e.into()))?;
    }
    if let Some(path) = &args.leaderboard {
        let text = serde_json::to_string_pretty(&out.leaderboard).context("encoding leaderboard")?;
        write_output(Some(path), &text)?;
    }
    for c in &comments {
        println!("input: {c}");
    }
    println!("evaluations: {}", out.evaluations);
    println!("stored_paths: {}", store.len());
    println!(
        "best: rho {} density {:.6} fitness {:.6} policy {}",
        out.best_report.rho,
        out.best_report.density,
        out.best_report.fitness,
        out.best_policy.digest()
    );
    println!("rank,eval,rho,density,penalty,fitness,policy");
    for (i, e) in out.leaderboard.iter().enumerate() {
        println!(
            "{},{},{},{:.6},{},{:.6},{}",
            i + 1,
            e.eval,
            e.report.rho,
            e.report.density,
            e.report.penalty,
            e.report.fitness,
            e.policy_digest
        );
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> CliResult {
    let (a, _) = read_matrix(&args.a)?;
    let (b, _) = read_matrix(&args.b)?;
    let report = verify(&a, &b).map_err(|e| Failure {
        code: EXIT_VERIFY,
        error: e.into(),
    })?;
    println!("{report}");
    if !report.equivalent {
        return Err(Failure {
            code: EXIT_VERIFY,
            error: anyhow!("signature tensors differ"),
        });
    }
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> CliResult {
    let traj = Trajectory::read(&args.trajectory)
        .with_context(|| format!("reading {}", args.trajectory.display()))
        .map_err(Failure::input)?;
    write_output(args.output.as_deref(), &traj.best_so_far_csv())
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    match std::env::var("VARTODD_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Failure::usage(anyhow!("VARTODD_THREADS must be a number, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> CliResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting worker threads")?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Stats(a) => cmd_stats(a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
