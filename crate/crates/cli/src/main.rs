use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use minspace::harness::{
    brute_force_optimize, fraction_table, fraction_trend, outcomes_match, random_polyhedron, run_benchmark,
    summarize, summary_csv, trial_objective, write_csv, BenchConfig, ObjectiveKind,
};
use minspace::objective::ObjectiveSpec;
use minspace::report::{convex_result, nonconvex_result, to_json_string, ResultJson};
use minspace::{
    certify_empty, optimize_convex, optimize_nonconvex, FaceLattice, Objective, Polyhedron, Schedule, ScheduleKind,
    SolveOptions, Workers, DEFAULT_TOL,
};

#[derive(Parser)]
#[command(name = "minspace", version, about = "Exact minimization of strictly convex objectives over polyhedra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random polyhedron (and optionally its query objective).
    Gen(GenArgs),
    /// Minimize an objective over a convex polyhedron.
    #[command(visible_alias = "optimize")]
    Project(SolveArgs),
    /// Brute-force minimization over every affine space.
    Oracle(OracleArgs),
    /// Minimize an objective over a non-convex polyhedron given by its face lattice.
    Nonconvex(NonconvexArgs),
    /// Run the random-instance benchmark and write per-trial CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of half-spaces.
    #[arg(long)]
    r: usize,
    /// Ambient dimension.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the matching query objective here.
    #[arg(long)]
    objective_out: Option<PathBuf>,
    #[arg(long, default_value = "projection")]
    objective: ObjectiveKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ObjectiveInput {
    /// Objective JSON file.
    #[arg(long, conflicts_with = "target")]
    objective: Option<PathBuf>,
    /// Projection target, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target: Option<Vec<f64>>,
}

impl ObjectiveInput {
    fn load(&self) -> Result<Objective> {
        match (&self.objective, &self.target) {
            (Some(path), _) => Ok(Objective::parse(&read_input(path)?)?),
            (None, Some(t)) => Ok(Objective::projection(t)?),
            (None, None) => bail!("one of --objective or --target is required"),
        }
    }
}

#[derive(Args)]
struct RunFlags {
    #[arg(long, default_value = "level")]
    schedule: ScheduleKind,
    #[arg(long, default_value = "auto")]
    threads: Workers,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Drop counters and round numbers so output is reproducible byte for byte.
    #[arg(long)]
    canonical: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    fn schedule(&self) -> Schedule {
        Schedule {
            kind: self.schedule,
            workers: self.threads,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Polyhedron JSON file, or `-` for stdin.
    #[arg(long)]
    polyhedron: PathBuf,
    #[command(flatten)]
    objective: ObjectiveInput,
    #[command(flatten)]
    flags: RunFlags,
    /// Compare against the brute-force oracle.
    #[arg(long)]
    oracle_check: bool,
    /// Search every affine space and include the per-space records.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    polyhedron: PathBuf,
    #[command(flatten)]
    objective: ObjectiveInput,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    canonical: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NonconvexArgs {
    /// Face lattice JSON file.
    #[arg(long, conflicts_with = "boxes")]
    lattice: Option<PathBuf>,
    /// Union of axis-aligned boxes `x0,y0,x1,y1;...` instead of a lattice file.
    #[arg(long)]
    boxes: Option<String>,
    #[command(flatten)]
    objective: ObjectiveInput,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Args)]
struct BenchArgs {
    /// Half-space counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3,6,9,12,15,18,21,24,27,30")]
    r: Vec<usize>,
    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "projection")]
    objective: ObjectiveKind,
    /// Trials run concurrently on this many threads.
    #[arg(long, default_value_t = 1)]
    trial_threads: usize,
    #[arg(long)]
    oracle_check: bool,
    /// Per-cell summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value = "level")]
    schedule: ScheduleKind,
    /// Solver threads per trial.
    #[arg(long, default_value = "1")]
    threads: Workers,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    canonical: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn objective_spec(obj: &Objective) -> ObjectiveSpec {
    match obj {
        Objective::Projection(p) => ObjectiveSpec::Projection {
            target: p.target().iter().copied().collect(),
        },
        Objective::Quadratic(q) => ObjectiveSpec::Quadratic {
            q: q.matrix().row_iter().map(|row| row.iter().copied().collect()).collect(),
            center: q.center().iter().copied().collect(),
        },
    }
}

fn gen(args: &GenArgs) -> Result<()> {
    let p = random_polyhedron(args.r, args.n, args.seed)?;
    emit(args.out.as_deref(), &to_json_string(&p.to_json())?)?;
    if let Some(path) = &args.objective_out {
        let obj = trial_objective(args.objective, args.n, args.seed)?;
        fs::write(path, to_json_string(&objective_spec(&obj))?)?;
    }
    Ok(())
}

fn mark_empty(json: &mut ResultJson, p: &Polyhedron, tol: f64) -> Result<()> {
    if json.point.is_none() {
        json.empty = Some(certify_empty(p, tol)?);
    }
    Ok(())
}

fn project(args: &SolveArgs) -> Result<()> {
    let p = Polyhedron::parse(&read_input(&args.polyhedron)?)?;
    let obj = args.objective.load()?;
    let mut options = SolveOptions::default()
        .with_tol(args.flags.tol)
        .with_schedule(args.flags.schedule());
    if args.trace {
        options = options.exhaustive();
    }
    let report = optimize_convex(&p, &obj, &options)?;
    let mut json = convex_result(&report, args.flags.canonical);
    mark_empty(&mut json, &p, args.flags.tol)?;
    if args.oracle_check {
        let oracle = brute_force_optimize(&p, &obj, args.flags.tol)?;
        let ok = outcomes_match(&oracle, &report.outcome);
        json.oracle_match = Some(ok);
        if !ok {
            eprintln!("oracle mismatch");
        }
    }
    emit(args.flags.out.as_deref(), &to_json_string(&json)?)
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let p = Polyhedron::parse(&read_input(&args.polyhedron)?)?;
    let obj = args.objective.load()?;
    let outcome = brute_force_optimize(&p, &obj, args.tol)?;
    let report = minspace::SolveReport {
        outcome,
        counters: Default::default(),
        records: Vec::new(),
    };
    let mut json = convex_result(&report, true);
    if !args.canonical {
        json.point = report.outcome.point().map(|x| x.iter().copied().collect());
        json.value = match &report.outcome {
            minspace::Outcome::Minimizer { value, .. } => Some(*value),
            minspace::Outcome::NoMinimumOrEmpty => None,
        };
    }
    mark_empty(&mut json, &p, args.tol)?;
    emit(args.out.as_deref(), &to_json_string(&json)?)
}

fn parse_boxes(spec: &str) -> Result<Vec<([f64; 2], [f64; 2])>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|b| {
            let v: Vec<f64> = b
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("bad box '{b}'"))?;
            match v[..] {
                [x0, y0, x1, y1] => Ok(([x0, y0], [x1, y1])),
                _ => bail!("box '{b}' needs four numbers"),
            }
        })
        .collect()
}

fn nonconvex(args: &NonconvexArgs) -> Result<()> {
    let lattice = match (&args.lattice, &args.boxes) {
        (Some(path), _) => FaceLattice::parse(&read_input(path)?)?,
        (None, Some(spec)) => FaceLattice::rectilinear_union(&parse_boxes(spec)?)?,
        (None, None) => bail!("one of --lattice or --boxes is required"),
    };
    let obj = args.objective.load()?;
    let report = optimize_nonconvex(&lattice, &obj, &args.flags.schedule(), args.flags.tol)?;
    emit(
        args.flags.out.as_deref(),
        &to_json_string(&nonconvex_result(&report, args.flags.canonical))?,
    )
}

fn bench(args: &BenchArgs) -> Result<()> {
    let config = BenchConfig {
        r_values: args.r.clone(),
        n_values: args.n.clone(),
        trials: args.trials,
        seed: args.seed,
        schedule: Schedule {
            kind: args.schedule,
            workers: args.threads,
        },
        objective: args.objective,
        oracle_check: args.oracle_check,
        tol: args.tol,
        trial_workers: args.trial_threads.max(1),
    };
    let rows = run_benchmark(&config)?;
    let mut csv = Vec::new();
    write_csv(&rows, args.canonical, &mut csv)?;
    emit(args.out.as_deref(), std::str::from_utf8(&csv)?)?;
    let cells = summarize(&rows);
    if let Some(path) = &args.summary {
        fs::write(path, summary_csv(&cells, args.canonical))?;
    }
    eprint!("{}", fraction_table(&cells));
    for (n, rho) in fraction_trend(&cells) {
        eprintln!("n={n}: spearman(r, fraction) = {rho:.3}");
    }
    let mismatches: usize = cells.iter().map(|c| c.oracle_mismatches).sum();
    let failures: usize = cells.iter().map(|c| c.failures).sum();
    if mismatches + failures > 0 {
        bail!("{mismatches} oracle mismatches, {failures} failed trials");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Project(a) => project(a),
        Command::Oracle(a) => oracle(a),
        Command::Nonconvex(a) => nonconvex(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
