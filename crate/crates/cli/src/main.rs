//! `ulam`: command-line front end for the ulam-acim library.
//!
//! Exit codes: 0 success, 1 the map failed to load or validate, 2 a numerical
//! step failed, 64 bad usage.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use ulam_acim::analysis::{self, ExactDensity, SweepOptions};
use ulam_acim::dsl::{compile_map, MapDefinition};
use ulam_acim::map::{self, MapSpec, Resolution};
use ulam_acim::oracle::{self, OrbitOptions};
use ulam_acim::solver::{self, Method, SolverOptions};
use ulam_acim::ulam::{self as ulam_core, AssemblyOptions};
use ulam_acim::{catalog, io, truncation, Error};

#[derive(Parser, Debug)]
#[command(name = "ulam", version, about = "Ulam approximations of invariant densities of piecewise convex maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct MapArgs {
    /// Catalog name (example1, example2, identity, doubling) or a .map definition file.
    #[arg(long)]
    map: String,
    /// Branches to materialize for countable maps [default: max(n+5, 40)].
    #[arg(long)]
    branches: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct SolveArgs {
    #[arg(long, default_value_t = Method::PowerCesaro)]
    method: Method,
    /// Solver tolerance on the L1 fixed-point residual.
    #[arg(long, default_value_t = solver::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = solver::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Root-finding tolerance used during matrix assembly.
    #[arg(long, default_value_t = ulam_core::DEFAULT_ASSEMBLY_TOL)]
    assembly_tol: f64,
}

impl SolveArgs {
    fn solver(&self) -> SolverOptions {
        SolverOptions { method: self.method, tol: self.tol, max_iter: self.max_iter }
    }

    fn assembly(&self) -> AssemblyOptions {
        AssemblyOptions { tol: self.assembly_tol, ..AssemblyOptions::default() }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the class conditions and report the slope sums.
    Validate {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = map::DEFAULT_SAMPLES_PER_BRANCH)]
        samples: usize,
        #[arg(long, default_value_t = map::DEFAULT_TAIL_INDEX)]
        tail_index: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Build the n-th truncation and report its constants.
    Truncate {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        n: usize,
        /// Write sample points of the truncated map as `x,y` CSV.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long, default_value_t = map::DEFAULT_TAIL_INDEX)]
        tail_index: usize,
    },
    /// Assemble the Ulam matrix and write it as triplet CSV.
    Matrix {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long, default_value_t = ulam_core::DEFAULT_ASSEMBLY_TOL)]
        tol: f64,
        /// Find preimages by bisection even when closed-form inverses exist.
        #[arg(long)]
        bisection: bool,
        /// Rescale every row to sum to exactly 1.
        #[arg(long)]
        renormalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the Ulam density and print a JSON summary.
    Solve {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[command(flatten)]
        solve: SolveArgs,
        /// Density CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L1 distance between the Ulam density and an exact density.
    Error {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        /// Catalog entry whose exact density is the reference [default: the map's own].
        #[arg(long)]
        exact: Option<String>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Run every (n, k) pair and write the error table.
    Sweep {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        /// Catalog entry whose exact density is the reference [default: the map's own].
        #[arg(long)]
        exact: Option<String>,
        /// Compare successive rows even when an exact density is known.
        #[arg(long)]
        differences: bool,
        /// Fill the runtime_ms column (makes the output machine dependent).
        #[arg(long)]
        timing: bool,
        /// Sweep CSV output [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Estimate the density from long orbits.
    Oracle {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 10_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        burn_in: u64,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        /// Fixed starting point for every orbit.
        #[arg(long)]
        x0: Option<f64>,
        /// Also solve for the Ulam density and report the L1 distance.
        #[arg(long)]
        compare: bool,
        /// Histogram CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Usage(_) => 64,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Map(_) | Error::Dsl(_) => Failure::Validation(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

macro_rules! impl_from_lib {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
impl_from_lib!(
    map::MapError,
    ulam_acim::dsl::DslError,
    ulam_core::UlamError,
    solver::SolveError,
    oracle::OracleError,
    ulam_acim::quadrature::QuadratureFailure,
    io::IoError
);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

/// A loaded map together with what the catalog knows about it.
struct Loaded {
    spec: MapSpec,
    exact: Option<ExactDensity>,
}

fn load_map(args: &MapArgs, n: usize) -> Result<Loaded, Failure> {
    let branches = args.branches.unwrap_or_else(|| catalog::default_branches(n));
    if branches <= n && args.branches.is_some() {
        return Err(Failure::Usage(format!("--branches {branches} must exceed --n {n}")));
    }
    if let Some(entry) = catalog::lookup(&args.map) {
        return Ok(Loaded { spec: (entry.build)(branches), exact: entry.exact_density });
    }
    let path = Path::new(&args.map);
    if !path.exists() {
        let names: Vec<&str> = catalog::entries().iter().map(|e| e.name).collect();
        return Err(Failure::Usage(format!(
            "`{}` is neither a catalog map ({}) nor an existing file",
            args.map,
            names.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let def = MapDefinition::parse(&text)?;
    let spec = compile_map(&def, Resolution::Branches(branches))?;
    Ok(Loaded { spec, exact: None })
}

fn exact_density(name: Option<&str>, loaded: &Loaded) -> Result<Option<ExactDensity>, Failure> {
    match name {
        None => Ok(loaded.exact.clone()),
        Some(name) => match catalog::lookup(name) {
            Some(entry) => entry
                .exact_density
                .map(Some)
                .ok_or_else(|| Failure::Usage(format!("catalog map `{name}` has no exact density"))),
            None => Err(Failure::Usage(format!("unknown catalog map `{name}`"))),
        },
    }
}

/// The finite-branch map the Ulam method runs on.
fn finite_map(spec: &MapSpec, n: usize) -> Result<MapSpec, Failure> {
    if spec.is_finite() {
        return Ok(spec.clone());
    }
    Ok(truncation::truncate(spec, n)?.into_spec())
}

fn check_positive(name: &str, v: usize) -> Result<(), Failure> {
    if v == 0 {
        return Err(Failure::Usage(format!("--{name} must be at least 1")));
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::Numerical(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { map, samples, tail_index, tol } => {
            let loaded = load_map(&map, 0)?;
            let report = map::validate(&loaded.spec, samples, tail_index, tol);
            let failures: Vec<_> = report.failures().cloned().collect();
            print_json(&json!({
                "map": report.map,
                "class": report.class,
                "branches_checked": report.branches.len(),
                "failures": failures,
                "slope_sum": report.slope_sum,
                "cutoff": report.cutoff,
                "d1": report.d1,
                "tail_index": report.tail_index,
                "admissible": report.admissible,
            }))?;
            if !report.admissible {
                return Err(Failure::Validation(format!("map `{}` is not admissible", report.map)));
            }
        }
        Command::Truncate { map, n, graph, points, tail_index } => {
            check_positive("n", n)?;
            let loaded = load_map(&map, n)?;
            let t = truncation::truncate(&loaded.spec, n)?;
            let ly = t.ly_constants(tail_index);
            if let Some(path) = graph {
                let m = points.max(2);
                let pts = (0..m)
                    .map(|s| {
                        let x = s as f64 / (m - 1) as f64;
                        t.spec().eval(x).map(|y| (x, y))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                io::to_file(&path, |w| io::write_graph(&pts, w))?;
            }
            print_json(&json!({
                "map": loaded.spec.name(),
                "n": n,
                "a_n": t.a_n(),
                "filler_slope": t.filler_slope(),
                "branches": t.spec().materialized(),
                "ly_constants": ly.as_ref().ok(),
                "ly_error": ly.as_ref().err().map(|e| e.to_string()),
            }))?;
        }
        Command::Matrix { map, n, k, tol, bisection, renormalize, out } => {
            check_positive("k", k)?;
            let loaded = load_map(&map, n)?;
            let spec = finite_map(&loaded.spec, n)?;
            let opts = AssemblyOptions { tol, force_bisection: bisection, renormalize_rows: renormalize };
            let m = ulam_core::ulam_matrix_with(&spec, k, opts)?;
            io::to_file(&out, |w| io::write_matrix(&m, w))?;
            print_json(&json!({
                "map": spec.name(),
                "k": k,
                "nnz": m.nnz(),
                "max_row_nnz": m.max_row_nnz(),
                "raw_row_defect": m.raw_row_defect(),
                "out": out,
            }))?;
        }
        Command::Solve { map, n, k, solve, out } => {
            check_positive("k", k)?;
            let loaded = load_map(&map, n)?;
            let opts = SweepOptions { solver: solve.solver(), assembly: solve.assembly(), ..SweepOptions::default() };
            let report = analysis::ulam_density(&loaded.spec, n, k, &opts)?;
            let error_l1 = match &loaded.exact {
                Some(g) => Some(analysis::l1_vs_exact(&report.density, g, opts.quad_tol)?),
                None => None,
            };
            if let Some(path) = &out {
                io::to_file(path, |w| io::write_density(&report.density, w))?;
            }
            print_json(&json!({
                "map": loaded.spec.name(),
                "n": n,
                "summary": report.summary(),
                "error_l1": error_l1,
                "out": out,
            }))?;
        }
        Command::Error { map, n, k, exact, solve } => {
            check_positive("k", k)?;
            let loaded = load_map(&map, n)?;
            let Some(g) = exact_density(exact.as_deref(), &loaded)? else {
                return Err(Failure::Usage(format!(
                    "map `{}` has no known exact density; pass --exact",
                    loaded.spec.name()
                )));
            };
            let opts = SweepOptions { solver: solve.solver(), assembly: solve.assembly(), ..SweepOptions::default() };
            let report = analysis::ulam_density(&loaded.spec, n, k, &opts)?;
            let error_l1 = analysis::l1_vs_exact(&report.density, &g, opts.quad_tol)?;
            print_json(&json!({
                "map": loaded.spec.name(),
                "n": n,
                "k": k,
                "error_l1": error_l1,
                "residual_l1": report.residual_l1,
            }))?;
        }
        Command::Sweep { map, n_list, k_list, exact, differences, timing, out, solve } => {
            for &k in &k_list {
                check_positive("k-list entries", k)?;
            }
            let n_max = n_list.iter().copied().max().unwrap_or(1);
            let loaded = load_map(&map, n_max)?;
            let reference = if differences { None } else { exact_density(exact.as_deref(), &loaded)? };
            let opts = SweepOptions { solver: solve.solver(), assembly: solve.assembly(), ..SweepOptions::default() };
            let mut rows = analysis::sweep(&loaded.spec, reference.as_ref(), &n_list, &k_list, &opts);
            if !timing {
                rows.iter_mut().for_each(|r| r.runtime_ms = None);
            }
            match &out {
                Some(path) => io::to_file(path, |w| io::write_sweep(&rows, w))?,
                None => io::write_sweep(&rows, std::io::stdout().lock())?,
            }
            let failed: Vec<String> = rows
                .iter()
                .filter_map(|r| r.failure.as_ref().map(|f| format!("n={} k={}: {f}", r.n, r.k)))
                .collect();
            if !failed.is_empty() {
                return Err(Failure::Numerical(failed.join("\n")));
            }
        }
        Command::Oracle { map, n, k, steps, seed, burn_in, starts, x0, compare, out } => {
            check_positive("k", k)?;
            let loaded = load_map(&map, n)?;
            let spec = finite_map(&loaded.spec, n)?;
            let opts = OrbitOptions { steps, burn_in, seed, x0, starts, ..OrbitOptions::default() };
            let hist = oracle::orbit_histogram(&spec, k, &opts)?;
            let density = hist.density()?;
            if let Some(path) = &out {
                io::to_file(path, |w| io::write_density(&density, w))?;
            }
            let l1_vs_ulam = if compare {
                let report = analysis::ulam_density(&loaded.spec, n, k, &SweepOptions::default())?;
                Some(analysis::l1_between(&density, &report.density))
            } else {
                None
            };
            let l1_vs_exact = match &loaded.exact {
                Some(g) => Some(analysis::l1_vs_exact(&density, g, 1e-12)?),
                None => None,
            };
            print_json(&json!({
                "map": spec.name(),
                "n": n,
                "k": k,
                "seed": seed,
                "total_steps": hist.total_steps,
                "recorded": hist.recorded(),
                "anomalies": hist.anomalies,
                "l1_vs_ulam": l1_vs_ulam,
                "l1_vs_exact": l1_vs_exact,
                "out": out,
            }))?;
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("ULAM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("ULAM_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
