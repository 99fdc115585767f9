//! `hpbj`: solve, benchmark and partition sparse systems from Matrix Market files.

mod bench;
mod run;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hpbj::graph::DEFAULT_IMBALANCE_TOL;
use hpbj::lu::DEFAULT_EPS_PIVOT;
use hpbj::{
    fixtures, graph_from_matrix, partition_graph, write_matrix_market_file, write_partition,
    CsrMatrix,
};

use run::{load_matrix, PrecisionChoice, PrecondChoice, RhsMode, RunSpec};

#[derive(Parser)]
#[command(
    name = "hpbj",
    version,
    about = "Block-Jacobi preconditioned restarted GMRES for sparse systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one system and write a JSON report and residual history.
    Solve(SolveArgs),
    /// Run several configurations and print a timing table.
    Bench(BenchArgs),
    /// Partition the matrix graph and write one block index per line.
    Partition(PartitionArgs),
    /// Write a test matrix in Matrix Market format.
    Gen(GenArgs),
}

/// Solver parameters shared by `solve` and `bench`.
#[derive(Args)]
struct SolverArgs {
    /// ones | axones (b = A*1) | random:SEED | file:PATH
    #[arg(long, default_value = "axones")]
    rhs: RhsMode,
    /// Number of blocks for block-Jacobi (default 16)
    #[arg(long)]
    blocks: Option<usize>,
    /// Krylov dimension per cycle
    #[arg(long, default_value_t = 50)]
    restart: usize,
    /// Relative residual tolerance
    #[arg(long, default_value_t = 1e-8, allow_hyphen_values = true)]
    tol: f64,
    #[arg(long, default_value_t = 40)]
    max_restarts: usize,
    /// Absolute pivot threshold relative to the block's infinity norm
    #[arg(long, default_value_t = DEFAULT_EPS_PIVOT, allow_hyphen_values = true)]
    eps_pivot: f64,
    /// Neumann correction terms applied on top of the block solve
    #[arg(long, default_value_t = 0)]
    neumann_order: usize,
    /// Allowed relative excess of the largest block over the average
    #[arg(long, default_value_t = DEFAULT_IMBALANCE_TOL, allow_hyphen_values = true)]
    imbalance: f64,
    /// Use a precomputed partition instead of partitioning the graph
    #[arg(long)]
    partition_file: Option<PathBuf>,
}

impl SolverArgs {
    fn spec(&self, matrix: PathBuf, precond: PrecondChoice, precision: PrecisionChoice) -> RunSpec {
        RunSpec {
            rhs: self.rhs.clone(),
            precond,
            blocks: self.blocks,
            restart: self.restart,
            tol: self.tol,
            max_restarts: self.max_restarts,
            precision,
            eps_pivot: self.eps_pivot,
            neumann_order: self.neumann_order,
            imbalance: self.imbalance,
            partition_file: self.partition_file.clone(),
            ..RunSpec::new(matrix)
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Matrix Market file
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, value_enum, default_value_t = PrecondChoice::BlockJacobi)]
    precond: PrecondChoice,
    #[arg(long, value_enum, default_value_t = PrecisionChoice::Hybrid)]
    precision: PrecisionChoice,
    #[command(flatten)]
    solver: SolverArgs,
    /// JSON report output
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV residual history output
    #[arg(long)]
    history: Option<PathBuf>,
    /// Include Ritz values of the first cycle in the report
    #[arg(long)]
    ritz: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Matrix Market files (repeatable)
    #[arg(long, required = true)]
    matrix: Vec<PathBuf>,
    /// Preconditioners to compare (repeatable)
    #[arg(long, value_enum, default_values_t = [PrecondChoice::Ilu0, PrecondChoice::BlockJacobi])]
    precond: Vec<PrecondChoice>,
    /// Precisions to compare (repeatable)
    #[arg(long, value_enum, default_values_t = [PrecisionChoice::Hybrid])]
    precision: Vec<PrecisionChoice>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Runs per configuration; the median time is reported
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// CSV output; the aligned table always goes to stdout
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    blocks: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IMBALANCE_TOL, allow_hyphen_values = true)]
    imbalance: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    /// 5-point Laplacian on a size x size grid
    Laplacian,
    /// Upwind convection-diffusion on a size x size grid
    Convdiff,
    Identity,
    /// The 4x4 two-block example
    Example,
    /// Random diagonally dominant, 5 off-diagonals per row
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Fixture,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0.5)]
    wind: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn solve(args: SolveArgs) -> Result<ExitCode> {
    let mut spec = args.solver.spec(args.matrix, args.precond, args.precision);
    spec.ritz = args.ritz;
    let converged = run::cmd_solve(&spec, args.report.as_deref(), args.history.as_deref())?;
    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    ensure!(args.repetitions >= 1, "--repetitions must be at least 1");
    let mut specs = Vec::new();
    for m in &args.matrix {
        for &p in &args.precond {
            for &q in &args.precision {
                let mut spec = args.solver.spec(m.clone(), p, q);
                if p != PrecondChoice::BlockJacobi {
                    spec.blocks = None;
                    spec.partition_file = None;
                    spec.neumann_order = 0;
                }
                specs.push(spec);
            }
        }
    }
    let rows = bench::cmd_bench(&specs, args.repetitions);
    print!("{}", bench::format_table(&rows));
    if let Some(path) = &args.csv {
        let file =
            File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        bench::write_csv(&rows, BufWriter::new(file))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn partition(args: PartitionArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.matrix)?;
    let g = graph_from_matrix(&a)?;
    let p = partition_graph(&g, args.blocks, args.imbalance)?.measure(&a)?;
    let file =
        File::create(&args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    write_partition(&p, &mut w)?;
    w.flush()?;
    println!(
        "blocks={} cut_weight={} imbalance={:.4} (max/mean block nnz)",
        p.num_blocks(),
        g.cut_weight(p.assignment()),
        p.imbalance()
    );
    Ok(ExitCode::SUCCESS)
}

fn generate(args: GenArgs) -> Result<ExitCode> {
    ensure!(args.size >= 1, "--size must be at least 1");
    let a: CsrMatrix = match args.kind {
        Fixture::Laplacian => fixtures::laplacian_2d(args.size),
        Fixture::Convdiff => fixtures::convection_diffusion_2d(args.size, args.wind),
        Fixture::Identity => CsrMatrix::identity(args.size),
        Fixture::Example => fixtures::small_example(),
        Fixture::Random => fixtures::random_diagonally_dominant(args.size, 5, 1.5, args.seed),
    };
    write_matrix_market_file(&a, &args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Usage errors share exit code 1 with other input errors; 2 means "did not converge".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Partition(a) => partition(a),
        Command::Gen(a) => generate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
