use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use hpbj::graph::DEFAULT_IMBALANCE_TOL;
use hpbj::lu::DEFAULT_EPS_PIVOT;
use hpbj::{
    build_block_jacobi, graph_from_matrix, hybrid_restart_gmres, import_partition, partition_graph,
    read_matrix_market_file, BlockJacobiOptions, CsrMatrix, GmresConfig, Partition,
    PrecisionPolicy, Preconditioner, SolveReport,
};
use serde::Serialize;

/// How the right-hand side is produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RhsMode {
    Ones,
    /// `b = A * 1`, so the exact solution is the all-ones vector.
    ManufacturedOnes,
    RandomSeeded(u64),
    File(PathBuf),
}

impl FromStr for RhsMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ones" => Ok(RhsMode::Ones),
            "axones" => Ok(RhsMode::ManufacturedOnes),
            _ => {
                if let Some(seed) = s.strip_prefix("random:") {
                    seed.parse()
                        .map(RhsMode::RandomSeeded)
                        .map_err(|_| format!("invalid seed '{seed}'"))
                } else if let Some(path) = s.strip_prefix("file:") {
                    Ok(RhsMode::File(PathBuf::from(path)))
                } else {
                    Err(format!(
                        "expected ones, axones, random:SEED or file:PATH, got '{s}'"
                    ))
                }
            }
        }
    }
}

impl fmt::Display for RhsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhsMode::Ones => write!(f, "ones"),
            RhsMode::ManufacturedOnes => write!(f, "axones"),
            RhsMode::RandomSeeded(s) => write!(f, "random:{s}"),
            RhsMode::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for RhsMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecondChoice {
    None,
    Ilu0,
    BlockJacobi,
}

impl fmt::Display for PrecondChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecondChoice::None => "none",
            PrecondChoice::Ilu0 => "ilu0",
            PrecondChoice::BlockJacobi => "block-jacobi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionChoice {
    Double,
    Hybrid,
}

impl PrecisionChoice {
    pub fn policy(self) -> PrecisionPolicy {
        match self {
            PrecisionChoice::Double => PrecisionPolicy::DoubleOnly,
            PrecisionChoice::Hybrid => PrecisionPolicy::Hybrid,
        }
    }
}

impl fmt::Display for PrecisionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecisionChoice::Double => "double",
            PrecisionChoice::Hybrid => "hybrid",
        })
    }
}

/// Number of blocks used when block-Jacobi is requested without `--blocks`.
pub const DEFAULT_BLOCKS: usize = 16;

/// A fully specified solver run. Serialized verbatim as the report's `config`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    pub matrix: PathBuf,
    pub rhs: RhsMode,
    pub precond: PrecondChoice,
    pub blocks: Option<usize>,
    pub restart: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub precision: PrecisionChoice,
    pub eps_pivot: f64,
    pub neumann_order: usize,
    pub imbalance: f64,
    pub partition_file: Option<PathBuf>,
    pub ritz: bool,
}

impl RunSpec {
    pub fn new(matrix: PathBuf) -> Self {
        let gmres = GmresConfig::default();
        Self {
            matrix,
            rhs: RhsMode::ManufacturedOnes,
            precond: PrecondChoice::BlockJacobi,
            blocks: None,
            restart: gmres.restart,
            tol: gmres.tol,
            max_restarts: gmres.max_restarts,
            precision: PrecisionChoice::Hybrid,
            eps_pivot: DEFAULT_EPS_PIVOT,
            neumann_order: 0,
            imbalance: DEFAULT_IMBALANCE_TOL,
            partition_file: None,
            ritz: false,
        }
    }

    /// Rejects flag combinations that would be silently ignored.
    pub fn validate(&self) -> Result<()> {
        if self.precond != PrecondChoice::BlockJacobi {
            ensure!(
                self.blocks.is_none(),
                "--blocks requires --precond block-jacobi"
            );
            ensure!(
                self.partition_file.is_none(),
                "--partition-file requires --precond block-jacobi"
            );
            ensure!(
                self.neumann_order == 0,
                "--neumann-order requires --precond block-jacobi"
            );
        }
        ensure!(self.blocks != Some(0), "--blocks must be at least 1");
        ensure!(self.restart >= 1, "--restart must be at least 1");
        ensure!(self.max_restarts >= 1, "--max-restarts must be at least 1");
        ensure!(
            self.tol > 0.0 && self.tol.is_finite(),
            "--tol must be positive"
        );
        ensure!(
            self.eps_pivot >= 0.0 && self.eps_pivot.is_finite(),
            "--eps-pivot must be non-negative"
        );
        ensure!(
            self.imbalance >= 0.0 && self.imbalance.is_finite(),
            "--imbalance must be non-negative"
        );
        Ok(())
    }

    pub fn gmres_config(&self) -> GmresConfig {
        GmresConfig {
            restart: self.restart,
            tol: self.tol,
            max_restarts: self.max_restarts,
            policy: self.precision.policy(),
            collect_ritz: self.ritz,
            ..Default::default()
        }
    }
}

pub fn matrix_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn load_matrix(path: &Path) -> Result<CsrMatrix> {
    let a = read_matrix_market_file(path)
        .with_context(|| format!("cannot read matrix {}", path.display()))?;
    ensure!(
        a.is_square(),
        "matrix {} is {}x{}, expected square",
        path.display(),
        a.nrows(),
        a.ncols()
    );
    Ok(a)
}

pub fn build_rhs(a: &CsrMatrix, mode: &RhsMode) -> Result<Vec<f64>> {
    let n = a.nrows();
    Ok(match mode {
        RhsMode::Ones => vec![1.0; n],
        RhsMode::ManufacturedOnes => a.spmv(&vec![1.0; n])?,
        RhsMode::RandomSeeded(seed) => hpbj::fixtures::random_vector(n, *seed),
        RhsMode::File(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read right-hand side {}", path.display()))?;
            let b: Vec<f64> = text
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .with_context(|| format!("{}: invalid value '{t}'", path.display()))
                })
                .collect::<Result<_>>()?;
            ensure!(
                b.len() == n,
                "{}: expected {n} values, found {}",
                path.display(),
                b.len()
            );
            b
        }
    })
}

fn load_partition(path: &Path, n: usize, blocks: Option<usize>) -> Result<Partition> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read partition {}", path.display()))?;
    let s = match blocks {
        Some(s) => s,
        None => {
            text.lines()
                .filter_map(|l| l.trim().parse::<usize>().ok())
                .max()
                .unwrap_or(0)
                + 1
        }
    };
    import_partition(BufReader::new(text.as_bytes()), n, s)
        .with_context(|| format!("invalid partition {}", path.display()))
}

pub fn build_preconditioner(a: &CsrMatrix, spec: &RunSpec) -> Result<Preconditioner> {
    let policy = spec.precision.policy();
    Ok(match spec.precond {
        PrecondChoice::None => Preconditioner::identity(a.nrows()),
        PrecondChoice::Ilu0 => Preconditioner::ilu0(a, policy)?,
        PrecondChoice::BlockJacobi => {
            let partition = match &spec.partition_file {
                Some(path) => load_partition(path, a.nrows(), spec.blocks)?,
                None => {
                    let s = spec.blocks.unwrap_or(DEFAULT_BLOCKS).min(a.nrows());
                    partition_graph(&graph_from_matrix(a)?, s, spec.imbalance)?
                }
            };
            let options = BlockJacobiOptions {
                eps_pivot: spec.eps_pivot,
                neumann_order: spec.neumann_order,
                policy,
            };
            build_block_jacobi(a, &partition, options)?
        }
    })
}

/// Result of one run, including preconditioner setup time.
pub struct Outcome {
    pub preconditioner: Preconditioner,
    pub report: SolveReport,
}

/// Builds the preconditioner and solves. `setup_ms` covers graph
/// construction, partitioning and factorization.
pub fn execute(a: &CsrMatrix, b: &[f64], spec: &RunSpec) -> Result<Outcome> {
    let start = Instant::now();
    let preconditioner = build_preconditioner(a, spec)?;
    let setup_ms = start.elapsed().as_secs_f64() * 1e3;
    let (_, mut report) = hybrid_restart_gmres(a, &preconditioner, b, &spec.gmres_config())?;
    report.wall_times.setup_ms = setup_ms;
    Ok(Outcome {
        preconditioner,
        report,
    })
}

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[derive(Serialize)]
struct MatrixInfo {
    name: String,
    n: usize,
    nnz: usize,
}

#[derive(Serialize)]
struct ResultInfo {
    converged: bool,
    iterations: usize,
    restarts: usize,
    final_residual: f64,
    setup_ms: f64,
    solve_ms: f64,
}

#[derive(Serialize)]
struct PreconditionerInfo<'a> {
    kind: &'static str,
    blocks: &'a [hpbj::PreconditionerStats],
}

#[derive(Serialize)]
struct Report<'a> {
    matrix: MatrixInfo,
    config: &'a RunSpec,
    result: ResultInfo,
    preconditioner: PreconditionerInfo<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ritz: Option<Vec<[f64; 2]>>,
}

pub fn report_json(a: &CsrMatrix, spec: &RunSpec, outcome: &Outcome) -> serde_json::Value {
    let r = &outcome.report;
    let report = Report {
        matrix: MatrixInfo {
            name: matrix_name(&spec.matrix),
            n: a.nrows(),
            nnz: a.nnz(),
        },
        config: spec,
        result: ResultInfo {
            converged: r.converged,
            iterations: r.total_iterations,
            restarts: r.restarts,
            final_residual: r.final_residual,
            setup_ms: round2(r.wall_times.setup_ms),
            solve_ms: round2(r.wall_times.solve_ms),
        },
        preconditioner: PreconditionerInfo {
            kind: outcome.preconditioner.label(),
            blocks: outcome.preconditioner.block_stats(),
        },
        ritz: r
            .ritz
            .as_ref()
            .map(|z| z.iter().map(|c| [c.re, c.im]).collect()),
    };
    serde_json::to_value(report).expect("report serializes")
}

pub fn write_history(report: &SolveReport, path: &Path) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("cannot write history {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["restart_cycle", "global_iteration", "relative_residual"])?;
    for h in &report.residual_history {
        w.write_record([
            h.cycle.to_string(),
            h.iteration.to_string(),
            format!("{:e}", h.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("cannot write report {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Runs `spec` end to end, writing the requested artifacts.
/// Returns whether the solver converged.
pub fn cmd_solve(
    spec: &RunSpec,
    report_path: Option<&Path>,
    history_path: Option<&Path>,
) -> Result<bool> {
    spec.validate()?;
    let a = load_matrix(&spec.matrix)?;
    if let Some(s) = spec.blocks {
        if s > a.nrows() {
            bail!("--blocks {s} exceeds the matrix dimension {}", a.nrows());
        }
    }
    let b = build_rhs(&a, &spec.rhs)?;
    let outcome = execute(&a, &b, spec)?;
    let r = &outcome.report;

    println!(
        "{}: n={} nnz={} precond={} precision={} converged={} iterations={} restarts={} residual={:.3e} setup={:.2}ms solve={:.2}ms",
        matrix_name(&spec.matrix),
        a.nrows(),
        a.nnz(),
        outcome.preconditioner.label(),
        spec.precision,
        r.converged,
        r.total_iterations,
        r.restarts,
        r.final_residual,
        r.wall_times.setup_ms,
        r.wall_times.solve_ms,
    );
    if let Some(path) = report_path {
        write_json(&report_json(&a, spec, &outcome), path)?;
    } else if let Some(ritz) = &r.ritz {
        for z in ritz {
            println!("ritz {:.12e} {:.12e}", z.re, z.im);
        }
    }
    if let Some(path) = history_path {
        write_history(r, path)?;
    }
    Ok(r.converged)
}
