use std::io::Write;

use anyhow::Result;
use serde::Serialize;

use crate::run::{build_rhs, execute, load_matrix, matrix_name, round2, RunSpec};

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchRow {
    pub matrix: String,
    pub n: Option<usize>,
    pub nnz: Option<usize>,
    pub nnz_per_row: Option<String>,
    pub precond: String,
    pub precision: String,
    pub blocks: Option<usize>,
    pub setup_ms: Option<f64>,
    pub solve_ms: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub final_residual: Option<f64>,
    pub error: String,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn run_row(spec: &RunSpec, repetitions: usize, row: &mut BenchRow) -> Result<()> {
    spec.validate()?;
    let a = load_matrix(&spec.matrix)?;
    row.n = Some(a.nrows());
    row.nnz = Some(a.nnz());
    row.nnz_per_row = Some(format!("{:.2}", a.nnz() as f64 / a.nrows() as f64));
    let b = build_rhs(&a, &spec.rhs)?;
    let mut setup = Vec::with_capacity(repetitions);
    let mut solve = Vec::with_capacity(repetitions);
    let mut last = None;
    for _ in 0..repetitions {
        let out = execute(&a, &b, spec)?;
        setup.push(out.report.wall_times.setup_ms);
        solve.push(out.report.wall_times.solve_ms);
        last = Some(out);
    }
    let out = last.expect("at least one repetition");
    row.setup_ms = Some(round2(median(&mut setup)));
    row.solve_ms = Some(round2(median(&mut solve)));
    row.iterations = Some(out.report.total_iterations);
    row.converged = Some(out.report.converged);
    row.final_residual = Some(out.report.final_residual);
    Ok(())
}

/// Runs every spec `repetitions` times, one after another. A spec that
/// fails produces a row carrying the error message.
pub fn cmd_bench(specs: &[RunSpec], repetitions: usize) -> Vec<BenchRow> {
    specs
        .iter()
        .map(|spec| {
            let mut row = BenchRow {
                matrix: matrix_name(&spec.matrix),
                precond: spec.precond.to_string(),
                precision: spec.precision.to_string(),
                blocks: spec.blocks,
                ..Default::default()
            };
            if let Err(e) = run_row(spec, repetitions.max(1), &mut row) {
                row.error = format!("{e:#}");
            }
            row
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref()
        .map(|x| x.to_string())
        .unwrap_or_else(|| "-".into())
}

/// Column-aligned rendering for terminals.
pub fn format_table(rows: &[BenchRow]) -> String {
    let header = [
        "matrix",
        "n",
        "nnz",
        "nnz/row",
        "precond",
        "precision",
        "blocks",
        "setup_ms",
        "solve_ms",
        "iters",
        "converged",
        "residual",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let mut line = vec![
            r.matrix.clone(),
            opt(&r.n),
            opt(&r.nnz),
            opt(&r.nnz_per_row),
            r.precond.clone(),
            r.precision.clone(),
            opt(&r.blocks),
            r.setup_ms
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into()),
            r.solve_ms
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into()),
            opt(&r.iterations),
            opt(&r.converged),
            r.final_residual
                .map(|v| format!("{v:.2e}"))
                .unwrap_or_else(|| "-".into()),
        ];
        if !r.error.is_empty() {
            line.push(format!("error: {}", r.error));
        }
        cells.push(line);
    }
    let mut widths = vec![0usize; header.len()];
    for line in &cells {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    let mut text = String::new();
    for line in &cells {
        let parts: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(k, c)| match widths.get(k) {
                Some(&w) if k == 0 || k == 4 || k == 5 => format!("{c:<w$}"),
                Some(&w) => format!("{c:>w$}"),
                None => c.clone(),
            })
            .collect();
        text.push_str(parts.join("  ").trim_end());
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even_counts() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [7.0]), 7.0);
    }

    #[test]
    fn failed_rows_keep_their_place() {
        let specs = vec![RunSpec::new("/nonexistent/a.mtx".into())];
        let rows = cmd_bench(&specs, 1);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].error.contains("/nonexistent/a.mtx"));
        assert!(format_table(&rows).contains("error:"));
    }
}
