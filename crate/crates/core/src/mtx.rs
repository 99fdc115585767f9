//! Matrix Market coordinate exchange format.
//!
//! Reads `real`/`integer` fields with `general`/`symmetric` storage and
//! 1-based indices. Writes `%%MatrixMarket matrix coordinate real general`
//! with 17 significant digits so binary64 values survive a round trip.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line_no: usize, line: &str) -> Result<Symmetry> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(parse_err(
            line_no,
            "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'",
        ));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(
            line_no,
            format!("unsupported object '{}'", tokens[1]),
        ));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(
            line_no,
            format!("unsupported format '{}'", tokens[2]),
        ));
    }
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(parse_err(line_no, format!("unsupported field '{other}'"))),
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(parse_err(
            line_no,
            format!("unsupported symmetry '{other}'"),
        )),
    }
}

fn parse_index(line_no: usize, token: Option<&str>, what: &str) -> Result<usize> {
    let token = token.ok_or_else(|| parse_err(line_no, format!("missing {what}")))?;
    token
        .parse::<usize>()
        .map_err(|_| parse_err(line_no, format!("invalid {what} '{token}'")))
}

/// Parses a Matrix Market stream into CSR. Symmetric files are expanded to
/// full storage and duplicate entries are summed.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (hdr_no, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let symmetry = parse_header(hdr_no, &header?)?;

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut read = 0usize;
    let mut last_line = hdr_no;
    for (line_no, line) in lines {
        let line = line?;
        last_line = line_no;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        match size {
            None => {
                let nrows = parse_index(line_no, it.next(), "row count")?;
                let ncols = parse_index(line_no, it.next(), "column count")?;
                let nnz = parse_index(line_no, it.next(), "entry count")?;
                if it.next().is_some() {
                    return Err(parse_err(line_no, "size line has extra tokens"));
                }
                size = Some((nrows, ncols, nnz));
                triplets.reserve(if symmetry == Symmetry::Symmetric {
                    2 * nnz
                } else {
                    nnz
                });
            }
            Some((nrows, ncols, nnz)) => {
                if read >= nnz {
                    return Err(parse_err(
                        line_no,
                        format!("more than the declared {nnz} entries"),
                    ));
                }
                let i = parse_index(line_no, it.next(), "row index")?;
                let j = parse_index(line_no, it.next(), "column index")?;
                let tok = it
                    .next()
                    .ok_or_else(|| parse_err(line_no, "missing value"))?;
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("invalid value '{tok}'")))?;
                if it.next().is_some() {
                    return Err(parse_err(line_no, "entry line has extra tokens"));
                }
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(parse_err(
                        line_no,
                        format!("index ({i}, {j}) out of range for {nrows}x{ncols}"),
                    ));
                }
                read += 1;
                triplets.push((i - 1, j - 1, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nrows, ncols, nnz) = size.ok_or_else(|| parse_err(last_line, "missing size line"))?;
    if read != nnz {
        return Err(parse_err(
            last_line,
            format!("expected {nnz} entries, found {read}"),
        ));
    }
    CsrMatrix::from_triplets(nrows, ncols, &triplets)
}

pub fn read_matrix_market_file(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let file = File::open(path.as_ref())?;
    read_matrix_market(BufReader::new(file))
}

/// Writes `a` as a general real coordinate file.
pub fn write_matrix_market<W: Write>(a: &CsrMatrix, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            writeln!(out, "{} {} {:.16e}", i + 1, c + 1, v)?;
        }
    }
    Ok(())
}

pub fn write_matrix_market_file(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path.as_ref())?);
    write_matrix_market(a, &mut w)?;
    w.flush()?;
    Ok(())
}
