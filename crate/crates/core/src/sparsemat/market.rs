//! Matrix Market coordinate-format reader and writer.
//!
//! Supports the `real`, `integer`, and `pattern` fields with `general` or
//! `symmetric` storage, which covers the Harwell-Boeing matrices used by
//! the experiments. Pattern entries get value 1.0; symmetric storage is
//! expanded eagerly; duplicates are summed.

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use super::{CsrMatrix, SparseError};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("malformed Matrix Market header: {0}")]
    MalformedHeader(String),
    #[error("unsupported Matrix Market field: {0}")]
    UnsupportedField(String),
    #[error("unsupported Matrix Market symmetry: {0}")]
    UnsupportedSymmetry(String),
    #[error("index out of range on entry line {line}: {detail}")]
    IndexOutOfRange { line: usize, detail: String },
    #[error("invalid entry on line {line}: {detail}")]
    InvalidEntry { line: usize, detail: String },
    #[error("truncated stream: header promised {expected} entries, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Structure(#[from] SparseError),
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Parse a Matrix Market coordinate stream into CSR. 1-based indices become
/// 0-based, symmetric storage is mirrored, duplicates are summed, and rows
/// come out sorted.
pub fn read_matrix_market(source: impl Read) -> Result<CsrMatrix, MarketError> {
    let mut reader = BufReader::new(source);
    let mut banner = String::new();
    if reader.read_line(&mut banner)? == 0 {
        return Err(MarketError::MalformedHeader("empty stream".into()));
    }
    let tokens: Vec<String> = banner
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(MarketError::MalformedHeader(banner.trim().into()));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(MarketError::MalformedHeader(format!(
            "expected 'matrix coordinate', got '{} {}'",
            tokens[1], tokens[2]
        )));
    }
    let field = match tokens[3].as_str() {
        "real" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(MarketError::UnsupportedField(other.into())),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(MarketError::UnsupportedSymmetry(other.into())),
    };

    // skip comments and blank lines up to the size line
    let mut line_no = 1usize;
    let mut size_line = String::new();
    loop {
        size_line.clear();
        if reader.read_line(&mut size_line)? == 0 {
            return Err(MarketError::MalformedHeader("missing size line".into()));
        }
        line_no += 1;
        let trimmed = size_line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('%') {
            break;
        }
    }
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(MarketError::MalformedHeader(format!(
            "size line must be 'rows cols nnz', got '{}'",
            size_line.trim()
        )));
    }
    let parse_dim = |s: &str| -> Result<usize, MarketError> {
        s.parse()
            .map_err(|_| MarketError::MalformedHeader(format!("bad size token '{s}'")))
    };
    let n_rows = parse_dim(dims[0])?;
    let n_cols = parse_dim(dims[1])?;
    let nnz = parse_dim(dims[2])?;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(
        if symmetry == Symmetry::Symmetric { 2 * nnz } else { nnz },
    );
    let mut found = 0usize;
    let mut line = String::new();
    while found < nnz {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(MarketError::Truncated {
                expected: nnz,
                found,
            });
        }
        line_no += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let (is, js) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(MarketError::InvalidEntry {
                    line: line_no,
                    detail: trimmed.into(),
                })
            }
        };
        let i: usize = is.parse().map_err(|_| MarketError::InvalidEntry {
            line: line_no,
            detail: format!("bad row index '{is}'"),
        })?;
        let j: usize = js.parse().map_err(|_| MarketError::InvalidEntry {
            line: line_no,
            detail: format!("bad column index '{js}'"),
        })?;
        if i < 1 || i > n_rows || j < 1 || j > n_cols {
            return Err(MarketError::IndexOutOfRange {
                line: line_no,
                detail: format!("({i}, {j}) outside {n_rows}x{n_cols}"),
            });
        }
        let v = match field {
            Field::Pattern => 1.0,
            Field::Real | Field::Integer => {
                let vs = parts.next().ok_or_else(|| MarketError::InvalidEntry {
                    line: line_no,
                    detail: "missing value".into(),
                })?;
                vs.parse().map_err(|_| MarketError::InvalidEntry {
                    line: line_no,
                    detail: format!("bad value '{vs}'"),
                })?
            }
        };
        let (r, c) = (i - 1, j - 1);
        triplets.push((r, c, v));
        if symmetry == Symmetry::Symmetric && r != c {
            triplets.push((c, r, v));
        }
        found += 1;
    }
    Ok(CsrMatrix::from_triplets(n_rows, n_cols, &triplets)?)
}

/// Write CSR in general real coordinate format. Values use the shortest
/// decimal that round-trips, so read-back reproduces the matrix exactly.
pub fn write_matrix_market(a: &CsrMatrix, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}
