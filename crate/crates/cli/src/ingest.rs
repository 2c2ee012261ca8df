//! Dataset readers and writers: dense CSV (last column is the response,
//! optional header) and svmlight sparse ("label idx:val ...", 1-based
//! indices).

use crate::config::DataFormat;
use ndarray::{Array1, Array2};
use randalo_core::data::{Dataset, DesignMatrix, SparseMatrix};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line} has {got} columns, expected {expected}")]
    InconsistentDimension { line: usize, got: usize, expected: usize },
    #[error("file contains no data rows")]
    Empty,
}

pub fn ingest(path: &Path, format: DataFormat) -> Result<Dataset, IngestError> {
    let file = std::fs::File::open(path)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    let reader = BufReader::new(file);
    match format {
        DataFormat::DenseCsv => read_dense_csv(reader),
        DataFormat::SvmlightSparse => read_svmlight(reader),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, IngestError> {
    tok.trim().parse::<f64>().map_err(|_| IngestError::Parse {
        line,
        reason: format!("not a number: {tok:?}"),
    })
}

fn read_dense_csv<R: BufRead>(reader: R) -> Result<Dataset, IngestError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| IngestError::Io { path: "<stream>".into(), source })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split(',').collect();
        // A header is tolerated on the first row: skip if any token is
        // non-numeric there.
        if rows.is_empty() && width.is_none() && tokens.iter().any(|t| t.trim().parse::<f64>().is_err())
        {
            width = Some(tokens.len());
            continue;
        }
        let expected = *width.get_or_insert(tokens.len());
        if tokens.len() != expected {
            return Err(IngestError::InconsistentDimension {
                line: line_no,
                got: tokens.len(),
                expected,
            });
        }
        if tokens.len() < 2 {
            return Err(IngestError::Parse {
                line: line_no,
                reason: "need at least one feature column and the response".into(),
            });
        }
        let mut vals = Vec::with_capacity(tokens.len());
        for tok in tokens {
            vals.push(parse_f64(tok, line_no)?);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    let n = rows.len();
    let p = rows[0].len() - 1;
    let mut x = Array2::<f64>::zeros((n, p));
    let mut y = Array1::<f64>::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..p {
            x[[i, j]] = row[j];
        }
        y[i] = row[p];
    }
    Ok(Dataset::dense(x, y).expect("shapes agree by construction"))
}

fn read_svmlight<R: BufRead>(reader: R) -> Result<Dataset, IngestError> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut max_col = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| IngestError::Io { path: "<stream>".into(), source })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let label = parts
            .next()
            .ok_or_else(|| IngestError::Parse { line: line_no, reason: "empty line".into() })?;
        labels.push(parse_f64(label, line_no)?);
        let mut entries = Vec::new();
        for part in parts {
            let (i_str, v_str) = part.split_once(':').ok_or_else(|| IngestError::Parse {
                line: line_no,
                reason: format!("expected idx:val, got {part:?}"),
            })?;
            let col: usize = i_str.parse().map_err(|_| IngestError::Parse {
                line: line_no,
                reason: format!("bad index {i_str:?}"),
            })?;
            if col == 0 {
                return Err(IngestError::Parse {
                    line: line_no,
                    reason: "svmlight indices are 1-based".into(),
                });
            }
            let val = parse_f64(v_str, line_no)?;
            max_col = max_col.max(col);
            entries.push((col - 1, val));
        }
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    let x = SparseMatrix::from_rows(max_col, rows);
    let y = Array1::from_vec(labels);
    Ok(Dataset::new(DesignMatrix::Sparse(x), y).expect("shapes agree by construction"))
}

/// Write a dataset in the given format; the written file re-ingests to the
/// same dataset (dense values are written with shortest round-trip floats).
pub fn write_dataset(path: &Path, data: &Dataset, format: DataFormat) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        DataFormat::DenseCsv => {
            let x = data.x.to_dense();
            for i in 0..data.n_samples() {
                let mut fields: Vec<String> =
                    (0..data.n_features()).map(|j| format!("{}", x[[i, j]])).collect();
                fields.push(format!("{}", data.y[i]));
                writeln!(file, "{}", fields.join(","))?;
            }
        }
        DataFormat::SvmlightSparse => {
            for i in 0..data.n_samples() {
                let mut line = format!("{}", data.y[i]);
                match &data.x {
                    DesignMatrix::Sparse(m) => {
                        for (j, v) in m.row_entries(i) {
                            line.push_str(&format!(" {}:{}", j + 1, v));
                        }
                    }
                    DesignMatrix::Dense(m) => {
                        for j in 0..data.n_features() {
                            if m[[i, j]] != 0.0 {
                                line.push_str(&format!(" {}:{}", j + 1, m[[i, j]]));
                            }
                        }
                    }
                }
                writeln!(file, "{line}")?;
            }
        }
    }
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn dense_csv_last_column_is_response() {
        let data = read_dense_csv(Cursor::new("1,2,3\n4,5,6\n")).unwrap();
        assert_eq!(data.n_samples(), 2);
        assert_eq!(data.n_features(), 2);
        assert_eq!(data.y.to_vec(), vec![3.0, 6.0]);
        assert_eq!(data.x.to_dense()[[1, 0]], 4.0);
    }

    #[test]
    fn dense_csv_with_header() {
        let data = read_dense_csv(Cursor::new("a,b,target\n1,2,3\n")).unwrap();
        assert_eq!(data.n_samples(), 1);
        assert_eq!(data.y[0], 3.0);
    }

    #[test]
    fn dense_csv_inconsistent_width() {
        let err = read_dense_csv(Cursor::new("1,2,3\n4,5\n")).unwrap_err();
        assert!(matches!(err, IngestError::InconsistentDimension { line: 2, .. }));
    }

    #[test]
    fn svmlight_single_entry() {
        let data = read_svmlight(Cursor::new("-1 3:0.5\n")).unwrap();
        assert_eq!(data.n_samples(), 1);
        assert_eq!(data.n_features(), 3);
        assert_eq!(data.y[0], -1.0);
        let dense = data.x.to_dense();
        assert_eq!(dense[[0, 2]], 0.5);
        assert_eq!(dense[[0, 0]], 0.0);
    }

    #[test]
    fn svmlight_rejects_zero_index() {
        let err = read_svmlight(Cursor::new("1 0:2.0\n")).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 1, .. }));
    }

    #[test]
    fn svmlight_bad_pair_reports_line() {
        let err = read_svmlight(Cursor::new("1 3:0.5\n-1 junk\n")).unwrap_err();
        match err {
            IngestError::Parse { line, reason } => {
                assert_eq!(line, 2);
                assert!(reason.contains("junk"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
