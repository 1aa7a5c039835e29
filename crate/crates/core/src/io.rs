//! Matrix CSV files.
//!
//! One matrix row per line, comma separated, `.` as the decimal point. An
//! optional first line `# rows=<r> cols=<c>` declares the shape; when present
//! it is checked against the data. Blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{mat_from_col_major, Mat, Vector};

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut rows = None;
    let mut cols = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("header rows: {e}")))?);
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("header cols: {e}")))?);
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Parse(format!("malformed header line `{line}`"))),
    }
}

pub fn parse_matrix_csv(text: &str) -> Result<Mat> {
    let mut declared = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if rows.is_empty() && declared.is_none() {
                declared = Some(parse_header(line)?);
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: `{}`: {e}", lineno + 1, tok.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((r, c)) = declared {
        if (r, c) != (nrows, ncols) {
            return Err(Error::dim("matrix csv", format!("{r}x{c} (header)"), format!("{nrows}x{ncols}")));
        }
    }
    let mut data = Vec::with_capacity(nrows * ncols);
    for j in 0..ncols {
        for row in &rows {
            data.push(row[j]);
        }
    }
    mat_from_col_major(nrows, ncols, data)
}

pub fn format_matrix_csv(m: &Mat) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# rows={} cols={}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat> {
    parse_matrix_csv(&std::fs::read_to_string(path)?)
}

pub fn write_matrix_csv(path: &Path, m: &Mat) -> Result<()> {
    std::fs::write(path, format_matrix_csv(m))?;
    Ok(())
}

/// Reads a vector stored either as a single column or a single row.
pub fn read_vector_csv(path: &Path) -> Result<Vector> {
    let m = read_matrix_csv(path)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(Vector::from_iterator(m.len(), m.iter().copied()))
    } else {
        Err(Error::dim("vector csv", "single row or column", format!("{}x{}", m.nrows(), m.ncols())))
    }
}
