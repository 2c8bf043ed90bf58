//! Headerless CSV matrices.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::NodeMatrix;

/// Parse rows of comma-separated numbers. Blank lines are skipped; row and
/// column numbers in errors are 1-based and count only non-blank lines.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row = rows.len() + 1;
        let mut values = Vec::new();
        for (c, field) in line.split(',').enumerate() {
            let col = c + 1;
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                col,
                msg: format!("not a number: {:?}", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, col, msg: "non-finite value".into() });
            }
            values.push(v);
        }
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::Parse {
                    row,
                    col: values.len(),
                    msg: format!("ragged row: {} fields, expected {}", values.len(), first.len()),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse { row: 1, col: 1, msg: "empty matrix".into() });
    }
    let (n, d) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

pub fn load_matrix(path: &Path) -> Result<NodeMatrix> {
    NodeMatrix::new(parse_matrix(&std::fs::read_to_string(path)?)?)
}

/// Render with 17 significant digits, which round-trips every `f64`.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}

/// One value per line.
pub fn save_vector(path: &Path, v: &[f64]) -> Result<()> {
    save_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_matrix() {
        let m = parse_matrix("1,2\n3,4\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn ragged_row_is_named() {
        match parse_matrix("1,2\n3\n") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_fields() {
        assert!(matches!(parse_matrix("1,x\n"), Err(Error::Parse { row: 1, col: 2, .. })));
        assert!(matches!(parse_matrix("1,2\nNaN,1\n"), Err(Error::Parse { row: 2, col: 1, .. })));
        assert!(parse_matrix("\n\n").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 0.1).powf(j as f64 + 0.37) * 1e-7 - 1.0 / 3.0);
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
        let tiny = DMatrix::from_row_slice(1, 3, &[f64::MIN_POSITIVE, -f64::MAX, 5e-324]);
        assert_eq!(parse_matrix(&format_matrix(&tiny)).unwrap(), tiny);
    }
}
