//! CSV input and output for datasets and first-stage coefficients.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dgp::Dataset;
use crate::error::{Error, Result};

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Data(e.to_string()),
    }
}

/// Parses one cell, rejecting blanks and non-finite values.
fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let cell = raw.trim();
    if cell.is_empty() {
        return Err(Error::Data(format!("row {row}, column `{column}`: missing value")));
    }
    let value: f64 = cell
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column `{column}`: `{cell}` is not a number")))?;
    if !value.is_finite() {
        return Err(Error::Data(format!("row {row}, column `{column}`: `{cell}` is not finite")));
    }
    Ok(value)
}

/// Reads a headed numeric table; returns the header and the rows.
fn read_table(reader: impl Read) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::Data("the header row is missing".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(csv_error)?;
        // Data rows are numbered from 1, after the header.
        let row = i + 1;
        let values = record
            .iter()
            .zip(&header)
            .map(|(cell, name)| parse_cell(cell, row, name))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Data("the file has a header but no data rows".into()));
    }
    Ok((header, rows))
}

/// Checks that `names` is exactly `prefix1, prefix2, …`.
fn numbered(names: &[String], prefix: &str) -> Result<usize> {
    if names.is_empty() {
        return Err(Error::Data(format!("missing columns: expected at least `{prefix}1`")));
    }
    for (i, name) in names.iter().enumerate() {
        let want = format!("{prefix}{}", i + 1);
        if *name != want {
            return Err(Error::Data(format!(
                "expected column `{want}` but found `{name}`"
            )));
        }
    }
    Ok(names.len())
}

/// Reads a dataset with header `y,x1..xG,z1..zK`.
pub fn read_dataset(reader: impl Read) -> Result<Dataset> {
    let (header, rows) = read_table(reader)?;
    if header.first().map(String::as_str) != Some("y") {
        return Err(Error::Data(format!(
            "missing column `y`: the header must start with y, x1..xG, z1..zK (found `{}`)",
            header.join(",")
        )));
    }
    let first_z = header
        .iter()
        .position(|h| h.starts_with('z'))
        .ok_or_else(|| Error::Data("missing columns: expected at least `z1`".into()))?;
    let g = numbered(&header[1..first_z], "x")?;
    let k = numbered(&header[first_z..], "z")?;
    let n = rows.len();
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[0]));
    let x = DMatrix::from_fn(n, g, |i, j| rows[i][1 + j]);
    let z = DMatrix::from_fn(n, k, |i, j| rows[i][first_z + j]);
    Dataset::new(y, x, z, None)
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(file)
}

/// Writes a dataset in the layout [`read_dataset`] accepts.
pub fn write_dataset(data: &Dataset, mut out: impl Write) -> Result<()> {
    let mut header = vec!["y".to_string()];
    header.extend((1..=data.g()).map(|j| format!("x{j}")));
    header.extend((1..=data.k()).map(|j| format!("z{j}")));
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..data.n() {
        line.clear();
        line.push_str(&super::report::fmt_f64(data.y()[i]));
        for v in data.x().row(i).iter().chain(data.z().row(i).iter()) {
            line.push(',');
            line.push_str(&super::report::fmt_f64(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a K×G coefficient matrix: a header row, then one row per instrument.
pub fn read_pi(reader: impl Read) -> Result<DMatrix<f64>> {
    let (header, rows) = read_table(reader)?;
    let g = header.len();
    Ok(DMatrix::from_fn(rows.len(), g, |i, j| rows[i][j]))
}

pub fn read_pi_file(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_pi(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_well_formed_file() {
        let d = read_dataset("y,x1,z1,z2\n1,2,3,4\n5,6,7,8\n".as_bytes()).unwrap();
        assert_eq!((d.n(), d.g(), d.k()), (2, 1, 2));
        assert_eq!(d.z()[(1, 0)], 7.0);
        assert_eq!(d.y()[1], 5.0);
    }

    #[test]
    fn rejects_bad_headers() {
        for text in [
            "x1,z1\n1,2\n",
            "y,z1\n1,2\n",
            "y,x1\n1,2\n",
            "y,x1,z2\n1,2,3\n",
            "y,x2,z1\n1,2,3\n",
        ] {
            assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Data(_))), "{text}");
        }
    }

    #[test]
    fn rejects_bad_cells() {
        for text in [
            "y,x1,z1\n1,,3\n",
            "y,x1,z1\n1,abc,3\n",
            "y,x1,z1\n1,NaN,3\n",
            "y,x1,z1\n1,2\n",
            "y,x1,z1\n",
        ] {
            let err = read_dataset(text.as_bytes()).unwrap_err();
            assert_eq!(err.exit_code(), 3, "{text}: {err}");
        }
    }

    #[test]
    fn write_then_read_is_lossless() {
        let d = Dataset::new(
            DVector::from_vec(vec![0.1, 1.0 / 3.0]),
            DMatrix::from_row_slice(2, 1, &[1e-300, -2.5]),
            DMatrix::from_row_slice(2, 2, &[std::f64::consts::PI, 0.0, 1e22, -7.0]),
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn pi_file_shape() {
        let pi = read_pi("pi1,pi2\n1,0\n0.5,2\n0,0\n".as_bytes()).unwrap();
        assert_eq!(pi.shape(), (3, 2));
        assert_eq!(pi[(1, 1)], 2.0);
    }
}
