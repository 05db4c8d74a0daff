//! Matrix CSV dialect: comma separated, mandatory header row, UTF-8, floats
//! written in shortest round-trip form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Shortest decimal string that parses back to exactly `v`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Header and data read from a CSV source.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub data: Matrix,
}

pub fn read_csv_from<R: Read>(reader: R, path: Option<&Path>) -> Result<CsvTable> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.map(Path::to_path_buf),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Csv {
            path: path.map(Path::to_path_buf),
            message: "missing header row".into(),
        });
    }
    let cols = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::NonNumericColumn {
                    column: header[j].clone(),
                    index: j,
                    row: r + 1,
                    value: field.to_owned(),
                }
            })?;
            data.push(value);
        }
        rows += 1;
    }
    Ok(CsvTable {
        header,
        data: Matrix::new(rows, cols, data)?,
    })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_csv_from(file, Some(path))
}

pub fn write_csv_to<W: Write>(mut w: W, header: &[impl AsRef<str>], m: &Matrix) -> Result<()> {
    if header.len() != m.cols() {
        return Err(Error::shape("write_csv", m.cols(), header.len()));
    }
    let names: Vec<&str> = header.iter().map(AsRef::as_ref).collect();
    writeln!(w, "{}", names.join(","))?;
    let mut line = String::new();
    for row in m.row_iter() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, header: &[impl AsRef<str>], m: &Matrix) -> Result<()> {
    let file = std::io::BufWriter::new(File::create(path)?);
    write_csv_to(file, header, m)
}

/// `prefix0, prefix1, ...`
pub fn default_header(prefix: &str, cols: usize) -> Vec<String> {
    (0..cols).map(|j| format!("{prefix}{j}")).collect()
}
