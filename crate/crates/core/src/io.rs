//! CSV and JSON writers. Floats are written with 17 significant digits so
//! every value round-trips exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{Field1D, Field2D, Grid1D, Grid2D};

/// Renders `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header line and rows of already formatted cells.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let emit = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.as_ref().join(","))?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Numeric rows with the 17-digit format.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    write_rows(
        path,
        header,
        rows.into_iter().map(|r| r.into_iter().map(fmt_f64).collect::<Vec<_>>()),
    )
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// `x,u` columns.
pub fn write_field_1d(path: &Path, grid: &Grid1D, u: &Field1D) -> Result<()> {
    check_finite(&u.values)?;
    write_table(
        path,
        &["x", "u"],
        grid.x.iter().zip(&u.values).map(|(&x, &u)| vec![x, u]),
    )
}

/// `x1,x2,u,interior` columns, `interior` as 0/1.
pub fn write_field_2d(path: &Path, grid: &Grid2D, u: &Field2D) -> Result<()> {
    check_finite(&u.values)?;
    write_rows(
        path,
        &["x1", "x2", "u", "interior"],
        (0..grid.len()).map(|k| {
            let (x1, x2) = grid.coords(k);
            vec![
                fmt_f64(x1),
                fmt_f64(x2),
                fmt_f64(u.values[k]),
                u8::from(grid.interior[k]).to_string(),
            ]
        }),
    )
}

/// Reads back the numeric columns of a CSV written by this module.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), i + 2)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Pretty JSON with keys in sorted order.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is a BTreeMap, so going through Value sorts keys
    let v = serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_sorted_json(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
