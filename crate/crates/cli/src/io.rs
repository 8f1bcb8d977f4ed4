//! CSV matrices, mask files, label files and TSV tables.
//!
//! Matrices are stored one ambient dimension per line and one data point per
//! field. An empty field or `NaN` marks a missing entry. Mask files have the
//! same shape with `1` (observed) or `0` (missing) and take precedence over
//! inline markers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fsc::{Labels, MaskedMatrix};
use nalgebra::DMatrix;

use crate::error::CliError;

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn read_grid(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", i + 1),
        })?;
        rows.push(record.iter().map(str::to_owned).collect::<Vec<_>>());
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::Parse {
            path: path.display().to_string(),
            message: "no data".into(),
        });
    }
    let width = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(CliError::Parse {
            path: path.display().to_string(),
            message: format!("line {} has {} fields, expected {width}", i + 1, r.len()),
        });
    }
    Ok(rows)
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("nan")
}

/// Reads a data matrix, optionally with a mask file.
pub fn read_matrix(path: &Path, mask_path: Option<&Path>) -> Result<MaskedMatrix<f64>, CliError> {
    let rows = read_grid(path)?;
    let (d, n) = (rows.len(), rows[0].len());
    let mask = match mask_path {
        Some(mp) => {
            let m = read_mask(mp)?;
            if m.shape() != (d, n) {
                return Err(CliError::Parse {
                    path: mp.display().to_string(),
                    message: format!(
                        "mask is {}x{} but the matrix is {d}x{n}",
                        m.nrows(),
                        m.ncols()
                    ),
                });
            }
            m
        }
        None => DMatrix::from_fn(d, n, |i, j| !is_missing(&rows[i][j])),
    };
    let mut values = DMatrix::<f64>::zeros(d, n);
    for i in 0..d {
        for j in 0..n {
            if !mask[(i, j)] {
                continue;
            }
            let field = &rows[i][j];
            let v: f64 = field.parse().map_err(|_| CliError::Parse {
                path: path.display().to_string(),
                message: format!(
                    "row {}, column {}: '{field}' is not a number but the entry is marked observed",
                    i + 1,
                    j + 1
                ),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    path: path.display().to_string(),
                    message: format!(
                        "row {}, column {}: observed entry is not finite",
                        i + 1,
                        j + 1
                    ),
                });
            }
            values[(i, j)] = v;
        }
    }
    Ok(MaskedMatrix::new(values, mask)?)
}

pub fn read_mask(path: &Path) -> Result<DMatrix<bool>, CliError> {
    let rows = read_grid(path)?;
    let (d, n) = (rows.len(), rows[0].len());
    let mut mask = DMatrix::from_element(d, n, false);
    for i in 0..d {
        for j in 0..n {
            mask[(i, j)] = match rows[i][j].as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(CliError::Parse {
                        path: path.display().to_string(),
                        message: format!(
                            "row {}, column {}: mask entries must be 0 or 1, got '{other}'",
                            i + 1,
                            j + 1
                        ),
                    })
                }
            };
        }
    }
    Ok(mask)
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes a matrix; entries where `mask` is false are left empty.
pub fn write_matrix(
    path: &Path,
    values: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    for i in 0..values.nrows() {
        let line: Vec<String> = (0..values.ncols())
            .map(|j| match mask {
                Some(m) if !m[(i, j)] => String::new(),
                _ => fmt_f64(values[(i, j)]),
            })
            .collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_masked(path: &Path, x: &MaskedMatrix<f64>) -> Result<(), CliError> {
    write_matrix(path, x.values(), Some(x.mask()))
}

pub fn write_mask(path: &Path, mask: &DMatrix<bool>) -> Result<(), CliError> {
    let mut w = create(path)?;
    for i in 0..mask.nrows() {
        let line: Vec<&str> = (0..mask.ncols())
            .map(|j| if mask[(i, j)] { "1" } else { "0" })
            .collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One 1-based id per line; blank lines are ignored.
pub fn read_labels(path: &Path) -> Result<Labels, CliError> {
    let reader = BufReader::new(open(path)?);
    let mut ids = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let id: usize = t.parse().map_err(|_| CliError::Parse {
            path: path.display().to_string(),
            message: format!("line {}: '{t}' is not a cluster id", i + 1),
        })?;
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(CliError::Parse {
            path: path.display().to_string(),
            message: "no labels".into(),
        });
    }
    Ok(Labels::from_ids(&ids))
}

pub fn write_labels(path: &Path, labels: &Labels) -> Result<(), CliError> {
    let mut w = create(path)?;
    for id in labels.ids() {
        writeln!(w, "{id}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Tab-separated table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "{}", header.join("\t")).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        writeln!(w, "{}", row.join("\t")).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.0,
            -0.0,
            1.0,
            0.1,
            1e-300,
            -3.25e17,
            123456.789,
            5e-5,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1e-300), "1e-300");
    }
}
