//! CSV ingestion and emission, the Servo loader and feature scaling.
//!
//! CSV dialect: comma separated, `.` decimal point, mandatory header row,
//! UTF-8, LF line endings. The response column is named `y`; columns whose
//! name starts with `q_` carry auxiliary truth values and are never used
//! as features; every other column is a feature, in header order.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use svqr::data::{Dataset, Mat};
use svqr::error::{Error, Result};

#[derive(Debug)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
}

pub fn read_xy_csv(path: &Path) -> Result<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("bad header in {}: {e}", path.display())))?
        .clone();

    let mut y_col = None;
    let mut feature_cols = Vec::new();
    let mut feature_names = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if name == "y" {
            y_col = Some(i);
        } else if !name.starts_with("q_") {
            feature_cols.push(i);
            feature_names.push(name.to_string());
        }
    }
    let y_col = y_col.ok_or_else(|| {
        Error::invalid(format!("{}: no column named 'y'", path.display()))
    })?;
    if feature_cols.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no feature columns",
            path.display()
        )));
    }

    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::invalid(format!("{} row {}: {e}", path.display(), line + 2)))?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::invalid(format!("{} row {}: short record", path.display(), line + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| {
                    Error::invalid(format!(
                        "{} row {} column {}: {e}",
                        path.display(),
                        line + 2,
                        i + 1
                    ))
                })
        };
        rows.push(
            feature_cols
                .iter()
                .map(|&i| parse(i))
                .collect::<Result<Vec<f64>>>()?,
        );
        y.push(parse(y_col)?);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no data rows", path.display())));
    }
    Ok(LoadedCsv {
        dataset: Dataset::new(Mat::from_rows(&rows)?, y)?,
        feature_names,
    })
}

/// Features-only CSV for prediction; the `y` column is optional and
/// ignored when present.
pub fn read_feature_csv(path: &Path) -> Result<Mat> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("bad header in {}: {e}", path.display())))?
        .clone();
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, n)| *n != "y" && !n.starts_with("q_"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(Error::invalid(format!("{}: no feature columns", path.display())));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::invalid(format!("{} row {}: {e}", path.display(), line + 2)))?;
        let mut row = Vec::with_capacity(cols.len());
        for &i in &cols {
            let v = record
                .get(i)
                .ok_or_else(|| Error::invalid(format!("{} row {}: short record", path.display(), line + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| {
                    Error::invalid(format!("{} row {}: {e}", path.display(), line + 2))
                })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no data rows", path.display())));
    }
    Mat::from_rows(&rows)
}

/// Serialize floats so that parsing them back reproduces the exact value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mut s = String::new();
    let _ = write!(s, "{v}");
    s
}

pub fn write_xy_csv(path: &Path, data: &Dataset, truth: Option<(&str, &[f64])>) -> Result<()> {
    let mut out = String::new();
    let n = data.dim();
    let mut header: Vec<String> = (0..n)
        .map(|j| if n == 1 { "x".to_string() } else { format!("x{}", j + 1) })
        .collect();
    header.push("y".into());
    if let Some((name, _)) = truth {
        header.push(name.into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..data.len() {
        let mut fields: Vec<String> = (0..n).map(|j| fmt_f64(data.x.get(i, j))).collect();
        fields.push(fmt_f64(data.y[i]));
        if let Some((_, q)) = truth {
            fields.push(fmt_f64(q[i]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

/// Min-max scaling parameters, stored with fitted models so prediction
/// applies the identical transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaling {
    pub mins: Vec<f64>,
    pub ranges: Vec<f64>,
}

impl Scaling {
    pub fn fit(x: &Mat) -> Scaling {
        let (r, c) = (x.rows(), x.cols());
        let mut mins = vec![f64::INFINITY; c];
        let mut maxs = vec![f64::NEG_INFINITY; c];
        for i in 0..r {
            for j in 0..c {
                mins[j] = mins[j].min(x.get(i, j));
                maxs[j] = maxs[j].max(x.get(i, j));
            }
        }
        let ranges = mins
            .iter()
            .zip(&maxs)
            .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
            .collect();
        Scaling { mins, ranges }
    }

    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.mins.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mins.len(),
                got: x.cols(),
            });
        }
        let mut out = Mat::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                out.set(i, j, (x.get(i, j) - self.mins[j]) / self.ranges[j]);
            }
        }
        Ok(out)
    }
}

/// Load the UCI Servo dataset: five comma-separated columns per line
/// (motor A-E, screw A-E, pgain 3-6, vgain 1-5, rise time), no header.
/// The two categorical columns are one-hot encoded (5 indicators each, in
/// category order A..E) and the two numeric gains pass through, giving 12
/// feature columns.
pub fn load_servo(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        Error::invalid(format!(
            "Servo dataset not found at '{}'; expected the UCI servo.data file \
             (5 comma-separated columns per line: motor A-E, screw A-E, pgain, vgain, rise time); \
             pass --servo <path> to point at it",
            path.display()
        ))
    })?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::invalid(format!(
                "{} line {}: expected 5 fields, got {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(12);
        for cat in [fields[0], fields[1]] {
            let idx = match cat {
                "A" => 0,
                "B" => 1,
                "C" => 2,
                "D" => 3,
                "E" => 4,
                other => {
                    return Err(Error::invalid(format!(
                        "{} line {}: unknown category '{other}'",
                        path.display(),
                        i + 1
                    )))
                }
            };
            for k in 0..5 {
                row.push(if k == idx { 1.0 } else { 0.0 });
            }
        }
        for num in [fields[2], fields[3]] {
            row.push(num.parse::<f64>().map_err(|e| {
                Error::invalid(format!("{} line {}: {e}", path.display(), i + 1))
            })?);
        }
        rows.push(row);
        y.push(fields[4].parse::<f64>().map_err(|e| {
            Error::invalid(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no rows", path.display())));
    }
    Dataset::new(Mat::from_rows(&rows)?, y)
}
