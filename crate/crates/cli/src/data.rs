//! CSV ingestion for survival datasets.
//!
//! Complete-case rule: a row with an empty cell, `NA`, or `NaN` in any
//! selected column is dropped and counted, never imputed. Times must be
//! strictly positive and status values exactly 0 or 1; violations report
//! the 1-based data row number.

use std::path::Path;

use nalgebra::DMatrix;

use expaft::SurvivalSample;

use crate::error::{CliError, Result};

/// Column selection for [`read_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub time_column: String,
    pub status_column: String,
    pub covariate_columns: Vec<String>,
    /// Center and scale each covariate column (sample SD, n-1 denominator).
    pub standardize: bool,
}

/// A parsed dataset plus bookkeeping for the report.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub sample: SurvivalSample,
    pub n_used: usize,
    pub n_dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| CliError::BadCell {
        row,
        what: format!(
            "column '{column}': cannot parse '{}' as a number",
            cell.trim()
        ),
    })
}

pub fn read_csv(path: &Path, schema: &DatasetSchema) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => CliError::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let time_idx = find(&schema.time_column)?;
    let status_idx = find(&schema.status_column)?;
    let cov_idx: Vec<usize> = schema
        .covariate_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;

    let mut y = Vec::new();
    let mut delta = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0usize;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let selected: Vec<&str> = std::iter::once(record.get(time_idx).unwrap_or(""))
            .chain(std::iter::once(record.get(status_idx).unwrap_or("")))
            .chain(cov_idx.iter().map(|&i| record.get(i).unwrap_or("")))
            .collect();
        if selected.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }

        let time = parse_number(selected[0], row, &schema.time_column)?;
        if !(time.is_finite() && time > 0.0) {
            return Err(CliError::BadCell {
                row,
                what: format!(
                    "column '{}': time must be positive, got {time}",
                    schema.time_column
                ),
            });
        }
        let status = parse_number(selected[1], row, &schema.status_column)?;
        let event = if status == 0.0 {
            false
        } else if status == 1.0 {
            true
        } else {
            return Err(CliError::BadCell {
                row,
                what: format!(
                    "column '{}': status must be 0 or 1, got {status}",
                    schema.status_column
                ),
            });
        };

        let mut covs = Vec::with_capacity(cov_idx.len());
        for (j, cell) in selected[2..].iter().enumerate() {
            covs.push(parse_number(cell, row, &schema.covariate_columns[j])?);
        }
        y.push(time);
        delta.push(event);
        rows.push(covs);
    }

    let n = y.len();
    if n == 0 {
        return Err(CliError::EmptyData { dropped });
    }
    let p = schema.covariate_columns.len();
    let mut x = DMatrix::zeros(n, p);
    for (i, covs) in rows.iter().enumerate() {
        for (j, v) in covs.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    if schema.standardize {
        standardize_columns(&mut x);
    }

    let sample = SurvivalSample::new(y, delta, x)?;
    Ok(LoadedData {
        sample,
        n_used: n,
        n_dropped: dropped,
    })
}

/// Header names in file order, for defaulting the covariate list.
pub fn header_columns(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => CliError::Csv(e),
        })?;
    Ok(reader.headers()?.iter().map(String::from).collect())
}

/// Time and status columns only, with the same complete-case and
/// validation rules as [`read_csv`]. For curve exports that need no
/// covariates.
pub fn read_time_status(
    path: &Path,
    time_column: &str,
    status_column: &str,
) -> Result<(Vec<f64>, Vec<bool>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => CliError::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let time_idx = find(time_column)?;
    let status_idx = find(status_column)?;

    let mut y = Vec::new();
    let mut delta = Vec::new();
    let mut dropped = 0usize;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let tcell = record.get(time_idx).unwrap_or("");
        let scell = record.get(status_idx).unwrap_or("");
        if is_missing(tcell) || is_missing(scell) {
            dropped += 1;
            continue;
        }
        let time = parse_number(tcell, row, time_column)?;
        if !(time.is_finite() && time > 0.0) {
            return Err(CliError::BadCell {
                row,
                what: format!("column '{time_column}': time must be positive, got {time}"),
            });
        }
        let status = parse_number(scell, row, status_column)?;
        let event = if status == 0.0 {
            false
        } else if status == 1.0 {
            true
        } else {
            return Err(CliError::BadCell {
                row,
                what: format!("column '{status_column}': status must be 0 or 1, got {status}"),
            });
        };
        y.push(time);
        delta.push(event);
    }
    if y.is_empty() {
        return Err(CliError::EmptyData { dropped });
    }
    Ok((y, delta, dropped))
}

/// In place, per column: subtract the mean, divide by the sample SD.
/// A constant column is left centered but unscaled.
pub fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    if n < 2 {
        return;
    }
    for j in 0..x.ncols() {
        let mean = x.column(j).sum() / n as f64;
        let mut ss = 0.0;
        for i in 0..n {
            x[(i, j)] -= mean;
            ss += x[(i, j)] * x[(i, j)];
        }
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if sd > 0.0 {
            for i in 0..n {
                x[(i, j)] /= sd;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> DatasetSchema {
        DatasetSchema {
            time_column: "time".into(),
            status_column: "status".into(),
            covariate_columns: vec!["a".into(), "b".into()],
            standardize: false,
        }
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_a_well_formed_file() {
        let f = write_csv("time,status,a,b\n1.5,1,0.1,2.0\n2.5,0,0.2,3.0\n4.0,1,0.3,4.0\n");
        let d = read_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.n_used, 3);
        assert_eq!(d.n_dropped, 0);
        assert_eq!(d.sample.y(), &[1.5, 2.5, 4.0]);
        assert_eq!(d.sample.delta(), &[true, false, true]);
        assert_eq!(d.sample.x()[(2, 1)], 4.0);
    }

    #[test]
    fn drops_incomplete_rows_and_counts_them() {
        let f = write_csv("time,status,a,b\n1.5,1,0.1,2.0\n2.5,0,,3.0\n3.5,1,NA,1.0\n4.0,1,0.3,NaN\n5.0,0,1.0,1.0\n");
        let d = read_csv(f.path(), &schema()).unwrap();
        assert_eq!(d.n_used, 2);
        assert_eq!(d.n_dropped, 3);
    }

    #[test]
    fn rejects_bad_cells_with_row_numbers() {
        let f = write_csv("time,status,a,b\n1.5,1,0.1,2.0\n-2.5,0,0.2,3.0\n");
        let err = read_csv(f.path(), &schema()).unwrap_err();
        assert!(matches!(err, CliError::BadCell { row: 2, .. }), "{err}");

        let f = write_csv("time,status,a,b\n1.5,2,0.1,2.0\n");
        let err = read_csv(f.path(), &schema()).unwrap_err();
        assert!(err.to_string().contains("status must be 0 or 1"), "{err}");

        let f = write_csv("time,status,a,b\n1.5,1,0.1,2.0\n");
        let bad = DatasetSchema {
            time_column: "t".into(),
            ..schema()
        };
        let err = read_csv(f.path(), &bad).unwrap_err();
        assert!(
            matches!(err, CliError::MissingColumn(ref c) if c == "t"),
            "{err}"
        );
    }

    #[test]
    fn standardizes_to_unit_moments() {
        let f = write_csv("time,status,a,b\n1,1,1,10\n2,1,2,20\n3,0,3,30\n4,1,4,40\n");
        let mut s = schema();
        s.standardize = true;
        let d = read_csv(f.path(), &s).unwrap();
        for j in 0..2 {
            let col = d.sample.x().column(j);
            let mean = col.sum() / 4.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12, "column {j} mean {mean}");
            assert!((var - 1.0).abs() < 1e-12, "column {j} var {var}");
        }
    }

    #[test]
    fn empty_after_filtering_is_an_error() {
        let f = write_csv("time,status,a,b\n,1,0.1,2.0\n");
        let err = read_csv(f.path(), &schema()).unwrap_err();
        assert!(matches!(err, CliError::EmptyData { dropped: 1 }), "{err}");
    }
}
