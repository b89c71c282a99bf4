//! CSV matrices with a header row. Missing responses are written as `NA`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use mvlink::DMatrix;

use crate::error::CliError;

pub const MISSING_TOKEN: &str = "NA";

/// A numeric table with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    /// `false` where the cell held the missing token.
    pub observed: Option<DMatrix<bool>>,
}

fn input_error(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {msg}", path.display()))
}

/// Reads a CSV file. `allow_missing` accepts `NA` cells and records them in
/// `observed`.
pub fn read_table(path: &Path, allow_missing: bool) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_error(path, e))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| input_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(input_error(path, "missing header row"));
    }
    let cols = names.len();
    let mut data = Vec::new();
    let mut observed = Vec::new();
    let mut any_missing = false;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_error(path, e))?;
        if record.len() != cols {
            return Err(input_error(
                path,
                format!("row {} has {} fields, expected {cols}", row + 2, record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            if field == MISSING_TOKEN {
                if !allow_missing {
                    return Err(input_error(
                        path,
                        format!("missing value at row {}, column {}", row + 2, col + 1),
                    ));
                }
                any_missing = true;
                data.push(f64::NAN);
                observed.push(false);
                continue;
            }
            let value: f64 = field.parse().map_err(|_| {
                input_error(path, format!("bad number {field:?} at row {}, column {}", row + 2, col + 1))
            })?;
            if !value.is_finite() {
                return Err(input_error(path, format!("non-finite value at row {}", row + 2)));
            }
            data.push(value);
            observed.push(true);
        }
    }
    let rows = data.len() / cols;
    if rows == 0 {
        return Err(input_error(path, "no data rows"));
    }
    Ok(Table {
        names,
        values: DMatrix::from_row_slice(rows, cols, &data),
        observed: any_missing.then(|| DMatrix::from_row_slice(rows, cols, &observed)),
    })
}

/// Reads a 0/1 mask file; `1` marks an observed entry.
pub fn read_mask(path: &Path) -> Result<DMatrix<bool>, CliError> {
    let table = read_table(path, false)?;
    if table.values.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(input_error(path, "mask entries must be 0 or 1"));
    }
    Ok(table.values.map(|v| v == 1.0))
}

/// Writes with the shortest representation that parses back to the same
/// `f64`, so files round-trip exactly.
pub fn write_table(
    path: &Path,
    names: &[String],
    values: &DMatrix<f64>,
    observed: Option<&DMatrix<bool>>,
) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    writer.write_record(names).map_err(|e| CliError::io(path, e))?;
    for i in 0..values.nrows() {
        let row: Vec<String> = (0..values.ncols())
            .map(|j| match observed {
                Some(m) if !m[(i, j)] => MISSING_TOKEN.to_string(),
                _ => values[(i, j)].to_string(),
            })
            .collect();
        writer.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Writes string records with a header.
pub fn write_records<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    writer.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        let row: Vec<String> = row.into_iter().collect();
        writer.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
    writeln!(file, "{text}").map_err(|e| CliError::io(path, e))
}

pub fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits_and_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let values = DMatrix::from_row_slice(2, 2, &[0.1 + 0.2, -1e-300, 1.0 / 3.0, 7.0]);
        let observed = DMatrix::from_row_slice(2, 2, &[true, true, false, true]);
        let names = vec!["a".to_string(), "b".to_string()];
        write_table(&path, &names, &values, Some(&observed)).unwrap();
        let back = read_table(&path, true).unwrap();
        assert_eq!(back.names, names);
        assert_eq!(back.observed.as_ref(), Some(&observed));
        assert_eq!(back.values[(0, 0)].to_bits(), values[(0, 0)].to_bits());
        assert_eq!(back.values[(0, 1)].to_bits(), values[(0, 1)].to_bits());
        assert!(back.values[(1, 0)].is_nan());
    }

    #[test]
    fn rejects_missing_token_where_not_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,NA\n").unwrap();
        assert!(matches!(read_table(&path, false), Err(CliError::Input(_))));
        std::fs::write(&path, "a,b\n1,zz\n").unwrap();
        assert!(matches!(read_table(&path, true), Err(CliError::Input(_))));
        std::fs::write(&path, "a,b\n1\n").unwrap();
        assert!(read_table(&path, true).is_err());
    }

    #[test]
    fn mask_values_must_be_binary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "a,b\n1,0\n1,1\n").unwrap();
        let mask = read_mask(&path).unwrap();
        assert!(!mask[(0, 1)] && mask[(1, 1)]);
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_mask(&path).is_err());
    }
}
