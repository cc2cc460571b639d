//! CSV ingestion. Tabular data ships with observations as rows; the
//! library wants variables as rows, so the matrix is transposed here.

use std::path::Path;

use nalgebra::DMatrix;

use crate::CliError;

/// Parse a CSV of N observation rows by p variable columns into a p-by-N
/// matrix. A header is detected by any first-row field that does not parse
/// as a number; later non-numeric or non-finite fields are errors.
pub fn read_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        match parse_record(&record) {
            Ok(values) => rows.push(values),
            // Non-numeric first row: header, skip it.
            Err(_) if index == 0 => {}
            Err(col) => {
                return Err(CliError::Invalid(format!(
                    "row {} column {} is not a finite number: `{}`",
                    index + 1,
                    col + 1,
                    &record[col]
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Invalid("CSV contains no data rows".into()));
    }
    let n = rows.len();
    let p = rows[0].len();
    if p == 0 {
        return Err(CliError::Invalid("CSV rows have no columns".into()));
    }
    Ok(DMatrix::from_fn(p, n, |var, obs| rows[obs][var]))
}

/// All-or-nothing numeric parse; reports the first offending column.
fn parse_record(record: &csv::StringRecord) -> Result<Vec<f64>, usize> {
    let mut values = Vec::with_capacity(record.len());
    for (col, field) in record.iter().enumerate() {
        match field.parse::<f64>() {
            Ok(value) if value.is_finite() => values.push(value),
            _ => return Err(col),
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn plain_csv_is_transposed() {
        let file = write_temp("1,2,3\n4,5,6\n");
        let m = read_csv(file.path()).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 2));
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(2, 1)], 6.0);
    }

    #[test]
    fn header_row_is_skipped() {
        let file = write_temp("a,b,c\n1,2,3\n4,5,6\n");
        let m = read_csv(file.path()).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 2));
        assert_eq!(m[(0, 0)], 1.0);
    }

    #[test]
    fn later_non_numeric_field_is_an_error() {
        let file = write_temp("1,2\n3,oops\n");
        match read_csv(file.path()) {
            Err(CliError::Invalid(msg)) => {
                assert!(msg.contains("row 2 column 2"), "{msg}");
            }
            other => panic!("expected invalid, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let file = write_temp("1,2\nnan,4\n");
        assert!(matches!(read_csv(file.path()), Err(CliError::Invalid(_))));
    }

    #[test]
    fn ragged_rows_are_invalid() {
        let file = write_temp("1,2,3\n4,5\n");
        assert!(matches!(read_csv(file.path()), Err(CliError::Invalid(_))));
    }

    #[test]
    fn missing_file_is_io() {
        let missing = Path::new("/definitely/not/here.csv");
        assert!(matches!(read_csv(missing), Err(CliError::Io(_))));
    }

    #[test]
    fn header_only_file_has_no_data() {
        let file = write_temp("a,b,c\n");
        assert!(matches!(read_csv(file.path()), Err(CliError::Invalid(_))));
    }
}
