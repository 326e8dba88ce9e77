//! Reading user data and writing result files.

mod config;
mod pipeline;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::data::{Dataset, Ranking, Subset};
use crate::error::{invalid_arg, Error, Result};

pub use config::{AlgorithmEntry, BootstrapSettings, InferenceSettings, RunConfig};
pub use pipeline::{
    run, run_in_memory, write_bundle, AlgorithmFilter, AlgorithmResult, BundleMetadata, ComparisonRow, RankingResult,
    ResultBundle, RunOutput, SelectionResult, VrocPoint, BOOTSTRAP_CSV, SUMMARY_JSON, VROC_COLUMNS, VROC_CSV,
};

/// JSON Schema for `summary.json`.
pub const SUMMARY_SCHEMA: &str = include_str!("../../schema/summary.schema.json");

/// Reads a headed CSV of numeric cells. The outcome column is split off and
/// every other column becomes a covariate, in file order.
pub fn ingest_csv(path: &Path, outcome_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let outcome = headers.iter().position(|h| h == outcome_column).ok_or_else(|| {
        invalid_arg(format!(
            "outcome column '{outcome_column}' not found in {}",
            path.display()
        ))
    })?;
    let mut seen = HashSet::new();
    if let Some(dup) = headers.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(invalid_arg(format!("duplicate column name '{dup}'")));
    }
    let p = headers.len() - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // data rows are numbered from 1, after the header
        let row = r + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Ingestion {
                row,
                column: headers.get(record.len()).cloned().unwrap_or_default(),
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let value = parse_cell(cell).map_err(|message| Error::Ingestion {
                row,
                column: headers[c].clone(),
                message,
            })?;
            if c == outcome {
                y.push(value);
            } else {
                x.push(value);
            }
        }
    }
    if y.is_empty() {
        return Err(invalid_arg(format!("{} has no data rows", path.display())));
    }
    let names = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != outcome)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(x, y, p)?.with_column_names(names)
}

fn parse_cell(cell: &str) -> std::result::Result<f64, String> {
    let s = cell.trim();
    if s.is_empty() {
        return Err("missing value".into());
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value '{s}'")),
        Err(_) => Err(format!("not a number: '{s}'")),
    }
}

/// Writes `data` as a headed CSV with the outcome in the last column.
pub fn export_csv(data: &Dataset, outcome_column: &str, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.p()).map(|j| data.column_label(j)).collect();
    header.push(outcome_column.to_string());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.y()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Resolves one line of a ranking or subset file: a column name, or a
/// 1-based column index.
fn resolve_variable(token: &str, data: &Dataset) -> Result<usize> {
    if let Some(names) = data.column_names() {
        if let Some(j) = names.iter().position(|n| n == token) {
            return Ok(j);
        }
    }
    match token.parse::<usize>() {
        Ok(j) if (1..=data.p()).contains(&j) => Ok(j - 1),
        Ok(j) => Err(invalid_arg(format!("variable index {j} outside 1..={}", data.p()))),
        Err(_) => Err(invalid_arg(format!("unknown variable '{token}'"))),
    }
}

fn read_variables(path: &Path, data: &Dataset) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let j =
            resolve_variable(token, data).map_err(|e| e.context(format!("{} line {}", path.display(), line_no + 1)))?;
        if !seen.insert(j) {
            return Err(invalid_arg(format!(
                "{} line {}: duplicate variable '{token}'",
                path.display(),
                line_no + 1
            )));
        }
        out.push(j);
    }
    Ok(out)
}

/// A ranking file lists every covariate exactly once, most important first.
pub fn ingest_external_ranking(path: &Path, data: &Dataset) -> Result<Ranking> {
    let order = read_variables(path, data)?;
    if order.len() != data.p() {
        let missing: Vec<String> = (0..data.p())
            .filter(|j| !order.contains(j))
            .map(|j| data.column_label(j))
            .collect();
        return Err(invalid_arg(format!(
            "{}: ranking is incomplete, missing {}",
            path.display(),
            missing.join(", ")
        )));
    }
    Ranking::new(order, data.p())
}

pub fn ingest_external_subset(path: &Path, data: &Dataset) -> Result<Subset> {
    Subset::new(read_variables(path, data)?, data.p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_small_csv() {
        let f = file("a,y,b\n1,10,2\n3,20,4\n5,30,6\n");
        let d = ingest_csv(f.path(), "y").unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.y(), &[10.0, 20.0, 30.0]);
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.column_names().unwrap(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn rejects_nan_with_position() {
        let f = file("a,b,y\n1,2,3\n4,NaN,6\n");
        match ingest_csv(f.path(), "y").unwrap_err() {
            Error::Ingestion { row, column, .. } => assert_eq!((row, column.as_str()), (2, "b")),
            e => panic!("{e}"),
        }
        let f = file("a,y\n1,\n");
        assert!(matches!(
            ingest_csv(f.path(), "y"),
            Err(Error::Ingestion { row: 1, .. })
        ));
        let f = file("a,y\nx,1\n");
        assert!(matches!(ingest_csv(f.path(), "y"), Err(Error::Ingestion { .. })));
    }

    #[test]
    fn missing_outcome_is_invalid_argument() {
        let f = file("a,b\n1,2\n");
        assert!(matches!(
            ingest_csv(f.path(), "quality"),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn export_then_ingest_is_identity() {
        let d = crate::learners::tests::random_data(40, 3, 9)
            .with_column_names(vec!["u".into(), "v".into(), "w".into()])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        export_csv(&d, "target", &path).unwrap();
        let back = ingest_csv(&path, "target").unwrap();
        assert_eq!(back.x(), d.x());
        assert_eq!(back.y(), d.y());
        assert_eq!(back.column_names(), d.column_names());
    }

    fn named() -> Dataset {
        Dataset::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 7.0]], vec![0.0, 1.0])
            .unwrap()
            .with_column_names(vec!["alcohol".into(), "ph".into(), "sugar".into()])
            .unwrap()
    }

    #[test]
    fn ranking_and_subset_files() {
        let d = named();
        let r = ingest_external_ranking(file("sugar\nalcohol\n2\n").path(), &d).unwrap();
        assert_eq!(r.order(), &[2, 0, 1]);
        let s = ingest_external_subset(file("ph\n\nsugar\n").path(), &d).unwrap();
        assert_eq!(s.indices(), &[1, 2]);
        let err = ingest_external_ranking(file("sugar\nph\nsugar\n").path(), &d).unwrap_err();
        assert!(err.to_string().contains("duplicate variable 'sugar'"), "{err}");
        let err = ingest_external_ranking(file("sugar\nph\n").path(), &d).unwrap_err();
        assert!(err.to_string().contains("incomplete"), "{err}");
        assert!(ingest_external_subset(file("acidity\n").path(), &d).is_err());
        assert!(ingest_external_subset(file("4\n").path(), &d).is_err());
    }
}
