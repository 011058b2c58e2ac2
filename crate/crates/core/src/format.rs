//! Generator file formats.
//!
//! JSON: `{"n": 3, "labels": ["a", "b", "c"], "q": [[...], ...], "convention": "column"}`
//! with `q` given row by row. `labels` and `convention` are optional.
//!
//! CSV: `n` lines of `n` comma-separated floats. Blank lines and lines
//! starting with `#` are ignored.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::{validate_generator, Convention, GeneratorMatrix, MarkovError};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("CSV error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub q: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
}

fn rows_to_matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        return Err(FormatError::Shape(format!("expected {n} rows, found {}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(FormatError::Shape(format!(
                "row {} has {} entries, expected {n}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Parses the JSON format. The file's own `convention` wins over `fallback`.
pub fn parse_json(text: &str, fallback: Convention) -> Result<GeneratorMatrix> {
    let file: MatrixFile = serde_json::from_str(text).map_err(|e| FormatError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let raw = rows_to_matrix(&file.q, file.n)?;
    let q = validate_generator(raw, file.convention.unwrap_or(fallback))?;
    Ok(match file.labels {
        Some(labels) => q.with_labels(labels)?,
        None => q,
    })
}

/// Parses the CSV format.
pub fn parse_csv(text: &str, convention: Convention) -> Result<GeneratorMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| FormatError::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.parse::<f64>().map_err(|_| FormatError::Csv {
                    line,
                    message: format!("field {} is not a number: {field:?}", c + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(FormatError::Shape("no rows".into()));
    }
    let n = rows.len();
    validate_generator(rows_to_matrix(&rows, n)?, convention).map_err(Into::into)
}

/// Reads a generator, choosing the format by extension (`.json`, `.csv`)
/// or, failing that, by whether the content starts with `{`.
pub fn read_generator(path: &Path, convention: Convention) -> Result<GeneratorMatrix> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("json") => parse_json(&text, convention),
        Some("csv") => parse_csv(&text, convention),
        _ if text.trim_start().starts_with('{') => parse_json(&text, convention),
        _ => parse_csv(&text, convention),
    }
}

/// The JSON form of a generator, always in the column convention.
pub fn to_matrix_file(q: &GeneratorMatrix) -> MatrixFile {
    let r = q.rates();
    MatrixFile {
        n: q.n(),
        labels: Some(q.labels().to_vec()),
        q: (0..q.n()).map(|i| r.row(i).iter().copied().collect()).collect(),
        convention: Some(Convention::Column),
    }
}

pub fn to_json(q: &GeneratorMatrix) -> String {
    serde_json::to_string_pretty(&to_matrix_file(q)).expect("plain data serializes")
}
