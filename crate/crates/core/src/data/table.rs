use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::Dataset;
use crate::error::{Error, Result};

/// A fully numeric delimited table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Which columns form a [`Dataset`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableSchema {
    pub target: String,
    /// `None` means every column other than the target.
    pub features: Option<Vec<String>>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Tab for `.tsv`/`.tab` files, comma otherwise.
pub fn default_delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    }
}

impl Table {
    pub fn read(path: &Path, delimiter: Option<u8>) -> Result<Self> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        Self::from_reader(file, delimiter.unwrap_or_else(|| default_delimiter(path)), &path.display().to_string())
    }

    pub fn from_reader<R: std::io::Read>(reader: R, delimiter: u8, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let format_err = |message: String| Error::Format {
            path: source.to_string(),
            message,
        };
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| format_err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(format_err("missing header row".into()));
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            // 1-based data row numbers, header excluded
            let row = i + 1;
            let record = record.map_err(|e| match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format_err(format!("row {row}: expected {expected_len} fields, found {len}"))
                }
                _ => format_err(format!("row {row}: {e}")),
            })?;
            let mut values = Vec::with_capacity(headers.len());
            for (cell, name) in record.iter().zip(&headers) {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: name.clone(),
                    message: format!("not a number: {cell:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: name.clone(),
                        message: format!("non-finite value {cell:?}"),
                    });
                }
                values.push(v);
            }
            rows.push(values);
        }
        Ok(Self { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::MissingColumns(vec![name.to_string()]))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Indices of `names`, or every missing name in one error.
    pub fn indices(&self, names: &[String]) -> Result<Vec<usize>> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| self.column_index(n).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        Ok(names.iter().filter_map(|n| self.column_index(n)).collect())
    }

    pub fn matrix(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx = self.indices(names)?;
        Ok(DMatrix::from_fn(self.rows.len(), idx.len(), |i, j| self.rows[i][idx[j]]))
    }

    pub fn dataset(&self, schema: &TableSchema) -> Result<Dataset> {
        let features = match &schema.features {
            Some(f) => f.clone(),
            None => self.headers.iter().filter(|h| **h != schema.target).cloned().collect(),
        };
        let mut wanted = features.clone();
        wanted.push(schema.target.clone());
        self.indices(&wanted)?;
        if features.is_empty() {
            return Err(Error::config("no feature columns selected"));
        }
        let x = self.matrix(&features)?;
        let y = DVector::from_vec(self.column(&schema.target)?);
        Ok(Dataset {
            x,
            y,
            feature_names: features,
            target_name: schema.target.clone(),
        })
    }

    /// Table from a dataset, target as the last column.
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut headers = data.feature_names.clone();
        headers.push(data.target_name.clone());
        let rows = (0..data.len())
            .map(|i| {
                let mut r: Vec<f64> = data.x.row(i).iter().copied().collect();
                r.push(data.y[i]);
                r
            })
            .collect();
        Self { headers, rows }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_table(path, &self.headers, &self.rows)
    }
}

/// Writes a header and rows with shortest round-trip float formatting.
pub fn write_table<S: AsRef<str>>(path: &Path, headers: &[S], rows: &[Vec<f64>]) -> Result<()> {
    let delimiter = default_delimiter(path);
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(file);
    let csv_err = |e: csv::Error| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(headers.iter().map(|h| h.as_ref())).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
