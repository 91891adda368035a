//! CSV ingestion and output.
//!
//! Layout: a header `source,outcome,<covariate>,...`, `source` is `trial`
//! or `external`, `outcome` is `0` or `1`. A covariate column whose values
//! all parse as finite numbers is numeric; any other column is categorical
//! and is expanded into indicator columns named `<column>=<level>`, one per
//! level in alphabetical order with the first level dropped.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dataset, PatientRecord, Source};

/// Unparsed table: source and outcome already validated, covariates as text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<RawRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    /// 1-based line in the source file (header is row 1).
    pub line: usize,
    pub source: Source,
    pub outcome: bool,
    pub cells: Vec<String>,
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(file)
}

pub fn read_dataset_from<R: Read>(reader: R) -> Result<Dataset> {
    read_raw_table(reader)?.expand()
}

pub fn read_raw_table<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                row: 1,
                column: name.to_owned(),
                message: "required column is missing".into(),
            })
    };
    let (src_col, out_col) = (find("source")?, find("outcome")?);
    let cov_cols: Vec<usize> = (0..header.len()).filter(|i| *i != src_col && *i != out_col).collect();

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: "*".into(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let source = match rec[src_col].to_ascii_lowercase().as_str() {
            "trial" => Source::Trial,
            "external" => Source::External,
            other => {
                return Err(Error::Parse {
                    row: line,
                    column: header[src_col].clone(),
                    message: format!("unknown source label `{other}` (expected trial or external)"),
                })
            }
        };
        let outcome = match &rec[out_col] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    row: line,
                    column: header[out_col].clone(),
                    message: format!("outcome must be 0 or 1, found `{other}`"),
                })
            }
        };
        let mut cells = Vec::with_capacity(cov_cols.len());
        for &c in &cov_cols {
            if rec[c].is_empty() {
                return Err(Error::Parse {
                    row: line,
                    column: header[c].clone(),
                    message: "missing value".into(),
                });
            }
            cells.push(rec[c].to_owned());
        }
        rows.push(RawRow {
            line,
            source,
            outcome,
            cells,
        });
    }
    Ok(RawTable {
        columns: cov_cols.iter().map(|&c| header[c].clone()).collect(),
        rows,
    })
}

enum ColumnKind {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl RawTable {
    /// Type the covariate columns and expand categoricals to indicators.
    pub fn expand(&self) -> Result<Dataset> {
        let mut names = Vec::new();
        let mut kinds = Vec::with_capacity(self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            let parsed: Option<Vec<f64>> = self
                .rows
                .iter()
                .map(|r| r.cells[j].parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            match parsed {
                Some(values) => {
                    names.push(col.clone());
                    kinds.push(ColumnKind::Numeric(values));
                }
                None => {
                    let levels: BTreeSet<&str> = self.rows.iter().map(|r| r.cells[j].as_str()).collect();
                    let kept: Vec<String> = levels.into_iter().skip(1).map(str::to_owned).collect();
                    names.extend(kept.iter().map(|l| format!("{col}={l}")));
                    kinds.push(ColumnKind::Categorical(kept));
                }
            }
        }

        let records = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut x = Vec::with_capacity(names.len());
                for (j, kind) in kinds.iter().enumerate() {
                    match kind {
                        ColumnKind::Numeric(values) => x.push(values[i]),
                        ColumnKind::Categorical(levels) => {
                            x.extend(levels.iter().map(|l| f64::from(u8::from(r.cells[j] == *l))))
                        }
                    }
                }
                PatientRecord::new(r.source, r.outcome, x)
            })
            .collect();
        Dataset::new(names, records)
    }
}

/// Serialize a (numeric) dataset; reading the result back gives the same
/// dataset.
pub fn write_dataset_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["source".to_owned(), "outcome".to_owned()];
    header.extend(data.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for r in data.records() {
        let mut row = vec![r.source.label().to_owned(), u8::from(r.outcome).to_string()];
        row.extend(r.covariates.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset_to(data, &mut buf)?;
    write_atomic(path, &buf)
}

/// Write `bytes` to a temporary file next to `path`, then rename it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
