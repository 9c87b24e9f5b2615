//! Plot-ready CSV with a `#` provenance block above the header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// In-memory CSV: header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    /// File name inside the output directory.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[k].parse().unwrap_or(f64::NAN))
                .collect(),
        )
    }
}

/// Shortest text that parses back to the same f64.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn int(x: impl Into<u64>) -> String {
    x.into().to_string()
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub tool_version: String,
    pub preset: String,
    pub config_digest: String,
    pub seed: u64,
}

pub fn write_csv(dir: &Path, table: &CsvTable, provenance: &Provenance) -> Result<()> {
    let mut file = BufWriter::new(File::create(dir.join(&table.name))?);
    writeln!(file, "# tool: paultrap {}", provenance.tool_version)?;
    writeln!(file, "# preset: {}", provenance.preset)?;
    writeln!(file, "# config_digest: {}", provenance.config_digest)?;
    writeln!(file, "# seed: {}", provenance.seed)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.header).map_err(csv_error)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_csv`], skipping the provenance block.
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error)?;
    let header = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)?;
    Ok(CsvTable {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        header,
        rows,
    })
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// First cell where two tables differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellDifference {
    /// 1-based data row; 0 is the header.
    pub row: usize,
    pub column: String,
    pub expected: String,
    pub actual: String,
}

pub fn first_difference(expected: &CsvTable, actual: &CsvTable) -> Option<CellDifference> {
    let cell = |t: &CsvTable, r: usize, c: usize| -> String {
        if r == 0 {
            t.header.get(c).cloned()
        } else {
            t.rows.get(r - 1).and_then(|row| row.get(c).cloned())
        }
        .unwrap_or_else(|| "<missing>".into())
    };
    let rows = expected.rows.len().max(actual.rows.len());
    let cols = expected.header.len().max(actual.header.len());
    for r in 0..=rows {
        for c in 0..cols {
            let (e, a) = (cell(expected, r, c), cell(actual, r, c));
            if e != a {
                return Some(CellDifference {
                    row: r,
                    column: expected
                        .header
                        .get(c)
                        .or(actual.header.get(c))
                        .cloned()
                        .unwrap_or_default(),
                    expected: e,
                    actual: a,
                });
            }
        }
    }
    None
}
