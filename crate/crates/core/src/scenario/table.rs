//! Sweep results and their CSV / JSON-lines serialization.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "jsonl" => Some(Format::Jsonl),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

/// One output record. Cells are `None` where a value could not be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cells: Vec<Option<f64>>,
    pub error_code: Option<String>,
}

impl Row {
    /// Non-finite cells are blanked and flagged `non_finite` unless the row
    /// already carries an error.
    pub fn new(cells: Vec<Option<f64>>, error_code: Option<String>) -> Self {
        let mut error_code = error_code;
        let cells = cells
            .into_iter()
            .map(|c| match c {
                Some(v) if !v.is_finite() => {
                    error_code.get_or_insert_with(|| "non_finite".to_string());
                    None
                }
                other => other,
            })
            .collect();
        Row { cells, error_code }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// Numeric column names; `error_code` is appended on output.
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub provenance: Vec<(String, String)>,
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-5, 1e16)` so that tiny and huge values stay compact.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_control() { ' ' } else { c }).collect()
}

pub fn write_table<W: Write>(table: &ResultTable, out: W, format: Format) -> io::Result<()> {
    match format {
        Format::Csv => write_csv(table, out),
        Format::Jsonl => write_jsonl(table, out),
    }
}

fn write_csv<W: Write>(table: &ResultTable, mut out: W) -> io::Result<()> {
    for (k, v) in &table.provenance {
        write!(out, "# {}: {}\r\n", sanitize(k), sanitize(v))?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    let header = table.columns.iter().map(String::as_str).chain(["error_code"]);
    w.write_record(header)?;
    for row in &table.rows {
        let cells = row
            .cells
            .iter()
            .map(|c| c.map(format_number).unwrap_or_default())
            .chain([row.error_code.clone().unwrap_or_default()]);
        w.write_record(cells)?;
    }
    w.flush()
}

fn write_jsonl<W: Write>(table: &ResultTable, mut out: W) -> io::Result<()> {
    let q = |s: &str| serde_json::to_string(s).expect("string serialization cannot fail");
    let provenance: Vec<String> = table
        .provenance
        .iter()
        .map(|(k, v)| format!("{}:{}", q(k), q(v)))
        .collect();
    let columns: Vec<String> = table.columns.iter().map(|c| q(c)).collect();
    writeln!(
        out,
        "{{\"provenance\":{{{}}},\"columns\":[{}]}}",
        provenance.join(","),
        columns.join(",")
    )?;
    for row in &table.rows {
        let mut fields: Vec<String> = table
            .columns
            .iter()
            .zip(&row.cells)
            .map(|(c, v)| format!("{}:{}", q(c), v.map(format_number).unwrap_or_else(|| "null".into())))
            .collect();
        fields.push(format!(
            "\"error_code\":{}",
            row.error_code.as_deref().map(q).unwrap_or_else(|| "null".into())
        ));
        writeln!(out, "{{{}}}", fields.join(","))?;
    }
    out.flush()
}

/// Writes `table` to `path`, replacing any existing file.
pub fn emit(table: &ResultTable, path: &Path, format: Format) -> Result<(), ScenarioError> {
    let io_err = |e: io::Error| ScenarioError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_table(table, &mut w, format).map_err(io_err)?;
    w.flush().map_err(io_err)
}
