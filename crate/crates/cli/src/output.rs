use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use ncycle_core::fmt::format_sig;
use serde_json::{Map, Value};

use crate::CliError;

pub const DEFAULT_PRECISION: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" | "jsonl" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}' (expected csv or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Where and how a command writes its result.
#[derive(Debug, Clone)]
pub struct OutputSpec {
    pub format: Format,
    /// `None` writes to standard output.
    pub path: Option<PathBuf>,
    /// Significant digits for CSV floats.
    pub precision: usize,
}

impl OutputSpec {
    pub fn new(format: Format, path: Option<PathBuf>, precision: usize) -> Result<Self, CliError> {
        if !(1..=17).contains(&precision) {
            return Err(CliError::Usage(format!("precision must be in 1..=17, got {precision}")));
        }
        Ok(Self { format, path, precision })
    }

    pub fn emit(&self, doc: &Document) -> Result<(), CliError> {
        let text = doc.render(self.format, self.precision);
        match &self.path {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display()))),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::Internal(format!("cannot write to stdout: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self, precision: usize) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_sig(*x, precision),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            // Non-finite floats become null.
            Cell::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A command result: CSV rows plus its JSON form.
///
/// Without an explicit JSON body each row becomes one JSON Lines object keyed
/// by the header.
#[derive(Debug, Clone)]
pub struct Document {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub json: Option<Vec<Value>>,
}

impl Document {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new(), json: None }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn with_json(mut self, json: Vec<Value>) -> Self {
        self.json = Some(json);
        self
    }

    pub fn render(&self, format: Format, precision: usize) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str(&self.header.join(","));
                out.push('\n');
                for row in &self.rows {
                    let fields: Vec<String> = row.iter().map(|c| c.csv(precision)).collect();
                    out.push_str(&fields.join(","));
                    out.push('\n');
                }
            }
            Format::Json => {
                let lines: Vec<Value> = match &self.json {
                    Some(values) => values.clone(),
                    None => self.rows.iter().map(|r| self.row_object(r)).collect(),
                };
                for v in lines {
                    out.push_str(&v.to_string());
                    out.push('\n');
                }
            }
        }
        out
    }

    fn row_object(&self, row: &[Cell]) -> Value {
        let map: Map<String, Value> =
            self.header.iter().zip(row).map(|(k, c)| (k.to_string(), c.json())).collect();
        Value::Object(map)
    }
}
