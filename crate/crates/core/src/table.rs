//! Typed relational tables and CSV ingestion.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Integer,
    Float,
    Text,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Integer | ColumnType::Float)
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Integer => "integer",
            ColumnType::Float => "float",
            ColumnType::Text => "text",
        })
    }
}

/// A cell value. Tables never hold `Null`; it only appears in query output
/// (aggregates over zero rows).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn column_type(&self) -> Option<ColumnType> {
        match self {
            Value::Null => None,
            Value::Integer(_) => Some(ColumnType::Integer),
            Value::Float(_) => Some(ColumnType::Float),
            Value::Text(_) => Some(ColumnType::Text),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Integer(i) => Some(i as f64),
            Value::Float(x) => Some(x),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Integer(_) => 1,
            Value::Float(_) => 2,
            Value::Text(_) => 3,
        }
    }
}

// Total order used for canonical sorting and grouping: by variant first,
// floats by `total_cmp`. Predicate comparisons use their own numeric rules.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Self { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Self {
        Self { columns }
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("row {row}: expected {expected} values, found {found}")]
    Arity { row: usize, expected: usize, found: usize },
    #[error("row {row}, column `{column}`: expected {expected}, found {found:?}")]
    Type { row: usize, column: String, expected: ColumnType, found: String },
    #[error("row {row}, column `{column}`: missing value")]
    Missing { row: usize, column: String },
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("CSV header {found:?} does not match schema columns {expected:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl Table {
    /// Build a table, checking arity, types and finiteness of every row.
    pub fn new(name: impl Into<String>, schema: Schema, rows: Vec<Row>) -> Result<Self, TableError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &schema.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, i, row)?;
        }
        Ok(Self { name: name.into(), schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parse CSV text with a header row whose names must equal the schema's.
    pub fn from_csv_str(name: &str, schema: Schema, text: &str) -> Result<Self, TableError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let io = |e: csv::Error| TableError::Io { path: name.to_string(), message: e.to_string() };
        let header: Vec<String> = reader.headers().map_err(io)?.iter().map(|h| h.trim().to_string()).collect();
        let expected: Vec<String> = schema.columns.iter().map(|c| c.name.clone()).collect();
        if header != expected {
            return Err(TableError::Header { expected, found: header });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(io)?;
            if record.len() != schema.arity() {
                return Err(TableError::Arity { row: i, expected: schema.arity(), found: record.len() });
            }
            let row = record
                .iter()
                .zip(&schema.columns)
                .map(|(field, col)| parse_field(field, col, i))
                .collect::<Result<Row, _>>()?;
            rows.push(row);
        }
        Table::new(name, schema, rows)
    }

    /// Load `csv_path` with the column types from the JSON `schema_path`.
    /// The table is named after the CSV file stem unless the schema names it.
    pub fn load(csv_path: &Path, schema_path: &Path) -> Result<Self, TableError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| TableError::Io { path: p.display().to_string(), message: e.to_string() })
        };
        let schema_file: SchemaFile = serde_json::from_str(&read(schema_path)?).map_err(|e| TableError::Io {
            path: schema_path.display().to_string(),
            message: e.to_string(),
        })?;
        let name = schema_file.name.unwrap_or_else(|| {
            csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "t".into())
        });
        let text = read(csv_path)?;
        Table::from_csv_str(&name, Schema::new(schema_file.columns), &text).map_err(|e| match e {
            TableError::Io { message, .. } => TableError::Io { path: csv_path.display().to_string(), message },
            other => other,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str())).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Sidecar schema file: `{"name": "t", "columns": [{"name": "id", "type": "integer"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    #[serde(default)]
    pub name: Option<String>,
    pub columns: Vec<Column>,
}

fn parse_field(field: &str, col: &Column, row: usize) -> Result<Value, TableError> {
    if field.is_empty() {
        return Err(TableError::Missing { row, column: col.name.clone() });
    }
    let bad = || TableError::Type { row, column: col.name.clone(), expected: col.ty, found: field.to_string() };
    match col.ty {
        ColumnType::Integer => field.trim().parse().map(Value::Integer).map_err(|_| bad()),
        ColumnType::Float => match field.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Float(x)),
            _ => Err(bad()),
        },
        ColumnType::Text => Ok(Value::Text(field.to_string())),
    }
}

fn check_row(schema: &Schema, i: usize, row: &Row) -> Result<(), TableError> {
    if row.len() != schema.arity() {
        return Err(TableError::Arity { row: i, expected: schema.arity(), found: row.len() });
    }
    for (v, col) in row.iter().zip(&schema.columns) {
        let ok = match v {
            Value::Float(x) => col.ty == ColumnType::Float && x.is_finite(),
            Value::Null => false,
            other => other.column_type() == Some(col.ty),
        };
        if !ok {
            return Err(TableError::Type {
                row: i,
                column: col.name.clone(),
                expected: col.ty,
                found: format!("{v:?}"),
            });
        }
    }
    Ok(())
}

/// A set of named tables.
pub type Database = BTreeMap<String, Table>;

pub fn database(tables: impl IntoIterator<Item = Table>) -> Database {
    tables.into_iter().map(|t| (t.name.clone(), t)).collect()
}
