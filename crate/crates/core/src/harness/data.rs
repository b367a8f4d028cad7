//! JSON-lines examples and tables, embedding and gazetteer files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::encoder::{EmbeddingStore, EncoderError};
use crate::sqlgen::{QueryError, SqlQuery};
use crate::table::{parse_number, Cell, ColumnKind, Table, TableSchema};
use crate::typerec::{Gazetteer, TypeRecError};

/// One question with its table and gold query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub question: String,
    pub table_id: String,
    #[serde(rename = "sql")]
    pub gold: SqlQuery,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}:{line}: {msg}")]
    Line { file: String, line: usize, msg: String },
    #[error("{file}:{line}: unknown table id {id:?}")]
    DanglingTable { file: String, line: usize, id: String },
    #[error("expected 1 or 2 embedding files, got {0}")]
    EmbeddingCount(usize),
    #[error(transparent)]
    Embedding(#[from] EncoderError),
    #[error("{path}: {source}")]
    Gazetteer { path: String, source: TypeRecError },
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

/// Non-empty lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    id: String,
    header: Vec<String>,
    types: Vec<ColumnKind>,
    rows: Vec<Vec<Value>>,
}

fn table_from_raw(raw: RawTable) -> Result<Table, String> {
    if raw.header.len() != raw.types.len() {
        return Err(format!("{} header names but {} types", raw.header.len(), raw.types.len()));
    }
    if raw.header.is_empty() {
        return Err("table has no columns".into());
    }
    let mut rows = Vec::with_capacity(raw.rows.len());
    for (r, row) in raw.rows.into_iter().enumerate() {
        if row.len() != raw.header.len() {
            return Err(format!("row {r} has {} cells for {} columns", row.len(), raw.header.len()));
        }
        let cells = row
            .into_iter()
            .zip(&raw.types)
            .map(|(v, kind)| {
                let text = match v {
                    Value::String(s) => s,
                    Value::Number(n) => n.to_string(),
                    other => return Err(format!("row {r}: unsupported cell {other}")),
                };
                match kind {
                    ColumnKind::Text => Ok(Cell::Text(text)),
                    ColumnKind::Real => parse_number(&text)
                        .map(Cell::Real)
                        .ok_or_else(|| format!("row {r}: {text:?} is not a number in a real column")),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(cells);
    }
    Ok(Table { id: raw.id, schema: TableSchema::new(raw.header, raw.types), rows })
}

pub fn parse_tables(text: &str, file: &str) -> Result<BTreeMap<String, Table>, DataError> {
    let mut out = BTreeMap::new();
    for (line, l) in lines(text) {
        let err = |msg: String| DataError::Line { file: file.to_string(), line, msg };
        let raw: RawTable = serde_json::from_str(l).map_err(|e| err(e.to_string()))?;
        let t = table_from_raw(raw).map_err(err)?;
        if out.contains_key(&t.id) {
            return Err(err(format!("duplicate table id {:?}", t.id)));
        }
        out.insert(t.id.clone(), t);
    }
    Ok(out)
}

/// Examples checked against their tables; codes and column indices are
/// validated per line.
pub fn parse_examples(text: &str, file: &str, tables: &BTreeMap<String, Table>) -> Result<Vec<Example>, DataError> {
    let mut out = Vec::new();
    for (line, l) in lines(text) {
        let err = |msg: String| DataError::Line { file: file.to_string(), line, msg };
        let ex: Example = serde_json::from_str(l).map_err(|e| err(e.to_string()))?;
        let t = tables
            .get(&ex.table_id)
            .ok_or_else(|| DataError::DanglingTable { file: file.to_string(), line, id: ex.table_id.clone() })?;
        ex.gold.validate(t.num_columns()).map_err(|e: QueryError| err(e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn load_tables(path: &Path) -> Result<BTreeMap<String, Table>, DataError> {
    parse_tables(&read(path)?, &path.display().to_string())
}

pub fn load_dataset(examples: &Path, tables: &Path) -> Result<(Vec<Example>, BTreeMap<String, Table>), DataError> {
    let tables = load_tables(tables)?;
    let examples = parse_examples(&read(examples)?, &examples.display().to_string(), &tables)?;
    Ok((examples, tables))
}

fn table_json(t: &Table) -> Value {
    let rows: Vec<Value> = t
        .rows
        .iter()
        .map(|row| {
            Value::Array(
                row.iter()
                    .map(|c| match c {
                        Cell::Text(s) => Value::String(s.clone()),
                        Cell::Real(v) if v.fract() == 0.0 && v.abs() < 1e15 => Value::from(*v as i64),
                        Cell::Real(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
                    })
                    .collect(),
            )
        })
        .collect();
    serde_json::json!({ "id": t.id, "header": t.schema.columns, "types": t.schema.kinds, "rows": rows })
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: path.display().to_string(), source };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for l in lines {
        writeln!(f, "{l}").map_err(io)?;
    }
    f.flush().map_err(io)
}

pub fn write_tables<'a>(path: &Path, tables: impl IntoIterator<Item = &'a Table>) -> Result<(), DataError> {
    write_lines(path, tables.into_iter().map(|t| table_json(t).to_string()))
}

pub fn write_examples(path: &Path, examples: &[Example]) -> Result<(), DataError> {
    write_lines(path, examples.iter().map(|e| serde_json::to_string(e).expect("examples serialize")))
}

/// One file, or two files concatenated per token.
pub fn load_embeddings(paths: &[PathBuf]) -> Result<EmbeddingStore, DataError> {
    match paths {
        [a] => Ok(EmbeddingStore::load(a)?),
        [a, b] => Ok(EmbeddingStore::concat(&EmbeddingStore::load(a)?, &EmbeddingStore::load(b)?)),
        _ => Err(DataError::EmbeddingCount(paths.len())),
    }
}

pub fn load_gazetteer(path: &Path) -> Result<Gazetteer, DataError> {
    Gazetteer::parse_tsv(&read(path)?).map_err(|source| DataError::Gazetteer { path: path.display().to_string(), source })
}
