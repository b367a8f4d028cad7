use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Text,
    Real,
}

/// Column names and value kinds of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSchema {
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
}

impl TableSchema {
    pub fn new(columns: Vec<String>, kinds: Vec<ColumnKind>) -> Self {
        assert_eq!(columns.len(), kinds.len());
        Self { columns, kinds }
    }

    /// Schema with every column of kind text.
    pub fn text_columns<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let columns: Vec<String> = names.into_iter().map(Into::into).collect();
        let kinds = vec![ColumnKind::Text; columns.len()];
        Self { columns, kinds }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Real(f64),
}

impl Cell {
    /// Numeric reading of the cell, if it has one.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Text(s) => parse_number(s),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Text(s) => f.write_str(s),
            Cell::Real(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub id: String,
    pub schema: TableSchema,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn num_columns(&self) -> usize {
        self.schema.len()
    }
}

/// Parses plain decimal literals (optional sign, digits, optional fraction).
/// Exponents, `inf` and `nan` are not numbers here.
pub fn parse_number(s: &str) -> Option<f64> {
    let t = s.trim();
    let body = t.strip_prefix(['-', '+']).unwrap_or(t);
    if body.is_empty() {
        return None;
    }
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |p: &str| p.chars().all(|c| c.is_ascii_digit());
    let ok = match frac {
        None => !int.is_empty() && digits(int),
        Some(fr) => digits(int) && digits(fr) && !(int.is_empty() && fr.is_empty()),
    };
    if !ok {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}
