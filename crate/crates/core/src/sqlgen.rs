//! Sketch queries: assembly from slot predictions, rendering, and canonical
//! equality.

use serde::{Deserialize, Deserializer, Serialize};

use crate::slots::{SlotPrediction, AGG_NAMES, MAX_CONDS, OP_SYMBOLS};
use crate::table::TableSchema;

/// One `column op value` predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub col: usize,
    pub op: usize,
    pub val: String,
}

/// `SELECT agg(sel) WHERE cond AND cond ...`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlQuery {
    pub sel: usize,
    pub agg: usize,
    pub conds: Vec<Condition>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum QueryError {
    #[error("aggregator code {0} out of range 0..=5")]
    Agg(usize),
    #[error("operator code {0} out of range 0..=2")]
    Op(usize),
    #[error("column {col} out of range for {columns} columns")]
    Column { col: usize, columns: usize },
    #[error("{0} conditions exceed the maximum of 4")]
    TooManyConditions(usize),
}

impl SqlQuery {
    /// Checks codes, column indices and the condition limit.
    pub fn validate(&self, num_columns: usize) -> Result<(), QueryError> {
        if self.agg >= AGG_NAMES.len() {
            return Err(QueryError::Agg(self.agg));
        }
        if self.conds.len() > MAX_CONDS {
            return Err(QueryError::TooManyConditions(self.conds.len()));
        }
        for col in std::iter::once(self.sel).chain(self.conds.iter().map(|c| c.col)) {
            if col >= num_columns {
                return Err(QueryError::Column { col, columns: num_columns });
            }
        }
        if let Some(c) = self.conds.iter().find(|c| c.op >= OP_SYMBOLS.len()) {
            return Err(QueryError::Op(c.op));
        }
        Ok(())
    }
}

// Conditions are `[col, op, value]` triples; the value may be a JSON string
// or number.
impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Value {
            Str(String),
            Num(serde_json::Number),
        }
        let (col, op, val): (usize, usize, Value) = Deserialize::deserialize(d)?;
        let val = match val {
            Value::Str(s) => s,
            Value::Num(n) => n.to_string(),
        };
        Ok(Condition { col, op, val })
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.col, self.op, &self.val).serialize(s)
    }
}

/// Joins tokens with spaces, without a space before punctuation tokens.
pub fn detokenize(tokens: &[&str]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let punct = t.chars().all(|c| !c.is_alphanumeric());
        if i > 0 && !punct {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Builds the query from slot outputs. Repeated condition columns keep their
/// first occurrence; the second value is the number dropped.
pub fn assemble(pred: &SlotPrediction, tokens: &[String]) -> (SqlQuery, usize) {
    let mut conds: Vec<Condition> = Vec::new();
    let mut dropped = 0;
    for ((&col, &op), span) in pred.cond_cols.iter().zip(&pred.cond_ops).zip(&pred.cond_val_spans) {
        if conds.iter().any(|c| c.col == col) || conds.len() == MAX_CONDS {
            dropped += 1;
            continue;
        }
        let words: Vec<&str> = span.iter().filter_map(|&i| tokens.get(i).map(String::as_str)).collect();
        conds.push(Condition { col, op, val: detokenize(&words) });
    }
    (SqlQuery { sel: pred.select_col, agg: pred.agg, conds }, dropped)
}

/// Fixed string form used for exact logical-form matching.
pub fn render(q: &SqlQuery, schema: &TableSchema, table_id: &str) -> String {
    let col = |i: usize| schema.columns.get(i).map_or("?", String::as_str);
    let mut s = if q.agg == 0 {
        format!("SELECT {} FROM {table_id}", col(q.sel))
    } else {
        format!("SELECT {}({}) FROM {table_id}", AGG_NAMES[q.agg], col(q.sel))
    };
    for (i, c) in q.conds.iter().enumerate() {
        s.push_str(if i == 0 { " WHERE " } else { " AND " });
        s.push_str(&format!("{} {} {}", col(c.col), OP_SYMBOLS[c.op], c.val));
    }
    s
}

/// Lowercased, trimmed, internal whitespace collapsed.
pub fn normalize_value(v: &str) -> String {
    v.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn canonical_conds(conds: &[Condition]) -> Vec<(usize, usize, String)> {
    let mut v: Vec<_> = conds.iter().map(|c| (c.col, c.op, normalize_value(&c.val))).collect();
    v.sort();
    v
}

/// Condition multisets equal under value normalization.
pub fn conds_equal(a: &[Condition], b: &[Condition]) -> bool {
    a.len() == b.len() && canonical_conds(a) == canonical_conds(b)
}

/// Same aggregator, same select column, same condition multiset.
pub fn canonical_equal(a: &SqlQuery, b: &SqlQuery) -> bool {
    a.agg == b.agg && a.sel == b.sel && conds_equal(&a.conds, &b.conds)
}
