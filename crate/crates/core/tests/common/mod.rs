//! Fuzz generators and a naive reference interpreter shared by the
//! integration tests. The interpreter is written without any of the
//! library's comparison or parsing helpers.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sketchsql::sqlgen::{Condition, SqlQuery};
use sketchsql::table::{Cell, ColumnKind, Table, TableSchema};

const WORDS: &[&str] = &["alpha", "Alpha", "beta", "BETA ", "gamma  ray", "gamma ray", "3", "3.0", " 7 ", "-2", "x1", ".5"];

pub fn fuzz_table(rng: &mut ChaCha8Rng, id: &str) -> Table {
    let cols = rng.gen_range(1..=5);
    let kinds: Vec<ColumnKind> =
        (0..cols).map(|_| if rng.gen_bool(0.5) { ColumnKind::Real } else { ColumnKind::Text }).collect();
    let rows = rng.gen_range(0..=20);
    let data = (0..rows)
        .map(|_| {
            kinds
                .iter()
                .map(|k| match k {
                    ColumnKind::Real => Cell::Real(rng.gen_range(-6..=6) as f64 * 0.5),
                    ColumnKind::Text => Cell::Text(WORDS.choose(rng).unwrap().to_string()),
                })
                .collect()
        })
        .collect();
    let names = (0..cols).map(|i| format!("col {i}")).collect();
    Table { id: id.to_string(), schema: TableSchema::new(names, kinds), rows: data }
}

fn fuzz_value(rng: &mut ChaCha8Rng, t: &Table, col: usize) -> String {
    let from_cell = !t.rows.is_empty() && rng.gen_bool(0.6);
    let base = if from_cell {
        t.rows[rng.gen_range(0..t.rows.len())][col].to_string()
    } else if rng.gen_bool(0.5) {
        format!("{}", rng.gen_range(-6..=6) as f64 * 0.5)
    } else {
        WORDS.choose(rng).unwrap().to_string()
    };
    match rng.gen_range(0..3) {
        0 => base.to_uppercase(),
        1 => format!("  {base} "),
        _ => base,
    }
}

pub fn fuzz_query(rng: &mut ChaCha8Rng, t: &Table) -> SqlQuery {
    let n = t.num_columns();
    let k = rng.gen_range(0..=4);
    let conds = (0..k)
        .map(|_| {
            let col = rng.gen_range(0..n);
            Condition { col, op: rng.gen_range(0..3), val: fuzz_value(rng, t, col) }
        })
        .collect();
    SqlQuery { sel: rng.gen_range(0..n), agg: rng.gen_range(0..6), conds }
}

/// Reference results, compared exactly against the library's.
#[derive(Debug, Clone, PartialEq)]
pub enum RefResult {
    Values(Vec<Cell>),
    Scalar(Cell),
    Empty,
    NonNumeric,
}

fn ref_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let digits = s.strip_prefix('-').or_else(|| s.strip_prefix('+')).unwrap_or(s);
    let mut seen_digit = false;
    let mut dots = 0;
    for ch in digits.chars() {
        match ch {
            '0'..='9' => seen_digit = true,
            '.' => dots += 1,
            _ => return None,
        }
    }
    if !seen_digit || dots > 1 {
        return None;
    }
    s.parse().ok()
}

fn ref_text(s: &str) -> String {
    let mut out = String::new();
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

fn ref_cell_number(c: &Cell) -> Option<f64> {
    match c {
        Cell::Real(v) => Some(*v),
        Cell::Text(s) => ref_number(s),
    }
}

fn ref_cell_string(c: &Cell) -> String {
    match c {
        Cell::Real(v) => format!("{v}"),
        Cell::Text(s) => s.clone(),
    }
}

pub fn reference_execute(q: &SqlQuery, t: &Table) -> RefResult {
    let mut kept = Vec::new();
    for row in &t.rows {
        let mut ok = true;
        for c in &q.conds {
            let cell = &row[c.col];
            let a = ref_cell_number(cell);
            let b = ref_number(&c.val);
            let holds = if c.op == 0 {
                if a.is_some() && b.is_some() {
                    a.unwrap() == b.unwrap()
                } else {
                    ref_text(&ref_cell_string(cell)) == ref_text(&c.val)
                }
            } else if a.is_none() || b.is_none() {
                false
            } else if c.op == 1 {
                a.unwrap() > b.unwrap()
            } else {
                a.unwrap() < b.unwrap()
            };
            if !holds {
                ok = false;
            }
        }
        if ok {
            kept.push(row[q.sel].clone());
        }
    }
    let is_text = t.schema.kinds[q.sel] == ColumnKind::Text;
    match q.agg {
        0 => RefResult::Values(kept),
        3 => RefResult::Scalar(Cell::Real(kept.len() as f64)),
        4 | 5 if is_text => RefResult::NonNumeric,
        _ if kept.is_empty() => RefResult::Empty,
        4 | 5 => {
            let mut sum = 0.0;
            for c in &kept {
                sum += ref_cell_number(c).unwrap();
            }
            if q.agg == 4 {
                RefResult::Scalar(Cell::Real(sum))
            } else {
                RefResult::Scalar(Cell::Real(sum / kept.len() as f64))
            }
        }
        agg => {
            let mut best = kept[0].clone();
            for c in &kept[1..] {
                let better = if is_text {
                    let (x, y) = (ref_cell_string(c), ref_cell_string(&best));
                    if agg == 1 { x > y } else { x < y }
                } else {
                    let (x, y) = (ref_cell_number(c).unwrap(), ref_cell_number(&best).unwrap());
                    if agg == 1 { x > y } else { x < y }
                };
                if better {
                    best = c.clone();
                }
            }
            RefResult::Scalar(best)
        }
    }
}
