//! In-memory execution of sketch queries and the six evaluation metrics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::sqlgen::{canonical_equal, conds_equal, normalize_value, render, Condition, QueryError, SqlQuery};
use crate::table::{parse_number, Cell, ColumnKind, Table};

/// Result of running a query.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultSet {
    /// Selected cells of the kept rows, for the NULL aggregator.
    Values(Vec<Cell>),
    Scalar(Cell),
    /// SUM, AVG, MIN or MAX over zero kept rows.
    Empty,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExecError {
    #[error("non-numeric aggregate: {agg} over text column {col}")]
    NonNumericAggregate { agg: &'static str, col: usize },
    #[error("invalid query: {0}")]
    Invalid(#[from] QueryError),
    #[error("unknown table id {0:?}")]
    MissingTable(String),
    #[error("{preds} predictions for {golds} gold queries")]
    LengthMismatch { preds: usize, golds: usize },
}

fn cell_text(c: &Cell) -> String {
    normalize_value(&c.to_string())
}

/// Whether a single condition holds for a cell.
pub fn condition_holds(cell: &Cell, cond: &Condition) -> bool {
    let lhs = cell.as_number();
    let rhs = parse_number(&cond.val);
    match cond.op {
        0 => match (lhs, rhs) {
            (Some(a), Some(b)) => a == b,
            _ => cell_text(cell) == normalize_value(&cond.val),
        },
        1 => matches!((lhs, rhs), (Some(a), Some(b)) if a > b),
        2 => matches!((lhs, rhs), (Some(a), Some(b)) if a < b),
        _ => false,
    }
}

pub fn execute(q: &SqlQuery, t: &Table) -> Result<ResultSet, ExecError> {
    q.validate(t.num_columns())?;
    let kept: Vec<&Cell> = t
        .rows
        .iter()
        .filter(|row| q.conds.iter().all(|c| condition_holds(&row[c.col], c)))
        .map(|row| &row[q.sel])
        .collect();
    let text = t.schema.kinds[q.sel] == ColumnKind::Text;
    let numbers = |agg: &'static str| -> Result<Vec<f64>, ExecError> {
        if text {
            return Err(ExecError::NonNumericAggregate { agg, col: q.sel });
        }
        Ok(kept.iter().filter_map(|c| c.as_number()).collect())
    };
    Ok(match q.agg {
        0 => ResultSet::Values(kept.into_iter().cloned().collect()),
        3 => ResultSet::Scalar(Cell::Real(kept.len() as f64)),
        _ if kept.is_empty() => {
            // SUM and AVG still reject text columns when nothing matches.
            if matches!(q.agg, 4 | 5) {
                numbers(if q.agg == 4 { "SUM" } else { "AVG" })?;
            }
            ResultSet::Empty
        }
        4 => ResultSet::Scalar(Cell::Real(numbers("SUM")?.iter().sum())),
        5 => {
            let xs = numbers("AVG")?;
            ResultSet::Scalar(Cell::Real(xs.iter().sum::<f64>() / xs.len() as f64))
        }
        agg => {
            let want_max = agg == 1;
            let best = if text {
                let it = kept.iter().map(|c| c.to_string());
                Cell::Text(if want_max { it.max() } else { it.min() }.expect("non-empty"))
            } else {
                let xs = numbers("MIN/MAX")?;
                let f = if want_max { f64::max } else { f64::min };
                Cell::Real(xs.into_iter().reduce(f).expect("non-empty"))
            };
            ResultSet::Scalar(best)
        }
    })
}

fn numbers_close(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-6 * 1f64.max(x.abs()).max(y.abs())
}

fn cells_equal(a: &Cell, b: &Cell) -> bool {
    match (a.as_number(), b.as_number()) {
        (Some(x), Some(y)) => numbers_close(x, y),
        _ => a.to_string() == b.to_string(),
    }
}

/// Multiset equality with numeric tolerance; EMPTY equals only EMPTY.
pub fn exec_equal(a: &ResultSet, b: &ResultSet) -> bool {
    match (a, b) {
        (ResultSet::Empty, ResultSet::Empty) => true,
        (ResultSet::Scalar(x), ResultSet::Scalar(y)) => cells_equal(x, y),
        (ResultSet::Values(xs), ResultSet::Values(ys)) => {
            if xs.len() != ys.len() {
                return false;
            }
            let mut used = vec![false; ys.len()];
            xs.iter().all(|x| match (0..ys.len()).find(|&j| !used[j] && cells_equal(x, &ys[j])) {
                Some(j) => {
                    used[j] = true;
                    true
                }
                None => false,
            })
        }
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Metrics {
    pub acc_lf: f64,
    pub acc_qm: f64,
    pub acc_ex: f64,
    pub acc_agg: f64,
    pub acc_sel: f64,
    pub acc_where: f64,
    pub n: usize,
}

/// Per-example match flags, in metric order lf, qm, ex, agg, sel, where.
pub fn example_matches(pred: &SqlQuery, gold: &SqlQuery, table: &Table) -> [bool; 6] {
    let lf = render(pred, &table.schema, &table.id) == render(gold, &table.schema, &table.id);
    let ex = match (execute(pred, table), execute(gold, table)) {
        (Ok(p), Ok(g)) => exec_equal(&p, &g),
        _ => false,
    };
    [
        lf,
        canonical_equal(pred, gold),
        ex,
        pred.agg == gold.agg,
        pred.sel == gold.sel,
        conds_equal(&pred.conds, &gold.conds),
    ]
}

/// Metrics over parallel lists of predictions, golds and their table ids.
pub fn evaluate_dataset(
    preds: &[SqlQuery],
    golds: &[SqlQuery],
    table_ids: &[&str],
    tables: &BTreeMap<String, Table>,
) -> Result<Metrics, ExecError> {
    if preds.len() != golds.len() || golds.len() != table_ids.len() {
        return Err(ExecError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    let mut hits = [0usize; 6];
    for ((p, g), id) in preds.iter().zip(golds).zip(table_ids) {
        let t = tables.get(*id).ok_or_else(|| ExecError::MissingTable(id.to_string()))?;
        for (h, m) in hits.iter_mut().zip(example_matches(p, g, t)) {
            *h += m as usize;
        }
    }
    let n = preds.len();
    let rate = |k: usize| if n == 0 { 0.0 } else { hits[k] as f64 / n as f64 };
    Ok(Metrics {
        acc_lf: rate(0),
        acc_qm: rate(1),
        acc_ex: rate(2),
        acc_agg: rate(3),
        acc_sel: rate(4),
        acc_where: rate(5),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::TableSchema;

    fn text(s: &str) -> Cell {
        Cell::Text(s.into())
    }

    fn comic_table() -> Table {
        Table {
            id: "t1".into(),
            schema: TableSchema::new(
                vec!["artist".into(), "issue".into()],
                vec![ColumnKind::Text, ColumnKind::Real],
            ),
            rows: vec![
                vec![text("mort drucker"), Cell::Real(88.5)],
                vec![text("x"), Cell::Real(12.0)],
                vec![text("mort drucker"), Cell::Real(3.0)],
            ],
        }
    }

    fn q(sel: usize, agg: usize, conds: &[(usize, usize, &str)]) -> SqlQuery {
        SqlQuery { sel, agg, conds: conds.iter().map(|&(col, op, v)| Condition { col, op, val: v.into() }).collect() }
    }

    #[test]
    fn count_examples() {
        let mut t = comic_table();
        t.rows = (0..7).map(|i| vec![text("a"), Cell::Real(i as f64)]).collect();
        assert_eq!(execute(&q(0, 3, &[]), &t).unwrap(), ResultSet::Scalar(Cell::Real(7.0)));

        let t = comic_table();
        let r = execute(&q(1, 3, &[(0, 0, "Mort Drucker")]), &t).unwrap();
        assert_eq!(r, ResultSet::Scalar(Cell::Real(2.0)));
        let r = execute(&q(1, 3, &[(0, 0, "nobody")]), &t).unwrap();
        assert_eq!(r, ResultSet::Scalar(Cell::Real(0.0)));
    }

    #[test]
    fn empty_aggregates() {
        let t = comic_table();
        for agg in [1, 2, 4, 5] {
            assert_eq!(execute(&q(1, agg, &[(0, 0, "nobody")]), &t).unwrap(), ResultSet::Empty);
        }
        assert_eq!(execute(&q(1, 0, &[(0, 0, "nobody")]), &t).unwrap(), ResultSet::Values(vec![]));
    }

    #[test]
    fn numeric_aggregates_and_comparisons() {
        let t = comic_table();
        assert_eq!(execute(&q(1, 4, &[]), &t).unwrap(), ResultSet::Scalar(Cell::Real(103.5)));
        assert_eq!(execute(&q(1, 5, &[]), &t).unwrap(), ResultSet::Scalar(Cell::Real(34.5)));
        assert_eq!(execute(&q(1, 1, &[]), &t).unwrap(), ResultSet::Scalar(Cell::Real(88.5)));
        assert_eq!(execute(&q(1, 2, &[(1, 1, "5")]), &t).unwrap(), ResultSet::Scalar(Cell::Real(12.0)));
        assert_eq!(execute(&q(0, 0, &[(1, 2, "12")]), &t).unwrap(), ResultSet::Values(vec![text("mort drucker")]));
        // Non-numeric operands make ordering conditions false.
        assert_eq!(execute(&q(1, 3, &[(0, 1, "a")]), &t).unwrap(), ResultSet::Scalar(Cell::Real(0.0)));
        assert_eq!(execute(&q(1, 3, &[(1, 1, "abc")]), &t).unwrap(), ResultSet::Scalar(Cell::Real(0.0)));
        // "=" compares numerically when both sides parse.
        assert_eq!(execute(&q(0, 3, &[(1, 0, "88.50")]), &t).unwrap(), ResultSet::Scalar(Cell::Real(1.0)));
    }

    #[test]
    fn text_aggregates() {
        let t = comic_table();
        let err = execute(&q(0, 4, &[]), &t).unwrap_err();
        assert!(err.to_string().starts_with("non-numeric aggregate"));
        assert!(execute(&q(0, 5, &[(0, 0, "nobody")]), &t).is_err());
        assert_eq!(execute(&q(0, 1, &[]), &t).unwrap(), ResultSet::Scalar(text("x")));
        assert_eq!(execute(&q(0, 2, &[]), &t).unwrap(), ResultSet::Scalar(text("mort drucker")));
    }

    #[test]
    fn equality_normalizes_whitespace_and_case() {
        let t = comic_table();
        let r = execute(&q(1, 3, &[(0, 0, "  MORT   drucker ")]), &t).unwrap();
        assert_eq!(r, ResultSet::Scalar(Cell::Real(2.0)));
    }

    #[test]
    fn exec_equal_examples() {
        let s = |x: f64| ResultSet::Scalar(Cell::Real(x));
        assert!(exec_equal(&s(3.0), &s(3.0 + 1e-9)));
        assert!(!exec_equal(&s(3.0), &s(3.1)));
        let v = |xs: &[&str]| ResultSet::Values(xs.iter().map(|x| text(x)).collect());
        assert!(!exec_equal(&v(&["a", "a", "b"]), &v(&["a", "b"])));
        assert!(exec_equal(&v(&["a", "b", "a"]), &v(&["a", "a", "b"])));
        assert!(exec_equal(&ResultSet::Empty, &ResultSet::Empty));
        assert!(!exec_equal(&ResultSet::Empty, &v(&[])));
        assert!(!exec_equal(&ResultSet::Empty, &s(0.0)));
    }

    #[test]
    fn dataset_metrics() {
        let t = comic_table();
        let tables = BTreeMap::from([(t.id.clone(), t)]);
        let golds = vec![q(1, 3, &[(0, 0, "mort drucker"), (1, 1, "5")]), q(0, 0, &[])];
        let m = evaluate_dataset(&golds, &golds, &["t1", "t1"], &tables).unwrap();
        assert_eq!((m.acc_lf, m.acc_qm, m.acc_ex, m.acc_agg, m.acc_sel, m.acc_where, m.n), (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2));

        let mut preds = golds.clone();
        preds[0].conds.reverse();
        let m = evaluate_dataset(&preds, &golds, &["t1", "t1"], &tables).unwrap();
        assert_eq!((m.acc_lf, m.acc_qm, m.acc_where, m.acc_ex), (0.5, 1.0, 1.0, 1.0));

        let err = evaluate_dataset(&golds, &golds, &["t1", "nope"], &tables).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn adding_a_condition_never_increases_count() {
        let t = comic_table();
        let base = q(1, 3, &[(1, 1, "1")]);
        let narrowed = q(1, 3, &[(1, 1, "1"), (0, 0, "x")]);
        let count = |r: ResultSet| match r {
            ResultSet::Scalar(Cell::Real(c)) => c,
            _ => unreachable!(),
        };
        assert!(count(execute(&narrowed, &t).unwrap()) <= count(execute(&base, &t).unwrap()));
    }
}
