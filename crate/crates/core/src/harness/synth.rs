//! Template-generated toy corpus: small schemas, questions with gold queries,
//! random word vectors and a matching gazetteer.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::EmbeddingStore;
use crate::sqlgen::{Condition, SqlQuery};
use crate::table::{Cell, ColumnKind, Table, TableSchema};
use crate::typerec::{tokenize, EntityKind, Gazetteer};

use super::data::{write_examples, write_tables, DataError, Example};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fill {
    Person,
    Country,
    /// One or two made-up words.
    Name,
    Number(i64, i64),
}

const SCHEMAS: &[&[(&str, Fill)]] = &[
    &[("player", Fill::Person), ("team", Fill::Name), ("position", Fill::Name), ("goals", Fill::Number(0, 40)), ("season", Fill::Number(1990, 2020))],
    &[("film title", Fill::Name), ("director", Fill::Person), ("genre", Fill::Name), ("year", Fill::Number(1950, 2015)), ("budget", Fill::Number(1, 300))],
    &[("city", Fill::Name), ("country", Fill::Country), ("population", Fill::Number(1000, 90000)), ("area", Fill::Number(10, 900))],
    &[("district", Fill::Name), ("incumbent", Fill::Person), ("party", Fill::Name), ("first elected", Fill::Number(1960, 2010)), ("votes", Fill::Number(500, 9000))],
    &[("album", Fill::Name), ("artist", Fill::Person), ("label", Fill::Name), ("release year", Fill::Number(1960, 2018)), ("sales", Fill::Number(10, 900))],
    &[("race", Fill::Name), ("winner", Fill::Person), ("circuit", Fill::Name), ("laps", Fill::Number(20, 80)), ("round", Fill::Number(1, 20))],
    &[("book", Fill::Name), ("author", Fill::Person), ("publisher", Fill::Name), ("pages", Fill::Number(90, 900)), ("year", Fill::Number(1900, 2015))],
    &[("ship", Fill::Name), ("builder", Fill::Name), ("fleet", Fill::Name), ("tonnage", Fill::Number(900, 9000)), ("launched", Fill::Number(1900, 1990))],
    &[("episode", Fill::Name), ("director", Fill::Person), ("writer", Fill::Person), ("viewers", Fill::Number(1, 30)), ("season", Fill::Number(1, 12))],
    &[("school", Fill::Name), ("location", Fill::Name), ("mascot", Fill::Name), ("enrollment", Fill::Number(200, 5000)), ("founded", Fill::Number(1800, 2000))],
    &[("mountain", Fill::Name), ("range", Fill::Name), ("country", Fill::Country), ("elevation", Fill::Number(500, 8800)), ("prominence", Fill::Number(100, 4000))],
    &[("home team", Fill::Name), ("away team", Fill::Name), ("venue", Fill::Name), ("crowd", Fill::Number(1000, 60000)), ("score", Fill::Number(0, 9))],
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "to", "sa", "vel", "dor", "an", "bru", "ne", "tor", "wyn", "fa", "gil", "zu", "pe", "rak", "os",
    "li", "mar", "quo", "hed", "ul",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub train: usize,
    pub heldout: usize,
    pub rows: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { train: 240, heldout: 60, rows: 8, dim: 50, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub tables: BTreeMap<String, Table>,
    pub train: Vec<Example>,
    /// Fresh instances of the same templates, disjoint from `train`.
    pub heldout: Vec<Example>,
    pub embeddings: EmbeddingStore,
    pub gazetteer: Gazetteer,
}

impl Corpus {
    pub fn num_schemas(&self) -> usize {
        self.tables.len()
    }

    /// Writes `tables.jsonl`, `train.jsonl`, `heldout.jsonl`,
    /// `embeddings.txt` and `gazetteer.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), DataError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| DataError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        write_tables(&dir.join("tables.jsonl"), self.tables.values())?;
        write_examples(&dir.join("train.jsonl"), &self.train)?;
        write_examples(&dir.join("heldout.jsonl"), &self.heldout)?;
        let emb = dir.join("embeddings.txt");
        std::fs::write(&emb, self.embeddings.to_text()).map_err(io(&emb))?;
        let gaz = dir.join("gazetteer.tsv");
        std::fs::write(&gaz, self.gazetteer.to_tsv()).map_err(io(&gaz))?;
        Ok(())
    }
}

struct Words<'a> {
    rng: &'a mut ChaCha8Rng,
    used: HashSet<String>,
}

impl Words<'_> {
    fn word(&mut self) -> String {
        loop {
            let n = self.rng.gen_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(self.rng).expect("syllables")).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn build_table(
    id: usize,
    schema: &[(&str, Fill)],
    rows: usize,
    words: &mut Words<'_>,
    gaz: &mut Gazetteer,
) -> Table {
    let columns = schema.iter().map(|(n, _)| n.to_string()).collect();
    let kinds = schema
        .iter()
        .map(|(_, f)| if matches!(f, Fill::Number(..)) { ColumnKind::Real } else { ColumnKind::Text })
        .collect();
    let mut data = vec![Vec::with_capacity(schema.len()); rows];
    for &(_, fill) in schema {
        for row in data.iter_mut() {
            let cell = match fill {
                Fill::Number(lo, hi) => Cell::Real(words.rng.gen_range(lo..=hi) as f64),
                Fill::Person => {
                    let name = format!("{} {}", words.word(), words.word());
                    gaz.insert(&name, EntityKind::Person);
                    Cell::Text(name)
                }
                Fill::Country => {
                    let name = words.word();
                    gaz.insert(&name, EntityKind::Country);
                    Cell::Text(name)
                }
                Fill::Name => {
                    if words.rng.gen_bool(0.5) {
                        Cell::Text(format!("{} {}", words.word(), words.word()))
                    } else {
                        Cell::Text(words.word())
                    }
                }
            };
            row.push(cell);
        }
    }
    Table { id: format!("toy-{id:02}"), schema: TableSchema::new(columns, kinds), rows: data }
}

fn cond(col: usize, op: usize, val: String) -> Condition {
    Condition { col, op, val }
}

/// One template instance over `t`, or None when the template does not fit
/// the drawn columns.
fn instance(t: &Table, template: usize, rng: &mut ChaCha8Rng) -> Option<(String, SqlQuery)> {
    let n = t.num_columns();
    let real = |c: usize| t.schema.kinds[c] == ColumnKind::Real;
    let name = |c: usize| t.schema.columns[c].as_str();
    let sel = rng.gen_range(0..n);
    let mut others: Vec<usize> = (0..n).filter(|&c| c != sel).collect();
    others.shuffle(rng);
    let (c1, c2) = (others[0], others[1]);
    let row = &t.rows[rng.gen_range(0..t.rows.len())];
    let (v1, v2) = (row[c1].to_string(), row[c2].to_string());
    let threshold = |c: usize, rng: &mut ChaCha8Rng| {
        let xs: Vec<f64> = t.rows.iter().filter_map(|r| r[c].as_number()).collect();
        let (lo, hi) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        (rng.gen_range(lo..=hi).round() as i64).to_string()
    };
    let q = |agg: usize, conds: Vec<Condition>| SqlQuery { sel, agg, conds };
    let (s, c1n, c2n) = (name(sel), name(c1), name(c2));
    Some(match template {
        0 => (format!("what is the {s} when the {c1n} is {v1} ?"), q(0, vec![cond(c1, 0, v1)])),
        1 => (format!("which {s} has {c1n} {v1} ?"), q(0, vec![cond(c1, 0, v1)])),
        2 => (format!("how many {s} are listed when {c1n} is {v1} ?"), q(3, vec![cond(c1, 0, v1)])),
        3 if real(sel) => (format!("what is the highest {s} when {c1n} is {v1} ?"), q(1, vec![cond(c1, 0, v1)])),
        4 if real(sel) => (format!("what is the lowest {s} for {c1n} {v1} ?"), q(2, vec![cond(c1, 0, v1)])),
        5 if real(sel) => (format!("what is the total {s} when {c1n} is {v1} ?"), q(4, vec![cond(c1, 0, v1)])),
        6 if real(sel) => (format!("what is the average {s} with {c1n} {v1} ?"), q(5, vec![cond(c1, 0, v1)])),
        7 => (
            format!("what is the {s} when {c1n} is {v1} and {c2n} is {v2} ?"),
            q(0, vec![cond(c1, 0, v1), cond(c2, 0, v2)]),
        ),
        8 if real(c1) => {
            let v = threshold(c1, rng);
            (format!("how many {s} have {c1n} greater than {v} ?"), q(3, vec![cond(c1, 1, v)]))
        }
        9 if real(c1) => {
            let v = threshold(c1, rng);
            (format!("which {s} has {c1n} less than {v} ?"), q(0, vec![cond(c1, 2, v)]))
        }
        10 => (format!("how many {s} are there ?"), q(3, vec![])),
        11 if real(sel) => (format!("what is the largest {s} ?"), q(1, vec![])),
        _ => return None,
    })
}

const NUM_TEMPLATES: usize = 12;

pub fn generate(cfg: &SynthConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gazetteer = Gazetteer::new();
    let reserved: HashSet<String> = SCHEMAS
        .iter()
        .flat_map(|s| s.iter().flat_map(|(n, _)| n.split(' ')))
        .map(str::to_string)
        .collect();
    let tables: Vec<Table> = {
        let mut words = Words { rng: &mut rng, used: reserved };
        SCHEMAS.iter().enumerate().map(|(i, s)| build_table(i, s, cfg.rows, &mut words, &mut gazetteer)).collect()
    };

    let want = cfg.train + cfg.heldout;
    let mut seen = HashSet::new();
    let mut examples = Vec::with_capacity(want);
    let mut i = 0usize;
    while examples.len() < want {
        let t = &tables[i % tables.len()];
        i += 1;
        let template = rng.gen_range(0..NUM_TEMPLATES);
        let Some((question, gold)) = instance(t, template, &mut rng) else { continue };
        if seen.insert((t.id.clone(), question.clone())) {
            examples.push(Example { question, table_id: t.id.clone(), gold });
        }
    }
    let heldout = examples.split_off(cfg.train);

    let mut vocab = BTreeSet::new();
    for ex in examples.iter().chain(&heldout) {
        vocab.extend(tokenize(&ex.question).expect("generated questions are non-empty").0);
    }
    for t in &tables {
        for c in &t.schema.columns {
            vocab.extend(tokenize(c).expect("column names are non-empty").0);
        }
    }
    let mut embeddings = EmbeddingStore::new(cfg.dim);
    for w in vocab {
        embeddings.insert(&w, (0..cfg.dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }

    Corpus {
        tables: tables.into_iter().map(|t| (t.id.clone(), t)).collect(),
        train: examples,
        heldout,
        embeddings,
        gazetteer,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::execute;

    #[test]
    fn corpus_shape() {
        let c = generate(&SynthConfig::default());
        assert_eq!(c.train.len(), 240);
        assert_eq!(c.heldout.len(), 60);
        assert!(c.num_schemas() >= 10);
        assert_eq!(c.embeddings.dim(), 50);
        let train: HashSet<_> = c.train.iter().map(|e| (&e.table_id, &e.question)).collect();
        assert!(c.heldout.iter().all(|e| !train.contains(&(&e.table_id, &e.question))));
    }

    #[test]
    fn golds_are_valid_and_execute() {
        let c = generate(&SynthConfig::default());
        for ex in c.train.iter().chain(&c.heldout) {
            let t = &c.tables[&ex.table_id];
            ex.gold.validate(t.num_columns()).unwrap();
            execute(&ex.gold, t).unwrap();
            let tokens = tokenize(&ex.question).unwrap().0;
            for cond in &ex.gold.conds {
                assert!(crate::harness::loss::find_span(&tokens, &cond.val).is_some(), "{}", ex.question);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig::default());
        assert_eq!(a.train, b.train);
        assert_eq!(a.embeddings.to_text(), b.embeddings.to_text());
        let c = generate(&SynthConfig { seed: 8, ..SynthConfig::default() });
        assert_ne!(a.train, c.train);
    }
}
