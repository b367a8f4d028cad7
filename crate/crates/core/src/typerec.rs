//! Per-token type recognition.
//!
//! Each question token receives exactly one tag. Passes run in priority
//! order and only ever touch tokens that are still `None`:
//! schema column names, then (content mode) cell values, then
//! numbers and dates, then gazetteer entities.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::table::{Table, TableSchema};

/// Longest n-gram considered by every matching pass.
pub const MAX_NGRAM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Person,
    Place,
    Country,
    Organization,
    Sport,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] =
        [EntityKind::Person, EntityKind::Place, EntityKind::Country, EntityKind::Organization, EntityKind::Sport];

    /// Rank used when one gazetteer key lists several categories; lower wins.
    fn priority(self) -> u8 {
        match self {
            EntityKind::Person => 0,
            EntityKind::Country => 1,
            EntityKind::Place => 2,
            EntityKind::Organization => 3,
            EntityKind::Sport => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Person => "person",
            EntityKind::Place => "place",
            EntityKind::Country => "country",
            EntityKind::Organization => "organization",
            EntityKind::Sport => "sport",
        }
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeTag {
    None,
    Column,
    Integer,
    Float,
    Date,
    Year,
    Entity(EntityKind),
    /// Content mode: the token belongs to a cell value of this column.
    ColumnValue(usize),
}

impl TypeTag {
    /// Number of tags with their own learned embedding row.
    pub const NUM_FIXED: usize = 11;

    /// Embedding row for fixed tags; `None` for `ColumnValue`.
    pub fn fixed_index(self) -> Option<usize> {
        Some(match self {
            TypeTag::None => 0,
            TypeTag::Column => 1,
            TypeTag::Integer => 2,
            TypeTag::Float => 3,
            TypeTag::Date => 4,
            TypeTag::Year => 5,
            TypeTag::Entity(EntityKind::Person) => 6,
            TypeTag::Entity(EntityKind::Place) => 7,
            TypeTag::Entity(EntityKind::Country) => 8,
            TypeTag::Entity(EntityKind::Organization) => 9,
            TypeTag::Entity(EntityKind::Sport) => 10,
            TypeTag::ColumnValue(_) => return None,
        })
    }

    /// Lowercase label; cell-value tags are labelled with their column's
    /// normalized name.
    pub fn label(self, schema: &TableSchema) -> String {
        match self {
            TypeTag::None => "none".into(),
            TypeTag::Column => "column".into(),
            TypeTag::Integer => "integer".into(),
            TypeTag::Float => "float".into(),
            TypeTag::Date => "date".into(),
            TypeTag::Year => "year".into(),
            TypeTag::Entity(k) => k.name().into(),
            TypeTag::ColumnValue(j) => {
                schema.columns.get(j).map_or_else(|| format!("column_value:{j}"), |c| normalize_phrase(c))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Insensitive,
    Content,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "insensitive" => Ok(Mode::Insensitive),
            "content" => Ok(Mode::Content),
            _ => Err(format!("unknown mode {s:?} (expected insensitive or content)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Insensitive => "insensitive",
            Mode::Content => "content",
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TypeRecError {
    #[error("empty question")]
    EmptyQuestion,
    #[error("content mode needs table rows")]
    MissingTable,
    #[error("gazetteer line {line}: {msg}")]
    Gazetteer { line: usize, msg: String },
}

/// Question tokens aligned one-to-one with type tags.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedQuestion {
    pub tokens: Vec<String>,
    pub tags: Vec<TypeTag>,
    /// Byte offsets of each token in the raw question.
    pub char_spans: Vec<(usize, usize)>,
}

impl TaggedQuestion {
    /// All tokens start untagged.
    pub fn untagged(question: &str) -> Result<Self, TypeRecError> {
        let (tokens, char_spans) = tokenize(question)?;
        let tags = vec![TypeTag::None; tokens.len()];
        Ok(Self { tokens, tags, char_spans })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn span_text(&self, start: usize, len: usize) -> String {
        self.tokens[start..start + len].join(" ")
    }

    fn span_free(&self, start: usize, len: usize) -> bool {
        self.tags[start..start + len].iter().all(|t| *t == TypeTag::None)
    }

    fn set_span(&mut self, start: usize, len: usize, tag: TypeTag) {
        self.tags[start..start + len].iter_mut().for_each(|t| *t = tag);
    }

    /// Tags every untagged span found in `lookup`, longest-first then leftmost.
    fn tag_phrases(&mut self, lookup: impl Fn(&str) -> Option<TypeTag>) {
        for (start, len) in extract_ngrams(self.len(), 1, MAX_NGRAM) {
            if !self.span_free(start, len) {
                continue;
            }
            if let Some(tag) = lookup(&self.span_text(start, len)) {
                self.set_span(start, len, tag);
            }
        }
    }
}

/// Lowercases and splits on whitespace; punctuation becomes its own token,
/// except '.' between digits and '-' between alphanumerics.
pub fn tokenize(question: &str) -> Result<(Vec<String>, Vec<(usize, usize)>), TypeRecError> {
    let chars: Vec<(usize, char)> = question.char_indices().collect();
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let end_of = |k: usize| chars.get(k).map_or(question.len(), |&(b, _)| b);

    let flush = |start: &mut Option<usize>, end: usize, tokens: &mut Vec<String>, spans: &mut Vec<(usize, usize)>| {
        if let Some(s) = start.take() {
            tokens.push(question[s..end].to_lowercase());
            spans.push((s, end));
        }
    };

    for k in 0..chars.len() {
        let (b, c) = chars[k];
        if c.is_whitespace() {
            flush(&mut start, b, &mut tokens, &mut spans);
            continue;
        }
        if c.is_alphanumeric() {
            start.get_or_insert(b);
            continue;
        }
        let prev = k.checked_sub(1).map(|p| chars[p].1);
        let next = chars.get(k + 1).map(|x| x.1);
        let inner = match c {
            '.' => prev.is_some_and(|p| p.is_ascii_digit()) && next.is_some_and(|n| n.is_ascii_digit()),
            '-' => prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric),
            _ => false,
        };
        if inner && start.is_some() {
            continue;
        }
        flush(&mut start, b, &mut tokens, &mut spans);
        tokens.push(c.to_lowercase().collect());
        spans.push((b, end_of(k + 1)));
    }
    flush(&mut start, question.len(), &mut tokens, &mut spans);

    if tokens.is_empty() {
        return Err(TypeRecError::EmptyQuestion);
    }
    Ok((tokens, spans))
}

/// Tokenized, space-joined form used for every phrase comparison.
pub fn normalize_phrase(s: &str) -> String {
    tokenize(s).map(|(t, _)| t.join(" ")).unwrap_or_default()
}

/// All contiguous (start, len) spans with `min_len <= len <= max_len`,
/// longest first, then leftmost.
pub fn extract_ngrams(n_tokens: usize, min_len: usize, max_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let top = max_len.min(n_tokens);
    for len in (min_len.max(1)..=top).rev() {
        for start in 0..=n_tokens - len {
            out.push((start, len));
        }
    }
    out
}

/// Offline entity dictionary: normalized phrase → category.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, EntityKind>,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a key; when the key already exists the higher-priority category is kept.
    pub fn insert(&mut self, key: &str, kind: EntityKind) {
        let key = normalize_phrase(key);
        if key.is_empty() {
            return;
        }
        self.entries
            .entry(key)
            .and_modify(|k| {
                if kind.priority() < k.priority() {
                    *k = kind;
                }
            })
            .or_insert(kind);
    }

    pub fn get(&self, phrase: &str) -> Option<EntityKind> {
        self.entries.get(phrase).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `key<TAB>category` lines. Blank lines are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, TypeRecError> {
        let mut g = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| TypeRecError::Gazetteer { line: i + 1, msg };
            let (key, cat) = line.split_once('\t').ok_or_else(|| err("expected key<TAB>category".into()))?;
            let kind: EntityKind = cat.trim().parse().map_err(err)?;
            g.insert(key, kind);
        }
        Ok(g)
    }

    pub fn to_tsv(&self) -> String {
        let mut keys: Vec<_> = self.entries.iter().collect();
        keys.sort();
        keys.into_iter().map(|(k, v)| format!("{k}\t{}\n", v.name())).collect()
    }
}

/// Marks spans equal to a column name as `Column`.
pub fn tag_schema_columns(tq: &mut TaggedQuestion, schema: &TableSchema) {
    let names: HashMap<String, ()> = schema.columns.iter().map(|c| (normalize_phrase(c), ())).collect();
    tq.tag_phrases(|p| names.contains_key(p).then_some(TypeTag::Column));
}

/// Marks spans equal to a cell value with that cell's column; ties go to the
/// lowest column index.
pub fn tag_content(tq: &mut TaggedQuestion, table: &Table) {
    let mut values: HashMap<String, usize> = HashMap::new();
    for row in &table.rows {
        for (j, cell) in row.iter().enumerate() {
            let key = normalize_phrase(&cell.to_string());
            if key.is_empty() {
                continue;
            }
            values.entry(key).and_modify(|c| *c = (*c).min(j)).or_insert(j);
        }
    }
    tq.tag_phrases(|p| values.get(p).map(|&j| TypeTag::ColumnValue(j)));
}

pub fn tag_entities(tq: &mut TaggedQuestion, gaz: &Gazetteer) {
    tq.tag_phrases(|p| gaz.get(p).map(TypeTag::Entity));
}

struct NumberPatterns {
    iso_date: Regex,
    dmy_date: Regex,
    day: Regex,
    year: Regex,
    integer: Regex,
    float: Regex,
}

fn patterns() -> &'static NumberPatterns {
    static P: OnceLock<NumberPatterns> = OnceLock::new();
    P.get_or_init(|| NumberPatterns {
        iso_date: Regex::new(r"^\d{4}-\d{1,2}-\d{1,2}$").unwrap(),
        dmy_date: Regex::new(r"^\d{1,2}-\d{1,2}-\d{4}$").unwrap(),
        day: Regex::new(r"^(\d{1,2})(st|nd|rd|th)?$").unwrap(),
        year: Regex::new(r"^\d{4}$").unwrap(),
        integer: Regex::new(r"^\d+$").unwrap(),
        float: Regex::new(r"^\d+\.\d+$").unwrap(),
    })
}

fn is_month(tok: &str) -> bool {
    const MONTHS: [&str; 24] = [
        "january", "february", "march", "april", "may", "june", "july", "august", "september", "october",
        "november", "december", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    ];
    MONTHS.contains(&tok)
}

fn is_day(tok: &str) -> bool {
    patterns()
        .day
        .captures(tok)
        .and_then(|c| c[1].parse::<u32>().ok())
        .is_some_and(|d| (1..=31).contains(&d))
}

fn is_four_digit_year(tok: &str) -> bool {
    patterns().year.is_match(tok)
}

/// Length of a multi-token date starting at `i`, if any.
fn date_span_at(tokens: &[String], i: usize) -> Option<usize> {
    let t = |k: usize| tokens.get(i + k).map(String::as_str);
    // month day [,] year
    if t(0).is_some_and(is_month) && t(1).is_some_and(is_day) {
        if t(2) == Some(",") && t(3).is_some_and(is_four_digit_year) {
            return Some(4);
        }
        if t(2).is_some_and(is_four_digit_year) {
            return Some(3);
        }
    }
    // day month [,] year
    if t(0).is_some_and(is_day) && t(1).is_some_and(is_month) {
        if t(2) == Some(",") && t(3).is_some_and(is_four_digit_year) {
            return Some(4);
        }
        if t(2).is_some_and(is_four_digit_year) {
            return Some(3);
        }
    }
    // d / m / yyyy
    if t(0).is_some_and(is_day)
        && t(1) == Some("/")
        && t(2).is_some_and(is_day)
        && t(3) == Some("/")
        && t(4).is_some_and(|y| y.len() >= 2 && patterns().integer.is_match(y))
    {
        return Some(5);
    }
    None
}

/// Classifies untagged numbers and dates into `Date`, `Year`, `Integer`, `Float`.
pub fn tag_numbers(tq: &mut TaggedQuestion) {
    let p = patterns();
    let n = tq.len();
    let mut i = 0;
    while i < n {
        if let Some(len) = date_span_at(&tq.tokens, i) {
            if tq.span_free(i, len) {
                tq.set_span(i, len, TypeTag::Date);
                i += len;
                continue;
            }
        }
        if tq.tags[i] == TypeTag::None {
            let tok = tq.tokens[i].as_str();
            let tag = if p.iso_date.is_match(tok) || p.dmy_date.is_match(tok) {
                Some(TypeTag::Date)
            } else if p.year.is_match(tok) && tok.parse::<u32>().is_ok_and(|y| (1300..=2100).contains(&y)) {
                Some(TypeTag::Year)
            } else if p.integer.is_match(tok) {
                Some(TypeTag::Integer)
            } else if p.float.is_match(tok) {
                Some(TypeTag::Float)
            } else {
                None
            };
            if let Some(tag) = tag {
                tq.tags[i] = tag;
            }
        }
        i += 1;
    }
}

/// Full pipeline for one question.
pub fn recognize(
    question: &str,
    schema: &TableSchema,
    table: Option<&Table>,
    mode: Mode,
    gaz: &Gazetteer,
) -> Result<TaggedQuestion, TypeRecError> {
    let mut tq = TaggedQuestion::untagged(question)?;
    tag_schema_columns(&mut tq, schema);
    if mode == Mode::Content {
        let table = table.ok_or(TypeRecError::MissingTable)?;
        tag_content(&mut tq, table);
    }
    tag_numbers(&mut tq);
    tag_entities(&mut tq, gaz);
    if let Some(t) = table {
        debug_assert!(tq.tags.iter().all(|tag| match tag {
            TypeTag::ColumnValue(j) => *j < t.num_columns(),
            _ => true,
        }));
    }
    Ok(tq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Cell, ColumnKind};
    use proptest::prelude::*;

    fn toks(q: &str) -> Vec<String> {
        tokenize(q).unwrap().0
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(toks("How many spoofed titles?"), ["how", "many", "spoofed", "titles", "?"]);
        assert_eq!(toks("88.5"), ["88.5"]);
        assert_eq!(toks("mort drucker's issue"), ["mort", "drucker", "'", "s", "issue"]);
        assert_eq!(toks("1999-07-01 and x-ray, end."), ["1999-07-01", "and", "x-ray", ",", "end", "."]);
        assert_eq!(toks("- 5"), ["-", "5"]);
        assert_eq!(tokenize("   "), Err(TypeRecError::EmptyQuestion));
        assert_eq!(tokenize(""), Err(TypeRecError::EmptyQuestion));
    }

    #[test]
    fn char_spans_point_into_raw_text() {
        let q = "Mort  Drucker's 88.5";
        let (t, s) = tokenize(q).unwrap();
        assert_eq!(t.len(), s.len());
        assert_eq!(&q[s[0].0..s[0].1], "Mort");
        assert_eq!(&q[s[2].0..s[2].1], "'");
        assert_eq!(&q[s[4].0..s[4].1], "88.5");
    }

    #[test]
    fn ngram_counts_and_order() {
        assert_eq!(extract_ngrams(5, 2, 6).len(), 10);
        assert_eq!(extract_ngrams(1, 1, MAX_NGRAM), vec![(0, 1)]);
        assert_eq!(extract_ngrams(2, 1, MAX_NGRAM), vec![(0, 2), (0, 1), (1, 1)]);
        let all = extract_ngrams(9, 1, MAX_NGRAM);
        assert_eq!(all[0], (0, 6));
        assert_eq!(all.len(), 4 + 5 + 6 + 7 + 8 + 9);
    }

    #[test]
    fn longest_column_match_shadows_shorter() {
        let schema = TableSchema::text_columns(["total", "total score"]);
        let mut tq = TaggedQuestion::untagged("what is the total score of x").unwrap();
        tag_schema_columns(&mut tq, &schema);
        assert_eq!(tq.tags[3], TypeTag::Column);
        assert_eq!(tq.tags[4], TypeTag::Column);
        assert_eq!(tq.tags.iter().filter(|t| **t == TypeTag::Column).count(), 2);

        let mut none = TaggedQuestion::untagged("nothing here").unwrap();
        tag_schema_columns(&mut none, &schema);
        assert!(none.tags.iter().all(|t| *t == TypeTag::None));
    }

    #[test]
    fn numbers_and_dates() {
        let mut tq = TaggedQuestion::untagged("88.5 1998 7 1999-07-01 july 4 , 1776 12345 3000").unwrap();
        tag_numbers(&mut tq);
        use TypeTag::*;
        assert_eq!(tq.tags, vec![Float, Year, Integer, Date, Date, Date, Date, Date, Integer, Integer]);
        let mut tq = TaggedQuestion::untagged("on 4 / 7 / 1999 or 1 march 2001").unwrap();
        tag_numbers(&mut tq);
        assert_eq!(tq.tags[1..6], [Date; 5]);
        assert_eq!(tq.tags[7..10], [Date; 3]);
    }

    #[test]
    fn gazetteer_lookup_and_priority() {
        let gaz = Gazetteer::parse_tsv("Mort Drucker\tperson\nfrance\tplace\nfrance\tcountry\n\n").unwrap();
        assert_eq!(gaz.get("france"), Some(EntityKind::Country));
        let gaz2 = Gazetteer::parse_tsv("france\tcountry\nfrance\tplace\n").unwrap();
        assert_eq!(gaz2.get("france"), Some(EntityKind::Country));

        let mut tq = TaggedQuestion::untagged("did mort drucker visit spain").unwrap();
        tag_entities(&mut tq, &gaz);
        let p = TypeTag::Entity(EntityKind::Person);
        assert_eq!(tq.tags, vec![TypeTag::None, p, p, TypeTag::None, TypeTag::None]);
    }

    #[test]
    fn gazetteer_errors_carry_line_numbers() {
        let err = Gazetteer::parse_tsv("a\tperson\nb\tanimal\n").unwrap_err();
        assert!(matches!(err, TypeRecError::Gazetteer { line: 2, .. }));
        let err = Gazetteer::parse_tsv("no tab here\n").unwrap_err();
        assert!(matches!(err, TypeRecError::Gazetteer { line: 1, .. }));
    }

    #[test]
    fn content_tie_goes_to_lowest_column() {
        let table = Table {
            id: "t".into(),
            schema: TableSchema::new(vec!["a".into(), "b".into()], vec![ColumnKind::Real, ColumnKind::Text]),
            rows: vec![vec![Cell::Real(1.0), Cell::Text("2004".into())], vec![Cell::Real(2004.0), Cell::Text("x".into())]],
        };
        let mut tq = TaggedQuestion::untagged("in 2004 ?").unwrap();
        tag_content(&mut tq, &table);
        assert_eq!(tq.tags[1], TypeTag::ColumnValue(0));
    }

    #[test]
    fn stop_words_stay_none() {
        let schema = TableSchema::text_columns(["name"]);
        let tq = recognize("what is the of a", &schema, None, Mode::Insensitive, &Gazetteer::new()).unwrap();
        assert!(tq.tags.iter().all(|t| *t == TypeTag::None));
        assert_eq!(
            recognize("x", &schema, None, Mode::Content, &Gazetteer::new()),
            Err(TypeRecError::MissingTable)
        );
    }

    proptest! {
        #[test]
        fn tags_align_and_are_idempotent(words in prop::collection::vec("[a-z]{1,6}|[0-9]{1,5}|[0-9]{1,3}\\.[0-9]{1,2}|[?,.']", 1..12)) {
            let q = words.join(" ");
            let schema = TableSchema::text_columns(["ab", "cd ef", "name"]);
            let gaz = Gazetteer::parse_tsv("ab cd\tperson\nxyz\tplace\n").unwrap();
            let tq = recognize(&q, &schema, None, Mode::Insensitive, &gaz).unwrap();
            prop_assert_eq!(tq.tokens.len(), tq.tags.len());
            prop_assert_eq!(tq.tokens.len(), tq.char_spans.len());
            let again = recognize(&tq.tokens.join(" "), &schema, None, Mode::Insensitive, &gaz).unwrap();
            prop_assert_eq!(&again.tokens, &tq.tokens);
            prop_assert_eq!(again.tags, tq.tags);
        }
    }
}
