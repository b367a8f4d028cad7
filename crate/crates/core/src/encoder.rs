//! Word/type embedding and the two bidirectional encoders of each slot model.

use std::collections::HashMap;
use std::path::Path;

use crate::kernel::{bilstm_encode, Graph, KernelError, LstmWeights, Mat, Var};
use crate::table::TableSchema;
use crate::typerec::{tokenize, TaggedQuestion, TypeTag};

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("{file}:{line}: {msg}")]
    Format { file: String, line: usize, msg: String },
    #[error("empty schema")]
    EmptySchema,
    #[error("column {0} has an empty name")]
    EmptyColumnName(usize),
    #[error("content mode needs type width {expected} (word width), got {got}")]
    TypeWidth { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Frozen word vectors. Unknown words map to the zero vector.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: &str, v: Vec<f64>) {
        assert_eq!(v.len(), self.dim, "embedding width");
        self.vectors.insert(token.to_string(), v);
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    /// Vector for `token`, or zeros when unknown.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        self.get(token).map_or_else(|| vec![0.0; self.dim], <[f64]>::to_vec)
    }

    /// Parses `token v1 ... vd` lines; every line must share d.
    pub fn parse_text(text: &str, file: &str) -> Result<Self, EncoderError> {
        let mut store: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| EncoderError::Format { file: file.to_string(), line: i + 1, msg };
            let mut parts = line.split(' ');
            let token = parts.next().unwrap_or_default();
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|_| err(format!("bad number {p:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(err("no vector components".into()));
            }
            let s = store.get_or_insert_with(|| Self::new(values.len()));
            if values.len() != s.dim {
                return Err(err(format!("dimension {} differs from {}", values.len(), s.dim)));
            }
            s.vectors.insert(token.to_string(), values);
        }
        store.ok_or_else(|| EncoderError::Format { file: file.to_string(), line: 0, msg: "no vectors".into() })
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| EncoderError::Io { path: path.display().to_string(), source })?;
        Self::parse_text(&text, &path.display().to_string())
    }

    /// Per-token concatenation; a token missing from one side is zero-padded there.
    pub fn concat(a: &Self, b: &Self) -> Self {
        let mut out = Self::new(a.dim + b.dim);
        for token in a.vectors.keys().chain(b.vectors.keys()) {
            if out.vectors.contains_key(token) {
                continue;
            }
            let mut v = a.lookup(token);
            v.extend(b.lookup(token));
            out.vectors.insert(token.clone(), v);
        }
        out
    }

    /// Writes the text format, tokens sorted.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            out.push_str(k);
            for v in &self.vectors[k] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Mean of the known word vectors of a phrase; zeros if none are known.
    pub fn phrase_mean(&self, words: &[String]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for w in words {
            if let Some(v) = self.get(w) {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                n += 1;
            }
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        acc
    }
}

/// Per-example encoder inputs that do not depend on parameters.
#[derive(Debug, Clone)]
pub struct EncoderInputs {
    /// T×d_w word vectors of the question tokens.
    pub words: Mat,
    /// Row of the type table for each token: fixed tags index the learned
    /// table, cell-value tags index past it into the column-name means.
    pub type_rows: Vec<usize>,
    /// C×d_w mean name vectors of the columns.
    pub column_means: Mat,
}

impl EncoderInputs {
    pub fn new(tq: &TaggedQuestion, schema: &TableSchema, emb: &EmbeddingStore) -> Result<Self, EncoderError> {
        let rows: Vec<Vec<f64>> = tq.tokens.iter().map(|t| emb.lookup(t)).collect();
        let words = Mat::new(rows.len(), emb.dim(), rows.concat());
        let type_rows = tq
            .tags
            .iter()
            .map(|t| match t {
                TypeTag::ColumnValue(j) => TypeTag::NUM_FIXED + j,
                other => other.fixed_index().unwrap_or(0),
            })
            .collect();
        Ok(Self { words, type_rows, column_means: column_means(schema, emb)? })
    }

    pub fn num_tokens(&self) -> usize {
        self.words.rows
    }

    pub fn num_columns(&self) -> usize {
        self.column_means.rows
    }

    fn uses_column_values(&self) -> bool {
        self.type_rows.iter().any(|&r| r >= TypeTag::NUM_FIXED)
    }
}

/// Step 1 of column encoding: the mean word vector of each column name.
pub fn column_means(schema: &TableSchema, emb: &EmbeddingStore) -> Result<Mat, EncoderError> {
    if schema.is_empty() {
        return Err(EncoderError::EmptySchema);
    }
    let mut data = Vec::with_capacity(schema.len() * emb.dim());
    for (j, name) in schema.columns.iter().enumerate() {
        let words = tokenize(name).map_err(|_| EncoderError::EmptyColumnName(j))?.0;
        data.extend(emb.phrase_mean(&words));
    }
    Ok(Mat::new(schema.len(), emb.dim(), data))
}

/// Word and type embeddings concatenated per token: T×(d_w + d_t).
/// `type_table` is the learned NUM_FIXED×d_t table. Cell-value tags use the
/// column's mean name vector as their type vector, which needs d_t == d_w.
pub fn embed_question(g: &mut Graph, inputs: &EncoderInputs, type_table: Var) -> Result<Var, EncoderError> {
    let d_t = g.shape(type_table).1;
    let words = g.constant(inputs.words.clone());
    let table = if inputs.uses_column_values() {
        if d_t != inputs.column_means.cols {
            return Err(EncoderError::TypeWidth { expected: inputs.column_means.cols, got: d_t });
        }
        let means = g.constant(inputs.column_means.clone());
        g.concat_rows(&[type_table, means])?
    } else {
        type_table
    };
    let types = g.gather_rows(table, &inputs.type_rows)?;
    Ok(g.concat_cols(&[words, types])?)
}

/// H_qt: bidirectional states over the embedded question, T×2h.
pub fn encode_question(g: &mut Graph, embedded: Var, fw: &LstmWeights, bw: &LstmWeights) -> Result<Var, EncoderError> {
    let h = bilstm_encode(g, embedded, fw, bw)?;
    Ok(g.dropout(h)?)
}

/// H_col: one bidirectional pass across the column-mean vectors in schema
/// order, C×2h.
pub fn encode_columns(g: &mut Graph, inputs: &EncoderInputs, fw: &LstmWeights, bw: &LstmWeights) -> Result<Var, EncoderError> {
    if inputs.num_columns() == 0 {
        return Err(EncoderError::EmptySchema);
    }
    let means = g.constant(inputs.column_means.clone());
    let h = bilstm_encode(g, means, fw, bw)?;
    Ok(g.dropout(h)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ParamStore;
    use crate::typerec::{recognize, Gazetteer, Mode};

    fn emb() -> EmbeddingStore {
        EmbeddingStore::parse_text("spoofed 1 2 3\ntitle 3 0 -1\nartist 0.5 0.5 0.5\nwhat 1 1 1\n", "mem").unwrap()
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = EmbeddingStore::parse_text("a 1 2\nb 1 2 3\n", "f.txt").unwrap_err();
        assert!(matches!(e, EncoderError::Format { line: 2, .. }), "{e}");
        let e = EmbeddingStore::parse_text("a 1 x\n", "f.txt").unwrap_err();
        assert!(matches!(e, EncoderError::Format { line: 1, .. }));
    }

    #[test]
    fn concat_pads_missing_side() {
        let a = EmbeddingStore::parse_text("x 1 2\ny 3 4\n", "a").unwrap();
        let b = EmbeddingStore::parse_text("x 9\nz 8\n", "b").unwrap();
        let c = EmbeddingStore::concat(&a, &b);
        assert_eq!(c.dim(), 3);
        assert_eq!(c.get("x").unwrap(), &[1.0, 2.0, 9.0]);
        assert_eq!(c.get("y").unwrap(), &[3.0, 4.0, 0.0]);
        assert_eq!(c.get("z").unwrap(), &[0.0, 0.0, 8.0]);
    }

    #[test]
    fn column_mean_averages_name_words() {
        let schema = TableSchema::text_columns(["Spoofed Title", "unknown words", "Artist"]);
        let m = column_means(&schema, &emb()).unwrap();
        assert_eq!(m.row(0), &[2.0, 1.0, 1.0]);
        assert_eq!(m.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(m.row(2), &[0.5, 0.5, 0.5]);
        assert!(matches!(column_means(&TableSchema::text_columns(Vec::<String>::new()), &emb()), Err(EncoderError::EmptySchema)));
        assert!(matches!(column_means(&TableSchema::text_columns(["a", " "]), &emb()), Err(EncoderError::EmptyColumnName(1))));
    }

    fn type_store(d_t: usize) -> ParamStore {
        let mut s = ParamStore::new(1);
        s.add_uniform("type_emb", vec![TypeTag::NUM_FIXED, d_t], 0.5).unwrap();
        s
    }

    #[test]
    fn embedding_rows_concatenate_word_and_type() {
        let schema = TableSchema::text_columns(["Artist"]);
        let tq = recognize("what zzz", &schema, None, Mode::Insensitive, &Gazetteer::new()).unwrap();
        let inputs = EncoderInputs::new(&tq, &schema, &emb()).unwrap();
        let s = type_store(2);
        let mut g = Graph::new();
        let tt = g.param(&s, "type_emb").unwrap();
        let e = embed_question(&mut g, &inputs, tt).unwrap();
        let m = g.value(e).clone();
        assert_eq!((m.rows, m.cols), (2, 5));
        let none_row = &s.get("type_emb").unwrap().data()[0..2];
        assert_eq!(&m.row(0)[..3], &[1.0, 1.0, 1.0]);
        assert_eq!(&m.row(0)[3..], none_row);
        assert_eq!(&m.row(1)[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&m.row(1)[3..], none_row);
    }

    #[test]
    fn column_value_type_is_column_name_mean() {
        let mut tq = TaggedQuestion::untagged("what x").unwrap();
        tq.tags[1] = TypeTag::ColumnValue(0);
        let schema = TableSchema::text_columns(["Artist"]);
        let inputs = EncoderInputs::new(&tq, &schema, &emb()).unwrap();
        let s = type_store(3);
        let mut g = Graph::new();
        let tt = g.param(&s, "type_emb").unwrap();
        let e = embed_question(&mut g, &inputs, tt).unwrap();
        assert_eq!(&g.value(e).row(1)[3..], emb().get("artist").unwrap());

        let s2 = type_store(2);
        let mut g2 = Graph::new();
        let tt = g2.param(&s2, "type_emb").unwrap();
        assert!(matches!(embed_question(&mut g2, &inputs, tt), Err(EncoderError::TypeWidth { .. })));
    }

    fn lstm_store(d_q: usize, d_c: usize, h: usize, seed: u64) -> ParamStore {
        let mut s = ParamStore::new(seed);
        LstmWeights::register(&mut s, "q.fw", d_q, h).unwrap();
        LstmWeights::register(&mut s, "q.bw", d_q, h).unwrap();
        LstmWeights::register(&mut s, "c.fw", d_c, h).unwrap();
        LstmWeights::register(&mut s, "c.bw", d_c, h).unwrap();
        s
    }

    #[test]
    fn encoders_shapes_and_zero_weights() {
        let schema = TableSchema::text_columns(["spoofed title", "artist", "issue"]);
        let tq = recognize("what spoofed title had artist mort drucker ?", &schema, None, Mode::Insensitive, &Gazetteer::new()).unwrap();
        let inputs = EncoderInputs::new(&tq, &schema, &emb()).unwrap();
        let mut ps = lstm_store(3, 3, 4, 2);
        let mut g = Graph::new();
        let q = g.constant(inputs.words.clone());
        let fw = LstmWeights::load(&mut g, &ps, "q.fw").unwrap();
        let bw = LstmWeights::load(&mut g, &ps, "q.bw").unwrap();
        let hq = encode_question(&mut g, q, &fw, &bw).unwrap();
        assert_eq!(g.shape(hq), (tq.len(), 8));
        let cfw = LstmWeights::load(&mut g, &ps, "c.fw").unwrap();
        let cbw = LstmWeights::load(&mut g, &ps, "c.bw").unwrap();
        let hc = encode_columns(&mut g, &inputs, &cfw, &cbw).unwrap();
        assert_eq!(g.shape(hc), (3, 8));

        ps.fill(0.0);
        let mut g = Graph::new();
        let cfw = LstmWeights::load(&mut g, &ps, "c.fw").unwrap();
        let cbw = LstmWeights::load(&mut g, &ps, "c.bw").unwrap();
        let hc = encode_columns(&mut g, &inputs, &cfw, &cbw).unwrap();
        assert!(g.value(hc).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn column_order_matters_beyond_permutation() {
        let e = emb();
        let ps = lstm_store(3, 3, 4, 5);
        let encode = |names: [&str; 3]| {
            let schema = TableSchema::text_columns(names);
            let tq = TaggedQuestion::untagged("what").unwrap();
            let inputs = EncoderInputs::new(&tq, &schema, &e).unwrap();
            let mut g = Graph::new();
            let fw = LstmWeights::load(&mut g, &ps, "c.fw").unwrap();
            let bw = LstmWeights::load(&mut g, &ps, "c.bw").unwrap();
            let hc = encode_columns(&mut g, &inputs, &fw, &bw).unwrap();
            g.value(hc).clone()
        };
        let a = encode(["spoofed title", "artist", "what"]);
        let b = encode(["artist", "spoofed title", "what"]);
        // row for "spoofed title" in a is row 0; in b it is row 1
        let diff: f64 = a.row(0).iter().zip(b.row(1)).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-6);
    }
}
