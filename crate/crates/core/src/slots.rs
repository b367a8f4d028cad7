//! The three slot-filling models and their shared column attention.
//!
//! * `col`  : select column, number of conditions, condition columns
//! * `agg`  : aggregator
//! * `opval`: condition operator and pointer-decoded condition value
//!
//! Each model owns its own question and column bi-LSTMs and its own
//! attention matrix. All tensors use the row-vector convention: a weight
//! stored as `[in, out]` is applied as `x · W`.

use crate::encoder::{embed_question, encode_columns, encode_question, EncoderError, EncoderInputs};
use crate::kernel::{lstm_step, softmax_rows, zero_state, Graph, KernelError, LstmWeights, Mat, ParamStore, Var};
use crate::typerec::TypeTag;

pub const AGG_NAMES: [&str; 6] = ["NULL", "MAX", "MIN", "COUNT", "SUM", "AVG"];
pub const OP_SYMBOLS: [&str; 3] = ["=", ">", "<"];
pub const MAX_CONDS: usize = 4;
pub const DEFAULT_MAX_VAL_LEN: usize = 20;

/// Sizes of every slot model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Per-direction LSTM size; encoder outputs are twice this wide.
    pub hidden: usize,
    pub word_dim: usize,
    pub type_dim: usize,
    pub max_val_len: usize,
}

impl ModelConfig {
    pub fn width(&self) -> usize {
        2 * self.hidden
    }

    pub fn token_dim(&self) -> usize {
        self.word_dim + self.type_dim
    }

    /// Fresh, seeded parameter store holding every trainable tensor.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore, KernelError> {
        let mut s = ParamStore::new(seed);
        let w = self.width();
        s.add_uniform("type_emb", vec![TypeTag::NUM_FIXED, self.type_dim], 1.0 / (self.type_dim as f64).sqrt())?;
        for m in [SlotModel::Col, SlotModel::Agg, SlotModel::OpVal] {
            let p = m.prefix();
            LstmWeights::register(&mut s, &format!("{p}.qt.fw"), self.token_dim(), self.hidden)?;
            LstmWeights::register(&mut s, &format!("{p}.qt.bw"), self.token_dim(), self.hidden)?;
            LstmWeights::register(&mut s, &format!("{p}.colenc.fw"), self.word_dim, self.hidden)?;
            LstmWeights::register(&mut s, &format!("{p}.colenc.bw"), self.word_dim, self.hidden)?;
            s.add_fan_in(&format!("{p}.w_ct"), vec![w, w])?;
        }
        for name in ["col.sel.w_c", "col.sel.w_qt", "col.num.w_qt", "col.cond.w_c", "col.cond.w_qt", "col.cond.w_scol"] {
            s.add_fan_in(name, vec![w, w])?;
        }
        s.add_fan_in("col.sel.v", vec![w, 1])?;
        s.add_fan_in("col.num.v", vec![w, MAX_CONDS + 1])?;
        s.add_fan_in("col.cond.v", vec![w, 1])?;

        s.add_fan_in("agg.agg.w_qt", vec![w, w])?;
        s.add_fan_in("agg.agg.v", vec![w, AGG_NAMES.len()])?;

        for name in ["opval.op.w_c", "opval.op.w_qt", "opval.val.w_qt", "opval.val.w_c", "opval.val.w_h"] {
            s.add_fan_in(name, vec![w, w])?;
        }
        s.add_fan_in("opval.op.w_t", vec![w, OP_SYMBOLS.len()])?;
        s.add_fan_in("opval.val.v", vec![w, 1])?;
        s.add_uniform("opval.val.end", vec![1, w], 1.0 / (w as f64).sqrt())?;
        s.add_uniform("opval.val.end_bias", vec![1, 1], 0.0)?;
        s.add_uniform("opval.val.start", vec![1, self.token_dim()], 1.0 / (self.token_dim() as f64).sqrt())?;
        LstmWeights::register(&mut s, "opval.val.dec", self.token_dim(), w)?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotModel {
    Col,
    Agg,
    OpVal,
}

impl SlotModel {
    pub fn prefix(self) -> &'static str {
        match self {
            SlotModel::Col => "col",
            SlotModel::Agg => "agg",
            SlotModel::OpVal => "opval",
        }
    }
}

/// Column attention output: `alpha` is C×T, `h_qt_col` is C×2h.
#[derive(Debug, Clone, Copy)]
pub struct AttentionResult {
    pub alpha: Var,
    pub h_qt_col: Var,
}

/// Encoder outputs of one model for one example.
#[derive(Debug, Clone, Copy)]
pub struct ModelEncoding {
    pub embedded: Var,
    pub h_qt: Var,
    pub h_col: Var,
    pub attention: AttentionResult,
}

/// alpha = softmax_rows(H_col · W_ct · H_qtᵀ), H_qt/col = alpha · H_qt.
pub fn column_attention(g: &mut Graph, h_qt: Var, h_col: Var, w_ct: Var) -> Result<AttentionResult, KernelError> {
    let proj = g.matmul(h_col, w_ct)?;
    let scores = g.matmul_nt(proj, h_qt)?;
    let alpha = g.softmax_rows(scores)?;
    let h_qt_col = g.matmul(alpha, h_qt)?;
    Ok(AttentionResult { alpha, h_qt_col })
}

/// Runs the embeddings, both encoders and the attention of one model.
pub fn encode_model(
    g: &mut Graph,
    store: &ParamStore,
    model: SlotModel,
    inputs: &EncoderInputs,
) -> Result<ModelEncoding, EncoderError> {
    let p = model.prefix();
    let type_table = g.param(store, "type_emb")?;
    let embedded = embed_question(g, inputs, type_table)?;
    let qfw = LstmWeights::load(g, store, &format!("{p}.qt.fw"))?;
    let qbw = LstmWeights::load(g, store, &format!("{p}.qt.bw"))?;
    let cfw = LstmWeights::load(g, store, &format!("{p}.colenc.fw"))?;
    let cbw = LstmWeights::load(g, store, &format!("{p}.colenc.bw"))?;
    let h_qt = encode_question(g, embedded, &qfw, &qbw)?;
    let h_col = encode_columns(g, inputs, &cfw, &cbw)?;
    let w_ct = g.param(store, &format!("{p}.w_ct"))?;
    let att = column_attention(g, h_qt, h_col, w_ct)?;
    let h_qt_col = g.dropout(att.h_qt_col)?;
    Ok(ModelEncoding { embedded, h_qt, h_col, attention: AttentionResult { alpha: att.alpha, h_qt_col } })
}

/// `V · tanh(Σ inputs·W)` as a 1×n row where n is the row count of the
/// inputs (per-column scores) when `v` is 2h×1, or the class count when
/// a single row is scored against a 2h×K matrix.
fn score_rows(g: &mut Graph, terms: &[(Var, Var)], v: Var) -> Result<Var, KernelError> {
    let mut acc: Option<Var> = None;
    for &(x, w) in terms {
        let t = g.matmul(x, w)?;
        acc = Some(match acc {
            None => t,
            Some(a) => g.add(a, t)?,
        });
    }
    let hidden = g.tanh(acc.expect("at least one term"));
    let s = g.matmul(hidden, v)?;
    Ok(if g.shape(s).1 == 1 { g.transpose(s) } else { s })
}

pub struct SelectParams {
    pub w_c: Var,
    pub w_qt: Var,
    pub v: Var,
}

pub struct CondNumParams {
    pub w_qt: Var,
    pub v: Var,
}

pub struct CondColParams {
    pub w_c: Var,
    pub w_qt: Var,
    pub w_scol: Var,
    pub v: Var,
}

pub struct AggParams {
    pub w_qt: Var,
    pub v: Var,
}

pub struct OpParams {
    pub w_c: Var,
    pub w_qt: Var,
    pub w_t: Var,
}

pub struct ValParams {
    pub w_qt: Var,
    pub w_c: Var,
    pub w_h: Var,
    pub v: Var,
    pub end_key: Var,
    pub end_bias: Var,
    pub start: Var,
    pub decoder: LstmWeights,
}

impl SelectParams {
    pub fn load(g: &mut Graph, s: &ParamStore) -> Result<Self, KernelError> {
        Ok(Self { w_c: g.param(s, "col.sel.w_c")?, w_qt: g.param(s, "col.sel.w_qt")?, v: g.param(s, "col.sel.v")? })
    }
}

impl CondNumParams {
    pub fn load(g: &mut Graph, s: &ParamStore) -> Result<Self, KernelError> {
        Ok(Self { w_qt: g.param(s, "col.num.w_qt")?, v: g.param(s, "col.num.v")? })
    }
}

impl CondColParams {
    pub fn load(g: &mut Graph, s: &ParamStore) -> Result<Self, KernelError> {
        Ok(Self {
            w_c: g.param(s, "col.cond.w_c")?,
            w_qt: g.param(s, "col.cond.w_qt")?,
            w_scol: g.param(s, "col.cond.w_scol")?,
            v: g.param(s, "col.cond.v")?,
        })
    }
}

impl AggParams {
    pub fn load(g: &mut Graph, s: &ParamStore) -> Result<Self, KernelError> {
        Ok(Self { w_qt: g.param(s, "agg.agg.w_qt")?, v: g.param(s, "agg.agg.v")? })
    }
}

impl OpParams {
    pub fn load(g: &mut Graph, s: &ParamStore) -> Result<Self, KernelError> {
        Ok(Self { w_c: g.param(s, "opval.op.w_c")?, w_qt: g.param(s, "opval.op.w_qt")?, w_t: g.param(s, "opval.op.w_t")? })
    }
}

impl ValParams {
    pub fn load(g: &mut Graph, s: &ParamStore) -> Result<Self, KernelError> {
        Ok(Self {
            w_qt: g.param(s, "opval.val.w_qt")?,
            w_c: g.param(s, "opval.val.w_c")?,
            w_h: g.param(s, "opval.val.w_h")?,
            v: g.param(s, "opval.val.v")?,
            end_key: g.param(s, "opval.val.end")?,
            end_bias: g.param(s, "opval.val.end_bias")?,
            start: g.param(s, "opval.val.start")?,
            decoder: LstmWeights::load(g, s, "opval.val.dec")?,
        })
    }
}

/// Select-column logits, 1×C: V^sel tanh(W_c H_colᵀ + W_qt H_qt/colᵀ).
pub fn predict_select_col(g: &mut Graph, h_qt_col: Var, h_col: Var, p: &SelectParams) -> Result<Var, KernelError> {
    score_rows(g, &[(h_col, p.w_c), (h_qt_col, p.w_qt)], p.v)
}

/// Condition-count logits over 0..=4, 1×5: V^num tanh(W_qt Σ_i H_qt/col,i).
pub fn predict_cond_number(g: &mut Graph, h_qt_col: Var, p: &CondNumParams) -> Result<Var, KernelError> {
    let summed = g.sum_rows(h_qt_col);
    score_rows(g, &[(summed, p.w_qt)], p.v)
}

/// Condition-column logits, 1×C. The attended question state of the select
/// column is replicated to all C rows and enters through W_scol.
pub fn cond_col_logits(
    g: &mut Graph,
    h_qt_col: Var,
    h_col: Var,
    select_col: usize,
    p: &CondColParams,
) -> Result<Var, KernelError> {
    let c = g.shape(h_col).0;
    let h_qt_scol = g.gather_rows(h_qt_col, &vec![select_col; c])?;
    score_rows(g, &[(h_col, p.w_c), (h_qt_col, p.w_qt), (h_qt_scol, p.w_scol)], p.v)
}

/// Top-k column indices by probability, ties to the lower index.
pub fn predict_cond_cols(probs: &[f64], k: usize) -> Result<Vec<usize>, SlotError> {
    if k > probs.len() {
        return Err(SlotError::TooManyConditions { k, columns: probs.len() });
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Aggregator logits, 1×6, from the attended state of the select column.
pub fn predict_agg(g: &mut Graph, h_qt_scol_row: Var, p: &AggParams) -> Result<Var, KernelError> {
    score_rows(g, &[(h_qt_scol_row, p.w_qt)], p.v)
}

/// Operator logits, 1×3: W_t tanh(W_c H_col,j + W_qt H_qt/col,j).
pub fn predict_op(g: &mut Graph, h_qt_col_row: Var, h_col_row: Var, p: &OpParams) -> Result<Var, KernelError> {
    score_rows(g, &[(h_col_row, p.w_c), (h_qt_col_row, p.w_qt)], p.w_t)
}

/// Parameter-side pieces of the pointer that do not change across decoder
/// steps for one condition column.
pub struct PointerContext {
    /// (T+1)×2h: question states plus the END key, projected by W_qt.
    keys: Var,
    /// 1×2h: W_c applied to the condition column's state.
    col_term: Var,
    /// 1×(T+1) one-hot on END, scaled by the END bias.
    end_bias_row: Var,
    pub num_tokens: usize,
}

impl PointerContext {
    pub fn new(g: &mut Graph, h_qt: Var, h_col_row: Var, p: &ValParams) -> Result<Self, KernelError> {
        let t = g.shape(h_qt).0;
        let ext = g.concat_rows(&[h_qt, p.end_key])?;
        let keys = g.matmul(ext, p.w_qt)?;
        let col_term = g.matmul(h_col_row, p.w_c)?;
        let mut onehot = vec![0.0; t + 1];
        onehot[t] = 1.0;
        let onehot = g.constant(Mat::row_vec(onehot));
        let end_bias_row = g.matmul(p.end_bias, onehot)?;
        Ok(Self { keys, col_term, end_bias_row, num_tokens: t })
    }

    /// Logits over the T question positions plus END (index T) given the
    /// decoder state `h`.
    pub fn logits(&self, g: &mut Graph, h: Var, p: &ValParams) -> Result<Var, KernelError> {
        let ht = g.matmul(h, p.w_h)?;
        let row = g.add(self.col_term, ht)?;
        let pre = g.add(self.keys, row)?;
        let hidden = g.tanh(pre);
        let s = g.matmul(hidden, p.v)?;
        let s = g.transpose(s);
        g.add(s, self.end_bias_row)
    }
}

/// Decoder input for the token emitted at `prev` (None = start).
fn decoder_input(g: &mut Graph, embedded: Var, prev: Option<usize>, p: &ValParams) -> Result<Var, KernelError> {
    match prev {
        None => Ok(p.start),
        Some(i) => g.row(embedded, i),
    }
}

/// Teacher-forced pointer logits: one 1×(T+1) row per step for the inputs
/// start, span[0], ..., span[n-1]; targets are span[0..n] followed by END.
pub fn pointer_logits_forced(
    g: &mut Graph,
    ctx: &PointerContext,
    embedded: Var,
    span: &[usize],
    p: &ValParams,
) -> Result<Vec<Var>, KernelError> {
    let dh = p.decoder.hidden;
    let mut h = zero_state(g, dh);
    let mut c = zero_state(g, dh);
    let mut out = Vec::with_capacity(span.len() + 1);
    let mut prev = None;
    for step in 0..=span.len() {
        let x = decoder_input(g, embedded, prev, p)?;
        let (nh, nc) = lstm_step(g, x, h, c, &p.decoder)?;
        h = nh;
        c = nc;
        out.push(ctx.logits(g, h, p)?);
        prev = span.get(step).copied();
    }
    Ok(out)
}

/// Greedy pointer decoding; stops when END is the argmax or after `max_len`
/// tokens. The returned positions exclude END.
pub fn decode_cond_val(
    g: &mut Graph,
    ctx: &PointerContext,
    embedded: Var,
    p: &ValParams,
    max_len: usize,
) -> Result<Vec<usize>, KernelError> {
    let dh = p.decoder.hidden;
    let mut h = zero_state(g, dh);
    let mut c = zero_state(g, dh);
    let mut out = Vec::new();
    let mut prev = None;
    while out.len() < max_len {
        let x = decoder_input(g, embedded, prev, p)?;
        let (nh, nc) = lstm_step(g, x, h, c, &p.decoder)?;
        h = nh;
        c = nc;
        let logits = ctx.logits(g, h, p)?;
        let best = argmax(&g.value(logits).data);
        if best == ctx.num_tokens {
            break;
        }
        out.push(best);
        prev = Some(best);
    }
    Ok(out)
}

/// Index of the largest value; ties to the lower index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Probabilities of a 1×K logit row.
pub fn probabilities(g: &Graph, logits: Var) -> Vec<f64> {
    softmax_rows(g.value(logits), None).map(|m| m.data).unwrap_or_default()
}

#[derive(Debug, thiserror::Error)]
pub enum SlotError {
    #[error("cannot pick {k} condition columns from {columns}")]
    TooManyConditions { k: usize, columns: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Filled sketch slots, indices into the schema and question tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPrediction {
    pub select_col: usize,
    pub agg: usize,
    pub cond_count: usize,
    pub cond_cols: Vec<usize>,
    pub cond_ops: Vec<usize>,
    pub cond_val_spans: Vec<Vec<usize>>,
}

/// End-to-end slot prediction for one example with the given parameters.
pub fn predict_slots(
    store: &ParamStore,
    cfg: &ModelConfig,
    inputs: &EncoderInputs,
) -> Result<SlotPrediction, SlotError> {
    let mut g = Graph::new();
    let col = encode_model(&mut g, store, SlotModel::Col, inputs)?;
    let agg_enc = encode_model(&mut g, store, SlotModel::Agg, inputs)?;
    let opval = encode_model(&mut g, store, SlotModel::OpVal, inputs)?;
    let n_cols = inputs.num_columns();

    let sel_p = SelectParams::load(&mut g, store)?;
    let sel_logits = predict_select_col(&mut g, col.attention.h_qt_col, col.h_col, &sel_p)?;
    let select_col = argmax(&g.value(sel_logits).data);

    let num_p = CondNumParams::load(&mut g, store)?;
    let num_logits = predict_cond_number(&mut g, col.attention.h_qt_col, &num_p)?;
    let cond_count = argmax(&g.value(num_logits).data).min(n_cols);

    let cc_p = CondColParams::load(&mut g, store)?;
    let cc_logits = cond_col_logits(&mut g, col.attention.h_qt_col, col.h_col, select_col, &cc_p)?;
    let cond_cols = predict_cond_cols(&probabilities(&g, cc_logits), cond_count)?;

    let agg_p = AggParams::load(&mut g, store)?;
    let scol = g.row(agg_enc.attention.h_qt_col, select_col)?;
    let agg_logits = predict_agg(&mut g, scol, &agg_p)?;
    let agg = argmax(&g.value(agg_logits).data);

    let op_p = OpParams::load(&mut g, store)?;
    let val_p = ValParams::load(&mut g, store)?;
    let mut cond_ops = Vec::with_capacity(cond_cols.len());
    let mut cond_val_spans = Vec::with_capacity(cond_cols.len());
    for &cc in &cond_cols {
        let qrow = g.row(opval.attention.h_qt_col, cc)?;
        let crow = g.row(opval.h_col, cc)?;
        let op_logits = predict_op(&mut g, qrow, crow, &op_p)?;
        cond_ops.push(argmax(&g.value(op_logits).data));
        let ctx = PointerContext::new(&mut g, opval.h_qt, crow, &val_p)?;
        cond_val_spans.push(decode_cond_val(&mut g, &ctx, opval.embedded, &val_p, cfg.max_val_len)?);
    }
    Ok(SlotPrediction { select_col, agg, cond_count: cond_cols.len(), cond_cols, cond_ops, cond_val_spans })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_of(g: &Graph, v: Var) -> Vec<f64> {
        probabilities(g, v)
    }

    fn rand_mat(seed: u64, r: usize, c: usize) -> Mat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn tiny() -> ModelConfig {
        ModelConfig { hidden: 3, word_dim: 4, type_dim: 2, max_val_len: 3 }
    }

    #[test]
    fn attention_single_token_and_zero_weights() {
        let mut g = Graph::new();
        let h_qt = g.constant(rand_mat(1, 1, 4));
        let h_col = g.constant(rand_mat(2, 3, 4));
        let w = g.constant(rand_mat(3, 4, 4));
        let att = column_attention(&mut g, h_qt, h_col, w).unwrap();
        assert!(g.value(att.alpha).data.iter().all(|&a| a == 1.0));
        for r in 0..3 {
            assert_eq!(g.value(att.h_qt_col).row(r), g.value(h_qt).row(0));
        }

        let h_qt = g.constant(rand_mat(4, 5, 4));
        let zero = g.constant(Mat::zeros(4, 4));
        let att = column_attention(&mut g, h_qt, h_col, zero).unwrap();
        assert!(g.value(att.alpha).data.iter().all(|&a| (a - 0.2).abs() < 1e-15));
        let q = g.value(h_qt).clone();
        for r in 0..3 {
            for c in 0..4 {
                let mean: f64 = (0..5).map(|t| q.get(t, c)).sum::<f64>() / 5.0;
                assert!((g.value(att.h_qt_col).get(r, c) - mean).abs() < 1e-14);
            }
        }
        let bad = g.constant(Mat::zeros(3, 3));
        assert!(column_attention(&mut g, h_qt, h_col, bad).is_err());
    }

    #[test]
    fn zero_parameters_give_uniform_classifiers() {
        let cfg = tiny();
        let mut s = cfg.init_params(3).unwrap();
        s.fill(0.0);
        let mut g = Graph::new();
        let h_qt_col = g.constant(rand_mat(5, 4, 6));
        let h_col = g.constant(rand_mat(6, 4, 6));
        let sel = SelectParams::load(&mut g, &s).unwrap();
        let l = predict_select_col(&mut g, h_qt_col, h_col, &sel).unwrap();
        assert_eq!(probs_of(&g, l), vec![0.25; 4]);
        let num = CondNumParams::load(&mut g, &s).unwrap();
        let l = predict_cond_number(&mut g, h_qt_col, &num).unwrap();
        assert!(probs_of(&g, l).iter().all(|p| (p - 0.2).abs() < 1e-15));
        let agg = AggParams::load(&mut g, &s).unwrap();
        let row = g.row(h_qt_col, 1).unwrap();
        let l = predict_agg(&mut g, row, &agg).unwrap();
        assert!(probs_of(&g, l).iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
        let op = OpParams::load(&mut g, &s).unwrap();
        let crow = g.row(h_col, 2).unwrap();
        let l = predict_op(&mut g, row, crow, &op).unwrap();
        assert!(probs_of(&g, l).iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let cc = CondColParams::load(&mut g, &s).unwrap();
        let l = cond_col_logits(&mut g, h_qt_col, h_col, 1, &cc).unwrap();
        assert_eq!(probs_of(&g, l), vec![0.25; 4]);
    }

    #[test]
    fn single_column_select_is_certain() {
        let s = tiny().init_params(8).unwrap();
        let mut g = Graph::new();
        let h_qt_col = g.constant(rand_mat(5, 1, 6));
        let h_col = g.constant(rand_mat(6, 1, 6));
        let sel = SelectParams::load(&mut g, &s).unwrap();
        let l = predict_select_col(&mut g, h_qt_col, h_col, &sel).unwrap();
        assert_eq!(probs_of(&g, l), vec![1.0]);
    }

    #[test]
    fn top_k_columns() {
        let p = [0.1, 0.4, 0.1, 0.4];
        assert_eq!(predict_cond_cols(&p, 0).unwrap(), Vec::<usize>::new());
        assert_eq!(predict_cond_cols(&p, 4).unwrap(), vec![1, 3, 0, 2]);
        assert_eq!(predict_cond_cols(&p, 2).unwrap(), vec![1, 3]);
        assert!(predict_cond_cols(&p, 5).is_err());
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }

    fn decode_setup(s: &ParamStore, t: usize) -> (Graph, PointerContext, Var, ValParams) {
        let mut g = Graph::new();
        let h_qt = g.constant(rand_mat(10, t, 6));
        let emb = g.constant(rand_mat(11, t, 6));
        let crow = g.constant(rand_mat(12, 1, 6));
        let p = ValParams::load(&mut g, s).unwrap();
        let ctx = PointerContext::new(&mut g, h_qt, crow, &p).unwrap();
        (g, ctx, emb, p)
    }

    #[test]
    fn end_bias_controls_decoding() {
        let mut s = tiny().init_params(4).unwrap();
        s.get_mut("opval.val.end_bias").unwrap().data_mut()[0] = 1e3;
        let (mut g, ctx, emb, p) = decode_setup(&s, 4);
        assert!(decode_cond_val(&mut g, &ctx, emb, &p, 20).unwrap().is_empty());

        s.get_mut("opval.val.end_bias").unwrap().data_mut()[0] = -1e3;
        let (mut g, ctx, emb, p) = decode_setup(&s, 1);
        assert_eq!(decode_cond_val(&mut g, &ctx, emb, &p, 3).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn decode_respects_bounds() {
        let s = tiny().init_params(21).unwrap();
        for t in 1..5 {
            let (mut g, ctx, emb, p) = decode_setup(&s, t);
            let out = decode_cond_val(&mut g, &ctx, emb, &p, 3).unwrap();
            assert!(out.len() <= 3);
            assert!(out.iter().all(|&i| i < t));
        }
    }
}
