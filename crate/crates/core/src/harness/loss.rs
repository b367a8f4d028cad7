//! Teacher-forced forward pass and the summed slot losses.

use crate::encoder::{EmbeddingStore, EncoderError, EncoderInputs};
use crate::kernel::{Graph, KernelError, ParamStore, Var};
use crate::slots::{
    cond_col_logits, encode_model, predict_agg, predict_cond_number, predict_op, predict_select_col,
    pointer_logits_forced, CondColParams, CondNumParams, AggParams, OpParams, PointerContext, SelectParams, SlotModel,
    ValParams,
};
use crate::sqlgen::SqlQuery;
use crate::table::Table;
use crate::typerec::{recognize, tokenize, Gazetteer, Mode, TaggedQuestion, TypeRecError};

use super::data::Example;

/// Positive-class weight of the condition-column loss.
pub const COND_COL_POS_WEIGHT: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum PrepareError {
    #[error("question {question:?}: {source}")]
    Tagging { question: String, source: TypeRecError },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Parameter-independent state of one example, computed once.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table_id: String,
    pub tagged: TaggedQuestion,
    /// Question tokens in their original spelling.
    pub surface: Vec<String>,
    pub inputs: EncoderInputs,
    pub gold: SqlQuery,
    /// Token positions of each gold value; None when it does not occur in
    /// the question.
    pub spans: Vec<Option<Vec<usize>>>,
}

/// First contiguous occurrence of the value's tokens in the question.
pub fn find_span(tokens: &[String], value: &str) -> Option<Vec<usize>> {
    let (needle, _) = tokenize(value).ok()?;
    if needle.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - needle.len())
        .find(|&s| tokens[s..s + needle.len()] == needle[..])
        .map(|s| (s..s + needle.len()).collect())
}

pub fn prepare(
    ex: &Example,
    table: &Table,
    mode: Mode,
    gaz: &Gazetteer,
    emb: &EmbeddingStore,
) -> Result<Prepared, PrepareError> {
    let tagged = recognize(&ex.question, &table.schema, Some(table), mode, gaz)
        .map_err(|source| PrepareError::Tagging { question: ex.question.clone(), source })?;
    let surface = tagged.char_spans.iter().map(|&(a, b)| ex.question[a..b].to_string()).collect();
    let inputs = EncoderInputs::new(&tagged, &table.schema, emb)?;
    let spans = ex.gold.conds.iter().map(|c| find_span(&tagged.tokens, &c.val)).collect();
    Ok(Prepared { table_id: ex.table_id.clone(), tagged, surface, inputs, gold: ex.gold.clone(), spans })
}

/// Logits of every slot under teacher forcing.
pub struct ForwardOutputs {
    /// 1×C
    pub select: Var,
    /// 1×5
    pub cond_count: Var,
    /// 1×C, conditioned on the gold select column.
    pub cond_cols: Var,
    /// 1×6, from the gold select column.
    pub agg: Var,
    /// One 1×3 row per gold condition.
    pub ops: Vec<Var>,
    /// Per gold condition, one 1×(T+1) row per decoder step.
    pub values: Vec<Option<Vec<Var>>>,
}

pub fn forward_teacher(g: &mut Graph, store: &ParamStore, prep: &Prepared) -> Result<ForwardOutputs, EncoderError> {
    let gold = &prep.gold;
    let col = encode_model(g, store, SlotModel::Col, &prep.inputs)?;
    let agg_enc = encode_model(g, store, SlotModel::Agg, &prep.inputs)?;
    let opval = encode_model(g, store, SlotModel::OpVal, &prep.inputs)?;

    let sel_p = SelectParams::load(g, store)?;
    let select = predict_select_col(g, col.attention.h_qt_col, col.h_col, &sel_p)?;
    let num_p = CondNumParams::load(g, store)?;
    let cond_count = predict_cond_number(g, col.attention.h_qt_col, &num_p)?;
    let cc_p = CondColParams::load(g, store)?;
    let cond_cols = cond_col_logits(g, col.attention.h_qt_col, col.h_col, gold.sel, &cc_p)?;

    let agg_p = AggParams::load(g, store)?;
    let scol = g.row(agg_enc.attention.h_qt_col, gold.sel)?;
    let agg = predict_agg(g, scol, &agg_p)?;

    let mut ops = Vec::with_capacity(gold.conds.len());
    let mut values = Vec::with_capacity(gold.conds.len());
    if !gold.conds.is_empty() {
        let op_p = OpParams::load(g, store)?;
        let val_p = ValParams::load(g, store)?;
        for (c, span) in gold.conds.iter().zip(&prep.spans) {
            let qrow = g.row(opval.attention.h_qt_col, c.col)?;
            let crow = g.row(opval.h_col, c.col)?;
            ops.push(predict_op(g, qrow, crow, &op_p)?);
            values.push(match span {
                Some(span) => {
                    let ctx = PointerContext::new(g, opval.h_qt, crow, &val_p)?;
                    Some(pointer_logits_forced(g, &ctx, opval.embedded, span, &val_p)?)
                }
                None => None,
            });
        }
    }
    Ok(ForwardOutputs { select, cond_count, cond_cols, agg, ops, values })
}

fn add_all(g: &mut Graph, terms: Vec<Var>) -> Result<Var, KernelError> {
    let mut it = terms.into_iter();
    let mut acc = it.next().expect("at least one loss term");
    for t in it {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Sum of the select, count, aggregator and operator cross-entropies, the
/// weighted condition-column BCE, and the per-step pointer cross-entropies
/// whose targets are the gold span followed by END.
pub fn total_loss(g: &mut Graph, out: &ForwardOutputs, prep: &Prepared) -> Result<Var, KernelError> {
    let gold = &prep.gold;
    let n_cols = prep.inputs.num_columns();
    let mut terms = vec![
        g.cross_entropy(out.select, gold.sel)?,
        g.cross_entropy(out.cond_count, gold.conds.len())?,
    ];
    let mut targets = vec![false; n_cols];
    for c in &gold.conds {
        targets[c.col] = true;
    }
    terms.push(g.weighted_bce(out.cond_cols, &targets, COND_COL_POS_WEIGHT)?);
    terms.push(g.cross_entropy(out.agg, gold.agg)?);
    for (c, &logits) in gold.conds.iter().zip(&out.ops) {
        terms.push(g.cross_entropy(logits, c.op)?);
    }
    let end = prep.inputs.num_tokens();
    for (steps, span) in out.values.iter().zip(&prep.spans) {
        let (Some(steps), Some(span)) = (steps, span) else { continue };
        for (i, &logits) in steps.iter().enumerate() {
            terms.push(g.cross_entropy(logits, span.get(i).copied().unwrap_or(end))?);
        }
    }
    add_all(g, terms)
}

/// Forward pass and loss in one call.
pub fn example_loss(g: &mut Graph, store: &ParamStore, prep: &Prepared) -> Result<Var, EncoderError> {
    let out = forward_teacher(g, store, prep)?;
    Ok(total_loss(g, &out, prep)?)
}
