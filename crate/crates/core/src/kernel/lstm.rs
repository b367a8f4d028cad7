use super::{Graph, KernelError, Mat, ParamStore, Var};

/// Tape handles for one LSTM direction: input weights d×4h, recurrent
/// weights h×4h and a 1×4h bias. Gate order is (input, forget, candidate, output).
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmWeights {
    /// Adds `{prefix}.w_ih`, `{prefix}.w_hh` and `{prefix}.bias` to the store.
    pub fn register(store: &mut ParamStore, prefix: &str, d_in: usize, hidden: usize) -> Result<(), KernelError> {
        let bound = 1.0 / (hidden as f64).sqrt();
        store.add_uniform(&format!("{prefix}.w_ih"), vec![d_in, 4 * hidden], bound)?;
        store.add_uniform(&format!("{prefix}.w_hh"), vec![hidden, 4 * hidden], bound)?;
        store.add_uniform(&format!("{prefix}.bias"), vec![1, 4 * hidden], bound)?;
        Ok(())
    }

    pub fn load(g: &mut Graph, store: &ParamStore, prefix: &str) -> Result<Self, KernelError> {
        let w_ih = g.param(store, &format!("{prefix}.w_ih"))?;
        let w_hh = g.param(store, &format!("{prefix}.w_hh"))?;
        let bias = g.param(store, &format!("{prefix}.bias"))?;
        let hidden = g.shape(w_hh).0;
        if g.shape(w_ih).1 != 4 * hidden || g.shape(bias) != (1, 4 * hidden) {
            return Err(KernelError::Shape(format!("inconsistent LSTM weights under {prefix}")));
        }
        Ok(Self { w_ih, w_hh, bias, hidden })
    }

    pub fn input_dim(&self, g: &Graph) -> usize {
        g.shape(self.w_ih).0
    }
}

/// Zero 1×h row, used as the initial hidden and cell state.
pub fn zero_state(g: &mut Graph, hidden: usize) -> Var {
    g.constant(Mat::zeros(1, hidden))
}

/// One recurrence step; returns (h, c).
pub fn lstm_step(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, w: &LstmWeights) -> Result<(Var, Var), KernelError> {
    if g.shape(x) != (1, w.input_dim(g)) || g.shape(h_prev) != (1, w.hidden) || g.shape(c_prev) != (1, w.hidden) {
        return Err(KernelError::Shape(format!(
            "lstm_step: x {:?}, h {:?}, c {:?} against d_in={} h={}",
            g.shape(x),
            g.shape(h_prev),
            g.shape(c_prev),
            w.input_dim(g),
            w.hidden
        )));
    }
    let xw = g.matmul(x, w.w_ih)?;
    let xw = g.add(xw, w.bias)?;
    step_from_projected(g, xw, h_prev, c_prev, w)
}

fn step_from_projected(
    g: &mut Graph,
    xw: Var,
    h_prev: Var,
    c_prev: Var,
    w: &LstmWeights,
) -> Result<(Var, Var), KernelError> {
    let hw = g.matmul(h_prev, w.w_hh)?;
    let gates = g.add(xw, hw)?;
    let hc = g.lstm_cell(gates, c_prev)?;
    let h = g.slice_cols(hc, 0, w.hidden)?;
    let c = g.slice_cols(hc, w.hidden, w.hidden)?;
    Ok((h, c))
}

/// Runs one direction over the rows of `seq` (T×d) and returns the T hidden
/// states in scan order.
pub fn lstm_scan(g: &mut Graph, seq: Var, w: &LstmWeights, reverse: bool) -> Result<Vec<Var>, KernelError> {
    let (t_len, d) = g.shape(seq);
    if t_len == 0 {
        return Err(KernelError::EmptySequence);
    }
    if d != w.input_dim(g) {
        return Err(KernelError::Shape(format!("sequence width {d} vs LSTM input {}", w.input_dim(g))));
    }
    // Input projections for all steps at once.
    let proj = g.matmul(seq, w.w_ih)?;
    let proj = g.add(proj, w.bias)?;
    let mut h = zero_state(g, w.hidden);
    let mut c = zero_state(g, w.hidden);
    let mut out = Vec::with_capacity(t_len);
    let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
    for t in order {
        let xw = g.row(proj, t)?;
        let (nh, nc) = step_from_projected(g, xw, h, c, w)?;
        out.push(nh);
        h = nh;
        c = nc;
    }
    Ok(out)
}

/// Bidirectional encoding of a T×d sequence into T×2h; row t is
/// [forward state at t | backward state at t].
pub fn bilstm_encode(g: &mut Graph, seq: Var, fw: &LstmWeights, bw: &LstmWeights) -> Result<Var, KernelError> {
    let fwd = lstm_scan(g, seq, fw, false)?;
    let mut bwd = lstm_scan(g, seq, bw, true)?;
    bwd.reverse();
    let f = g.concat_rows(&fwd)?;
    let b = g.concat_rows(&bwd)?;
    g.concat_cols(&[f, b])
}
