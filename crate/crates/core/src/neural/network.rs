use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Linear, LstmTape, Lstm};
use super::tensor::Tensor;
use super::NeuralError;
use crate::env::{EnvState, PRIVATE_DIM};
use crate::marketdata::{MACRO_DIM, NORMALIZED_LOB_DIM};

/// Layer widths. The embedding is `2 * lstm_hidden + macro_embed` wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub macro_hidden: usize,
    pub macro_embed: usize,
    pub lstm_hidden: usize,
    pub head_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            macro_hidden: 64,
            macro_embed: 64,
            lstm_hidden: 64,
            head_hidden: 128,
        }
    }
}

impl NetConfig {
    pub fn embedding_dim(&self) -> usize {
        2 * self.lstm_hidden + self.macro_embed
    }
}

/// Every learnable tensor of the network. Gradients and Adam moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub macro_in: Linear,
    pub macro_out: Linear,
    pub lob_lstm: Lstm,
    pub private_lstm: Lstm,
    pub value_hidden: Linear,
    pub value_out: Linear,
    pub price_hidden: Linear,
    pub price_out: Linear,
    pub qty_hidden: Linear,
    pub qty_out: Linear,
    pub vol_hidden: Linear,
    pub vol_out: Linear,
}

macro_rules! each_tensor {
    ($self:ident, $f:ident, $($layer:ident . $t:ident),* $(,)?) => {
        vec![$( (concat!(stringify!($layer), ".", stringify!($t)), $f!($self.$layer.$t)) ),*]
    };
}

macro_rules! by_ref {
    ($e:expr) => {
        &$e
    };
}

macro_rules! by_mut {
    ($e:expr) => {
        &mut $e
    };
}

macro_rules! all_tensors {
    ($self:ident, $f:ident) => {
        each_tensor!(
            $self, $f,
            macro_in.weight, macro_in.bias, macro_out.weight, macro_out.bias,
            lob_lstm.w_ih, lob_lstm.w_hh, lob_lstm.bias,
            private_lstm.w_ih, private_lstm.w_hh, private_lstm.bias,
            value_hidden.weight, value_hidden.bias, value_out.weight, value_out.bias,
            price_hidden.weight, price_hidden.bias, price_out.weight, price_out.bias,
            qty_hidden.weight, qty_hidden.bias, qty_out.weight, qty_out.bias,
            vol_hidden.weight, vol_hidden.bias, vol_out.weight, vol_out.bias,
        )
    };
}

impl NetworkParams {
    /// Seeded initialization, uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, n_price: usize, n_qty: usize, rng: &mut R) -> Self {
        let e = cfg.embedding_dim();
        let hh = cfg.head_hidden;
        Self {
            macro_in: Linear::new(MACRO_DIM, cfg.macro_hidden, rng),
            macro_out: Linear::new(cfg.macro_hidden, cfg.macro_embed, rng),
            lob_lstm: Lstm::new(NORMALIZED_LOB_DIM, cfg.lstm_hidden, rng),
            private_lstm: Lstm::new(PRIVATE_DIM, cfg.lstm_hidden, rng),
            value_hidden: Linear::new(e, hh, rng),
            value_out: Linear::new(hh, 1, rng),
            price_hidden: Linear::new(e, hh, rng),
            price_out: Linear::new(hh, n_price, rng),
            qty_hidden: Linear::new(e, hh, rng),
            qty_out: Linear::new(hh, n_qty, rng),
            vol_hidden: Linear::new(e, hh, rng),
            vol_out: Linear::new(hh, 1, rng),
        }
    }

    pub fn zeros(cfg: &NetConfig, n_price: usize, n_qty: usize) -> Self {
        let e = cfg.embedding_dim();
        let hh = cfg.head_hidden;
        Self {
            macro_in: Linear::zeros(MACRO_DIM, cfg.macro_hidden),
            macro_out: Linear::zeros(cfg.macro_hidden, cfg.macro_embed),
            lob_lstm: Lstm::zeros(NORMALIZED_LOB_DIM, cfg.lstm_hidden),
            private_lstm: Lstm::zeros(PRIVATE_DIM, cfg.lstm_hidden),
            value_hidden: Linear::zeros(e, hh),
            value_out: Linear::zeros(hh, 1),
            price_hidden: Linear::zeros(e, hh),
            price_out: Linear::zeros(hh, n_price),
            qty_hidden: Linear::zeros(e, hh),
            qty_out: Linear::zeros(hh, n_qty),
            vol_hidden: Linear::zeros(e, hh),
            vol_out: Linear::zeros(hh, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config(), self.n_price(), self.n_qty())
    }

    pub fn config(&self) -> NetConfig {
        NetConfig {
            macro_hidden: self.macro_in.outputs(),
            macro_embed: self.macro_out.outputs(),
            lstm_hidden: self.lob_lstm.hidden(),
            head_hidden: self.value_hidden.outputs(),
        }
    }

    pub fn n_price(&self) -> usize {
        self.price_out.outputs()
    }

    pub fn n_qty(&self) -> usize {
        self.qty_out.outputs()
    }

    /// Named tensors in a fixed order (used by the optimizer and checkpoints).
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        all_tensors!(self, by_ref)
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        all_tensors!(self, by_mut)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn add_assign(&mut self, other: &NetworkParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(s);
        }
    }

    /// Verifies the sub-networks fit together and match the fixed input widths.
    pub fn check_shapes(&self) -> Result<(), NeuralError> {
        let cfg = self.config();
        let expected = Self::zeros(&cfg, self.n_price(), self.n_qty());
        for ((name, a), (_, b)) in self.tensors().into_iter().zip(expected.tensors()) {
            if a.shape() != b.shape() {
                return Err(NeuralError::Shape(format!(
                    "{name}: expected {:?}, got {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub q_price: Vec<f64>,
    pub q_qty: Vec<f64>,
    pub value: f64,
    pub vol_pred: f64,
    pub embedding: Vec<f64>,
    /// Raw advantage outputs before mean subtraction.
    pub adv_price: Vec<f64>,
    pub adv_qty: Vec<f64>,
}

/// Gradient of a scalar objective with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Upstream {
    pub q_price: Vec<f64>,
    pub q_qty: Vec<f64>,
    pub vol_pred: f64,
}

impl Upstream {
    pub fn zeros(n_price: usize, n_qty: usize) -> Self {
        Self {
            q_price: vec![0.0; n_price],
            q_qty: vec![0.0; n_qty],
            vol_pred: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct HeadTape {
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

/// Intermediates of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    config: NetConfig,
    n_price: usize,
    n_qty: usize,
    macro_input: Vec<f64>,
    macro_pre1: Vec<f64>,
    macro_h1: Vec<f64>,
    macro_pre2: Vec<f64>,
    lob: LstmTape,
    private: LstmTape,
    embedding: Vec<f64>,
    value: HeadTape,
    price: HeadTape,
    qty: HeadTape,
    vol: HeadTape,
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

fn head(hidden: &Linear, out: &Linear, e: &[f64]) -> (Vec<f64>, HeadTape) {
    let pre = hidden.forward(e);
    let h = relu(&pre);
    let y = out.forward(&h);
    (y, HeadTape { pre, hidden: h })
}

#[allow(clippy::too_many_arguments)]
fn head_backward(
    hidden: &Linear,
    out: &Linear,
    tape: &HeadTape,
    e: &[f64],
    dy: &[f64],
    g_hidden: &mut Linear,
    g_out: &mut Linear,
    de: &mut [f64],
) {
    let mut dh = vec![0.0; hidden.outputs()];
    out.backward(&tape.hidden, dy, g_out, Some(&mut dh));
    for (d, &p) in dh.iter_mut().zip(&tape.pre) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    hidden.backward(e, &dh, g_hidden, Some(de));
}

fn check_state(params: &NetworkParams, state: &EnvState) -> Result<(), NeuralError> {
    if state.lob_seq.is_empty() || state.lob_seq.len() != state.private_seq.len() {
        return Err(NeuralError::Shape(format!(
            "micro sequences must be non-empty and equal length ({} vs {})",
            state.lob_seq.len(),
            state.private_seq.len()
        )));
    }
    if params.macro_in.inputs() != MACRO_DIM
        || params.lob_lstm.inputs() != NORMALIZED_LOB_DIM
        || params.private_lstm.inputs() != PRIVATE_DIM
    {
        return Err(NeuralError::Shape("encoder input widths".into()));
    }
    Ok(())
}

fn aggregate(value: f64, adv: &[f64]) -> Vec<f64> {
    let mean = adv.iter().sum::<f64>() / adv.len() as f64;
    adv.iter().map(|a| value + (a - mean)).collect()
}

/// Forward pass that also records the tape needed by [`backward`].
pub fn forward_with_tape(
    params: &NetworkParams,
    state: &EnvState,
) -> Result<(ForwardOutput, Tape), NeuralError> {
    check_state(params, state)?;
    let macro_input = state.macro_features.to_vec();
    let macro_pre1 = params.macro_in.forward(&macro_input);
    let macro_h1 = relu(&macro_pre1);
    let macro_pre2 = params.macro_out.forward(&macro_h1);
    let macro_embed = relu(&macro_pre2);

    let lob = params
        .lob_lstm
        .forward(state.lob_seq.iter().map(|l| l.as_slice()));
    let private = params
        .private_lstm
        .forward(state.private_seq.iter().map(|p| p.as_slice()));

    let mut embedding = Vec::with_capacity(params.config().embedding_dim());
    embedding.extend_from_slice(lob.output());
    embedding.extend_from_slice(private.output());
    embedding.extend_from_slice(&macro_embed);

    let (v, value_tape) = head(&params.value_hidden, &params.value_out, &embedding);
    let (adv_price, price_tape) = head(&params.price_hidden, &params.price_out, &embedding);
    let (adv_qty, qty_tape) = head(&params.qty_hidden, &params.qty_out, &embedding);
    let (vol, vol_tape) = head(&params.vol_hidden, &params.vol_out, &embedding);
    let value = v[0];

    let out = ForwardOutput {
        q_price: aggregate(value, &adv_price),
        q_qty: aggregate(value, &adv_qty),
        value,
        vol_pred: vol[0],
        embedding: embedding.clone(),
        adv_price,
        adv_qty,
    };
    let tape = Tape {
        config: params.config(),
        n_price: params.n_price(),
        n_qty: params.n_qty(),
        macro_input,
        macro_pre1,
        macro_h1,
        macro_pre2,
        lob,
        private,
        embedding,
        value: value_tape,
        price: price_tape,
        qty: qty_tape,
        vol: vol_tape,
    };
    Ok((out, tape))
}

pub fn forward(params: &NetworkParams, state: &EnvState) -> Result<ForwardOutput, NeuralError> {
    forward_with_tape(params, state).map(|(o, _)| o)
}

/// Reverse-mode gradient of `sum(upstream * outputs)` with respect to every parameter.
pub fn backward(
    params: &NetworkParams,
    tape: &Tape,
    upstream: &Upstream,
) -> Result<NetworkParams, NeuralError> {
    if tape.config != params.config() || tape.n_price != params.n_price() || tape.n_qty != params.n_qty() {
        return Err(NeuralError::Shape("tape was recorded with different parameters".into()));
    }
    if upstream.q_price.len() != tape.n_price || upstream.q_qty.len() != tape.n_qty {
        return Err(NeuralError::Shape(format!(
            "upstream widths ({}, {}) vs branches ({}, {})",
            upstream.q_price.len(),
            upstream.q_qty.len(),
            tape.n_price,
            tape.n_qty
        )));
    }
    let mut g = params.zeros_like();
    let e = &tape.embedding;
    let mut de = vec![0.0; e.len()];

    // Q_d(a) = V + A_d(a) - mean(A_d)
    let dv = upstream.q_price.iter().sum::<f64>() + upstream.q_qty.iter().sum::<f64>();
    let centered = |gq: &[f64]| {
        let m = gq.iter().sum::<f64>() / gq.len() as f64;
        gq.iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let d_adv_price = centered(&upstream.q_price);
    let d_adv_qty = centered(&upstream.q_qty);

    head_backward(&params.value_hidden, &params.value_out, &tape.value, e, &[dv],
        &mut g.value_hidden, &mut g.value_out, &mut de);
    head_backward(&params.price_hidden, &params.price_out, &tape.price, e, &d_adv_price,
        &mut g.price_hidden, &mut g.price_out, &mut de);
    head_backward(&params.qty_hidden, &params.qty_out, &tape.qty, e, &d_adv_qty,
        &mut g.qty_hidden, &mut g.qty_out, &mut de);
    head_backward(&params.vol_hidden, &params.vol_out, &tape.vol, e, &[upstream.vol_pred],
        &mut g.vol_hidden, &mut g.vol_out, &mut de);

    let h = tape.config.lstm_hidden;
    params.lob_lstm.backward(&tape.lob, &de[..h], &mut g.lob_lstm);
    params.private_lstm.backward(&tape.private, &de[h..2 * h], &mut g.private_lstm);

    let mut d_pre2 = de[2 * h..].to_vec();
    for (d, &p) in d_pre2.iter_mut().zip(&tape.macro_pre2) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    let mut d_h1 = vec![0.0; tape.macro_h1.len()];
    params.macro_out.backward(&tape.macro_h1, &d_pre2, &mut g.macro_out, Some(&mut d_h1));
    for (d, &p) in d_h1.iter_mut().zip(&tape.macro_pre1) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    params.macro_in.backward(&tape.macro_input, &d_h1, &mut g.macro_in, None);
    Ok(g)
}
