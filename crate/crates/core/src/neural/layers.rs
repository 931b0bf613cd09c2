use rand::Rng;

use super::tensor::{affine, outer_acc, transpose_acc, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[outputs, inputs], bound, rng),
            bias: Tensor::uniform(&[outputs], bound, rng),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.outputs()];
        affine(self.weight.data(), self.bias.data(), x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and, if given, `W^T dy` into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        outer_acc(grad.weight.data_mut(), dy, x);
        for (g, d) in grad.bias.data_mut().iter_mut().zip(dy) {
            *g += d;
        }
        if let Some(dx) = dx {
            transpose_acc(self.weight.data(), dy, dx);
        }
    }
}

/// Single-layer LSTM, gate order `[input, forget, cell, output]`, zero initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `[4H, I]`
    pub w_ih: Tensor,
    /// `[4H, H]`
    pub w_hh: Tensor,
    pub bias: Tensor,
}

/// Per-step intermediates kept for back-propagation through time.
#[derive(Debug, Clone, Default)]
pub struct LstmTape {
    xs: Vec<Vec<f64>>,
    /// Activated gates per step, `4H` each.
    gates: Vec<Vec<f64>>,
    /// `hs[t]` / `cs[t]` are the states entering step `t`; the final entry is the output.
    hs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((inputs + hidden) as f64).sqrt();
        Self {
            w_ih: Tensor::uniform(&[4 * hidden, inputs], bound, rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias: Tensor::uniform(&[4 * hidden], bound, rng),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[4 * hidden, inputs]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    /// Runs the sequence and returns the tape; the last hidden state is `tape.output()`.
    pub fn forward<'x, I>(&self, xs: I) -> LstmTape
    where
        I: IntoIterator<Item = &'x [f64]>,
    {
        let h = self.hidden();
        let mut tape = LstmTape {
            hs: vec![vec![0.0; h]],
            cs: vec![vec![0.0; h]],
            ..LstmTape::default()
        };
        let mut z = vec![0.0; 4 * h];
        let mut zh = vec![0.0; 4 * h];
        let zero_bias = vec![0.0; 4 * h];
        for x in xs {
            let h_prev = tape.hs.last().expect("initial state");
            let c_prev = tape.cs.last().expect("initial state");
            affine(self.w_ih.data(), self.bias.data(), x, &mut z);
            affine(self.w_hh.data(), &zero_bias, h_prev, &mut zh);
            let mut gates = vec![0.0; 4 * h];
            let mut c = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                let i_g = sigmoid(z[j] + zh[j]);
                let f_g = sigmoid(z[h + j] + zh[h + j]);
                let g_g = (z[2 * h + j] + zh[2 * h + j]).tanh();
                let o_g = sigmoid(z[3 * h + j] + zh[3 * h + j]);
                gates[j] = i_g;
                gates[h + j] = f_g;
                gates[2 * h + j] = g_g;
                gates[3 * h + j] = o_g;
                c[j] = f_g * c_prev[j] + i_g * g_g;
                hn[j] = o_g * c[j].tanh();
            }
            tape.xs.push(x.to_vec());
            tape.gates.push(gates);
            tape.cs.push(c);
            tape.hs.push(hn);
        }
        tape
    }

    /// Back-propagates `dh_last` through every recorded step.
    pub fn backward(&self, tape: &LstmTape, dh_last: &[f64], grad: &mut Lstm) {
        let h = self.hidden();
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..tape.xs.len()).rev() {
            let gates = &tape.gates[t];
            let c = &tape.cs[t + 1];
            let c_prev = &tape.cs[t];
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = c[j].tanh();
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * o_g * (1.0 - tc * tc);
                let d_i = dcj * g_g;
                let d_g = dcj * i_g;
                let d_f = dcj * c_prev[j];
                dc[j] = dcj * f_g;
                dz[j] = d_i * i_g * (1.0 - i_g);
                dz[h + j] = d_f * f_g * (1.0 - f_g);
                dz[2 * h + j] = d_g * (1.0 - g_g * g_g);
                dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
            }
            outer_acc(grad.w_ih.data_mut(), &dz, &tape.xs[t]);
            outer_acc(grad.w_hh.data_mut(), &dz, &tape.hs[t]);
            for (g, d) in grad.bias.data_mut().iter_mut().zip(&dz) {
                *g += d;
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            transpose_acc(self.w_hh.data(), &dz, &mut dh);
        }
    }
}

impl LstmTape {
    pub fn output(&self) -> &[f64] {
        self.hs.last().expect("initial state")
    }
}
