use rand::Rng;

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// 1D convolution layer; weights `[out, in, kernel]`, bias `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1dLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv1dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let bound = init_bound(in_channels * kernel_size);
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::uniform(&[out_channels, in_channels, kernel_size], bound, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::uniform(&[out_channels], bound, rng));
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            weight,
            bias,
        }
    }

    /// Stride-1 layer whose output length equals its input length.
    pub fn same<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "same-length convolution needs an odd kernel, got {kernel_size}"
            )));
        }
        Ok(Self::new(store, name, in_channels, out_channels, kernel_size, 1, kernel_size / 2, rng))
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len + 2 * self.padding - self.kernel_size) / self.stride + 1
    }

    /// `x` is `[batch, in_channels, length]`.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let s = tape.value(x).shape();
        if s.len() != 3 || s[1] != self.in_channels {
            return Err(Error::shape(
                "conv1d_forward",
                format!("layer expects {} input channels, got input {s:?}", self.in_channels),
            ));
        }
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.conv1d(x, w, b, self.stride, self.padding)
    }

    /// Inference on one `[in_channels, length]` signal.
    pub fn forward_single(&self, store: &ParamStore, input: &Tensor) -> Result<Tensor> {
        let s = input.shape();
        if s.len() != 2 {
            return Err(Error::shape("conv1d_forward", format!("expected [C, L], got {s:?}")));
        }
        let mut tape = Tape::new(store);
        let x = tape.input(input.clone().reshaped(vec![1, s[0], s[1]])?);
        let y = self.forward(&mut tape, x)?;
        let out = tape.value(y).clone();
        let (c, l) = (out.shape()[1], out.shape()[2]);
        out.reshaped(vec![c, l])
    }
}

/// Fully connected layer; weight `[in, out]`, bias `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Self {
        let bound = init_bound(in_features);
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::uniform(&[in_features, out_features], bound, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::uniform(&[out_features], bound, rng));
        Self {
            in_features,
            out_features,
            weight,
            bias,
        }
    }

    /// `x` is `[batch, in_features]`.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }
}

/// Single-layer LSTM. The four gates are stored as column blocks of combined
/// matrices in the order input, forget, cell, output:
/// `w_ih [input, 4H]`, `w_hh [H, 4H]`, `bias [4H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
}

pub const FORGET_BIAS_INIT: f64 = 1.0;

impl LstmLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let h4 = 4 * hidden_size;
        let w_ih = store.add(
            format!("{name}.w_ih"),
            Tensor::uniform(&[input_size, h4], init_bound(input_size), rng),
        );
        let w_hh = store.add(
            format!("{name}.w_hh"),
            Tensor::uniform(&[hidden_size, h4], init_bound(hidden_size), rng),
        );
        let mut b = Tensor::uniform(&[h4], init_bound(hidden_size), rng);
        b.data_mut()[hidden_size..2 * hidden_size].fill(FORGET_BIAS_INIT);
        let bias = store.add(format!("{name}.bias"), b);
        Self {
            input_size,
            hidden_size,
            w_ih,
            w_hh,
            bias,
        }
    }

    /// Runs the recurrence from zero hidden and cell state over `inputs`,
    /// each `[batch, input_size]`, returning every hidden state.
    pub fn forward(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("LSTM input sequence is empty".into()));
        }
        let h = self.hidden_size;
        let w_ih = tape.param(self.w_ih);
        let w_hh = tape.param(self.w_hh);
        let bias = tape.param(self.bias);
        let mut state: Option<(Var, Var)> = None;
        let mut hidden = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let xs = tape.value(x).shape();
            if xs.len() != 2 || xs[1] != self.input_size {
                return Err(Error::shape(
                    "lstm_forward",
                    format!("expected [batch, {}], got {xs:?}", self.input_size),
                ));
            }
            let mut gates = tape.matmul(x, w_ih)?;
            if let Some((h_prev, _)) = state {
                let rec = tape.matmul(h_prev, w_hh)?;
                gates = tape.add(gates, rec)?;
            }
            let gates = tape.add_bias(gates, bias)?;
            let i_pre = tape.columns(gates, 0, h)?;
            let f_pre = tape.columns(gates, h, h)?;
            let g_pre = tape.columns(gates, 2 * h, h)?;
            let o_pre = tape.columns(gates, 3 * h, h)?;
            let i = tape.sigmoid(i_pre);
            let g = tape.tanh(g_pre);
            let o = tape.sigmoid(o_pre);
            let ig = tape.mul(i, g)?;
            let c = match state {
                Some((_, c_prev)) => {
                    let f = tape.sigmoid(f_pre);
                    let fc = tape.mul(f, c_prev)?;
                    tape.add(fc, ig)?
                }
                None => ig,
            };
            let tc = tape.tanh(c);
            let h_new = tape.mul(o, tc)?;
            hidden.push(h_new);
            state = Some((h_new, c));
        }
        Ok(hidden)
    }

    /// Inference over a sequence of `[input_size]` vectors.
    pub fn forward_sequence(&self, store: &ParamStore, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new(store);
        let vars = inputs
            .iter()
            .map(|t| Ok(tape.input(t.clone().reshaped(vec![1, t.len()])?)))
            .collect::<Result<Vec<_>>>()?;
        let hs = self.forward(&mut tape, &vars)?;
        Ok(hs
            .into_iter()
            .map(|v| Tensor::from_vec(tape.value(v).data().to_vec()))
            .collect())
    }
}
