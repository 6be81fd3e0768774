use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Conv1dLayer, Linear, LstmLayer, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// conv, conv, LSTM, linear head.
    Lstm,
    /// Per-frame linear map of the raw input (receptive field 1).
    Srf,
    /// conv, conv, one linear layer over the flattened window.
    Sll,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Lstm => "lstm",
            EncoderKind::Srf => "srf",
            EncoderKind::Sll => "sll",
        }
    }
}

/// Maps a `[C, J]` window to `J` relative distances in (-1, 1).
#[derive(Clone, Debug)]
pub struct VemEncoder {
    pub kind: EncoderKind,
    pub j: usize,
    pub channels: usize,
    pub store: ParamStore,
    convs: Vec<Conv1dLayer>,
    lstm: Option<LstmLayer>,
    head: Option<Linear>,
    point: Option<Conv1dLayer>,
}

impl VemEncoder {
    pub fn new(
        name: &str,
        kind: EncoderKind,
        j: usize,
        channels: usize,
        conv_channels: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut convs = Vec::new();
        let (mut lstm, mut head, mut point) = (None, None, None);
        let cc = conv_channels;
        if kind != EncoderKind::Srf {
            convs.push(Conv1dLayer::same(&mut store, &format!("{name}.conv1"), channels, cc, 3, &mut rng)?);
            convs.push(Conv1dLayer::same(&mut store, &format!("{name}.conv2"), cc, cc, 3, &mut rng)?);
        }
        match kind {
            EncoderKind::Lstm => {
                lstm = Some(LstmLayer::new(&mut store, &format!("{name}.lstm"), cc, hidden, &mut rng));
                head = Some(Linear::new(&mut store, &format!("{name}.head"), hidden, j, &mut rng));
            }
            EncoderKind::Sll => {
                head = Some(Linear::new(&mut store, &format!("{name}.head"), cc * j, j, &mut rng));
            }
            EncoderKind::Srf => {
                point = Some(Conv1dLayer::new(&mut store, &format!("{name}.point"), channels, 1, 1, 1, 0, &mut rng));
            }
        }
        Ok(Self {
            kind,
            j,
            channels,
            store,
            convs,
            lstm,
            head,
            point,
        })
    }

    /// `x` is `[B, C, J]`; returns `[B, J]`.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let s = tape.value(x).shape().to_vec();
        if s.len() != 3 || s[1] != self.channels || s[2] != self.j {
            return Err(Error::shape(
                "vem_forward",
                format!("expected [B, {}, {}], got {s:?}", self.channels, self.j),
            ));
        }
        let b = s[0];
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(tape, h)?;
            h = tape.relu(h);
        }
        let y = match self.kind {
            EncoderKind::Lstm => {
                let steps = (0..self.j)
                    .map(|t| tape.index_axis(h, 2, t))
                    .collect::<Result<Vec<_>>>()?;
                let hidden = self.lstm.as_ref().expect("lstm").forward(tape, &steps)?;
                self.head.as_ref().expect("head").forward(tape, *hidden.last().expect("non-empty"))?
            }
            EncoderKind::Sll => {
                let flat_len = tape.value(h).len() / b;
                let flat = tape.reshape(h, vec![b, flat_len])?;
                self.head.as_ref().expect("head").forward(tape, flat)?
            }
            EncoderKind::Srf => {
                let p = self.point.as_ref().expect("point").forward(tape, h)?;
                tape.index_axis(p, 1, 0)?
            }
        };
        Ok(tape.tanh(y))
    }

    /// Predictions for a batch of windows, `windows` flat `[B, C, J]`.
    pub fn predict(&self, windows: Vec<f64>, batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let x = tape.input(Tensor::new(vec![batch, self.channels, self.j], windows)?);
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).data().to_vec())
    }
}

/// Stacks the windows starting at `starts` from a channel-major `[C, T]`
/// signal into a flat `[B, C, J]` buffer.
pub fn gather_windows(x_cf: &[f64], channels: usize, t_len: usize, j: usize, starts: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(starts.len() * channels * j);
    for &n in starts {
        for c in 0..channels {
            out.extend_from_slice(&x_cf[c * t_len + n..c * t_len + n + j]);
        }
    }
    out
}
