//! Proposal evaluation module: an MLP scoring a proposal from a fixed-size
//! profile sampled inside and around it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{AdamState, Linear, ParamStore, Tape, Tensor, Var};
use crate::config::PipelineConfig;
use crate::data::FeatureSequence;
use crate::error::{Error, Result};
use crate::par::Jobs;
use crate::tem::BoundaryScores;
use crate::train::Loop;

/// Which per-frame signal the profile is sampled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PemInput {
    Actionness,
    /// Every raw feature channel.
    Features,
}

pub const FLANK_SAMPLES: usize = 8;
pub const INSIDE_SAMPLES: usize = 16;
pub const PROFILE_LEN: usize = 2 * FLANK_SAMPLES + INSIDE_SAMPLES;

/// Fewest proposals `pem_train` accepts.
pub const MIN_TRAIN_PROPOSALS: usize = 10;

/// Value at a fractional position, clamped to the sequence.
pub fn interp(signal: &[f64], pos: f64) -> f64 {
    let last = signal.len() - 1;
    let pos = pos.clamp(0.0, last as f64);
    let lo = (pos.floor() as usize).min(last.saturating_sub(1));
    if last == 0 {
        return signal[0];
    }
    let w = pos - lo as f64;
    signal[lo] + (signal[lo + 1] - signal[lo]) * w
}

/// Sample positions: 8 bin centres over the left flank, 16 evenly spaced
/// points over `[s, e]` including both, 8 bin centres over the right flank.
/// Each flank is half the proposal long.
pub fn sample_positions(s: f64, e: f64) -> [f64; PROFILE_LEN] {
    let flank = (e - s) / 2.0;
    let bin = flank / FLANK_SAMPLES as f64;
    let mut out = [0.0; PROFILE_LEN];
    for k in 0..FLANK_SAMPLES {
        out[k] = s - flank + (k as f64 + 0.5) * bin;
        out[FLANK_SAMPLES + INSIDE_SAMPLES + k] = e + (k as f64 + 0.5) * bin;
    }
    for k in 0..INSIDE_SAMPLES {
        out[FLANK_SAMPLES + k] = s + (e - s) * k as f64 / (INSIDE_SAMPLES - 1) as f64;
    }
    out
}

pub fn sample_profile(signal: &[f64], s: f64, e: f64) -> [f64; PROFILE_LEN] {
    sample_positions(s, e).map(|p| interp(signal, p))
}

#[derive(Clone, Debug)]
pub struct PemModel {
    pub input: PemInput,
    pub in_dim: usize,
    pub hidden: usize,
    pub store: ParamStore,
    l1: Linear,
    l2: Linear,
}

impl PemModel {
    pub fn new(input: PemInput, channels: usize, hidden: usize, seed: u64) -> Self {
        let in_dim = match input {
            PemInput::Actionness => PROFILE_LEN,
            PemInput::Features => PROFILE_LEN * channels,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l1 = Linear::new(&mut store, "pem.fc1", in_dim, hidden, &mut rng);
        let l2 = Linear::new(&mut store, "pem.fc2", hidden, 1, &mut rng);
        Self {
            input,
            in_dim,
            hidden,
            store,
            l1,
            l2,
        }
    }

    pub fn from_store(input: PemInput, channels: usize, hidden: usize, saved: &ParamStore) -> Result<Self> {
        let mut m = Self::new(input, channels, hidden, 0);
        m.store.load_from(saved)?;
        Ok(m)
    }

    /// Input vector for proposal `[s, e]` (frames).
    pub fn features(&self, s: f64, e: f64, scores: &BoundaryScores, f: &FeatureSequence) -> Vec<f64> {
        match self.input {
            PemInput::Actionness => sample_profile(&scores.action, s, e).to_vec(),
            PemInput::Features => {
                let cf = f.channels_first();
                cf.chunks(f.len())
                    .flat_map(|ch| sample_profile(ch, s, e))
                    .collect()
            }
        }
    }

    /// `x` is `[B, in_dim]`; returns `[B, 1]` probabilities.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let h = self.l1.forward(tape, x)?;
        let h = tape.relu(h);
        let y = self.l2.forward(tape, h)?;
        Ok(tape.sigmoid(y))
    }

    pub fn score_batch(&self, feats: Vec<f64>, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new(&self.store);
        let x = tape.input(Tensor::new(vec![n, self.in_dim], feats)?);
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).data().to_vec())
    }

    pub fn pem_score(&self, s: f64, e: f64, scores: &BoundaryScores, f: &FeatureSequence) -> Result<f64> {
        if !(e - s >= 1.0) {
            return Err(Error::InvalidArgument(format!("degenerate proposal [{s}, {e}]")));
        }
        Ok(self.score_batch(self.features(s, e, scores, f), 1)?[0])
    }
}

/// MSE regression of the score onto IoU targets.
pub fn pem_train(
    model: &mut PemModel,
    adam: &mut AdamState,
    start_epoch: usize,
    feats: &[Vec<f64>],
    targets: &[f64],
    cfg: &PipelineConfig,
    jobs: &Jobs,
) -> Result<Vec<f64>> {
    if feats.len() < MIN_TRAIN_PROPOSALS {
        return Err(Error::Pipeline(format!(
            "PEM needs at least {MIN_TRAIN_PROPOSALS} training proposals, got {}",
            feats.len()
        )));
    }
    let lp = Loop {
        tag: "pem",
        seed: cfg.seed,
        batch: cfg.pem.batch,
        chunk: cfg.chunk,
        schedule: &cfg.pem.schedule,
        jobs,
    };
    let arch = model.clone();
    let d = model.in_dim;
    lp.fit(&mut model.store, adam, start_epoch, feats.len(), |store, _batch, chunk| {
        let b = chunk.len();
        let x: Vec<f64> = chunk.iter().flat_map(|&i| feats[i].iter().copied()).collect();
        let y: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
        let mut tape = Tape::new(store);
        let xv = tape.input(Tensor::new(vec![b, d], x)?);
        let p = arch.forward(&mut tape, xv)?;
        let loss = tape.mse(p, &Tensor::new(vec![b, 1], y)?)?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    })
}
