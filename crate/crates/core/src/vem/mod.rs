//! Voting evidence module: window encoders predicting relative boundary
//! distances, and their accumulation into per-frame voting scores.

mod encoder;
mod votes;

pub use encoder::{gather_windows, EncoderKind, VemEncoder};
pub use votes::{
    accumulate_votes, accumulate_votes_naive, coverage, fuse, fuse_window_scales, min_max,
    normalize_votes, Boundary, Fusion, VoteNorm, VotingScores,
};

use crate::autograd::{AdamState, ParamStore, Tape, Tensor};
use crate::config::PipelineConfig;
use crate::data::FeatureSequence;
use crate::error::{Error, Result};
use crate::labeling::WindowLabels;
use crate::par::Jobs;
use crate::train::Loop;

/// Start and end encoders for one window length.
#[derive(Clone, Debug)]
pub struct VemScale {
    pub j: usize,
    pub start: VemEncoder,
    pub end: VemEncoder,
}

impl VemScale {
    pub fn encoder(&self, b: Boundary) -> &VemEncoder {
        match b {
            Boundary::Start => &self.start,
            Boundary::End => &self.end,
        }
    }

    pub fn encoder_mut(&mut self, b: Boundary) -> &mut VemEncoder {
        match b {
            Boundary::Start => &mut self.start,
            Boundary::End => &mut self.end,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VemModel {
    pub scales: Vec<VemScale>,
}

pub fn encoder_name(j: usize, b: Boundary) -> String {
    format!("vem.j{j}.{}", b.name())
}

impl VemModel {
    pub fn new(cfg: &PipelineConfig, channels: usize, seed: u64) -> Result<Self> {
        let v = &cfg.vem;
        let scales = cfg
            .windows
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let make = |b: Boundary, k: u64| {
                    VemEncoder::new(
                        &encoder_name(j, b),
                        v.encoder,
                        j,
                        channels,
                        v.conv_channels,
                        v.hidden,
                        seed.wrapping_add(2 * i as u64 + k),
                    )
                };
                Ok(VemScale {
                    j,
                    start: make(Boundary::Start, 0)?,
                    end: make(Boundary::End, 1)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scales })
    }

    /// All encoder parameters in one store.
    pub fn to_store(&self) -> ParamStore {
        let mut out = ParamStore::new();
        for s in &self.scales {
            out.extend_from(&s.start.store);
            out.extend_from(&s.end.store);
        }
        out
    }

    pub fn from_store(cfg: &PipelineConfig, channels: usize, saved: &ParamStore) -> Result<Self> {
        let mut m = Self::new(cfg, channels, 0)?;
        for s in &mut m.scales {
            for b in [Boundary::Start, Boundary::End] {
                let prefix = format!("{}.", encoder_name(s.j, b));
                s.encoder_mut(b).store.load_from(&saved.filter_prefix(&prefix))?;
            }
        }
        Ok(m)
    }
}

/// Predictions of every stride-1 window, window `n` at `[n*J..(n+1)*J]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPredictions {
    pub j: usize,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl WindowPredictions {
    pub fn num_windows(&self) -> usize {
        self.start.len() / self.j
    }
}

pub fn vem_forward(scale: &VemScale, f: &FeatureSequence) -> Result<WindowPredictions> {
    let (t, j, c) = (f.len(), scale.j, f.channels());
    if t < j {
        return Err(Error::InvalidArgument(format!(
            "sequence of length {t} is shorter than the window length {j}; pad or rescale it first"
        )));
    }
    let starts: Vec<usize> = (0..=t - j).collect();
    let windows = gather_windows(&f.channels_first(), c, t, j, &starts);
    Ok(WindowPredictions {
        j,
        start: scale.start.predict(windows.clone(), starts.len())?,
        end: scale.end.predict(windows, starts.len())?,
    })
}

/// Votes from every window scale, normalized and fused.
pub fn voting_scores(
    model: &VemModel,
    f: &FeatureSequence,
    norm: VoteNorm,
    fusion: Fusion,
) -> Result<VotingScores> {
    let t = f.len();
    let mut starts = Vec::new();
    let mut ends = Vec::new();
    for scale in &model.scales {
        let p = vem_forward(scale, f)?;
        starts.push(normalize_votes(accumulate_votes(&p.start, t, p.j, Boundary::Start)?, p.j, norm));
        ends.push(normalize_votes(accumulate_votes(&p.end, t, p.j, Boundary::End)?, p.j, norm));
    }
    Ok(VotingScores {
        start: fuse(&starts, fusion)?,
        end: fuse(&ends, fusion)?,
        windows: model.scales.iter().map(|s| s.j).collect(),
        norm,
    })
}

/// A training window: video index and its labels.
pub type WindowRef<'a> = (usize, &'a WindowLabels);

/// Regresses one encoder onto `r_start` or `r_end` of `windows`, weighted
/// per window. `inputs` are channel-major `[C, T]` signals.
#[allow(clippy::too_many_arguments)]
pub fn vem_train_encoder(
    enc: &mut VemEncoder,
    adam: &mut AdamState,
    start_epoch: usize,
    inputs: &[Vec<f64>],
    t_len: usize,
    windows: &[WindowRef<'_>],
    boundary: Boundary,
    cfg: &PipelineConfig,
    jobs: &Jobs,
) -> Result<Vec<f64>> {
    let tag = encoder_name(enc.j, boundary);
    let lp = Loop {
        tag: &tag,
        seed: cfg.seed,
        batch: cfg.vem.batch,
        chunk: cfg.chunk,
        schedule: &cfg.vem.schedule,
        jobs,
    };
    let arch = enc.clone();
    let (c, j) = (enc.channels, enc.j);
    lp.fit(&mut enc.store, adam, start_epoch, windows.len(), |store, _batch, chunk| {
        let b = chunk.len();
        let mut x = Vec::with_capacity(b * c * j);
        let mut target = Vec::with_capacity(b * j);
        let mut weights = Vec::with_capacity(b);
        for &i in chunk {
            let (vid, w) = windows[i];
            x.extend(gather_windows(&inputs[vid], c, t_len, j, &[w.start]));
            target.extend_from_slice(match boundary {
                Boundary::Start => &w.r_start,
                Boundary::End => &w.r_end,
            });
            weights.push(w.weight);
        }
        let mut tape = Tape::new(store);
        let xv = tape.input(Tensor::new(vec![b, c, j], x)?);
        let y = arch.forward(&mut tape, xv)?;
        let loss = tape.mse_weighted(y, &Tensor::new(vec![b, j], target)?, Some(&weights))?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    })
}
