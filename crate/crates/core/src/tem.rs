//! Temporal evaluation module: per-frame start, end and actionness
//! probabilities from two convolutional branches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{AdamState, Conv1dLayer, ParamStore, Tape, Tensor, Var};
use crate::config::{PipelineConfig, TemConfig};
use crate::data::{Dataset, FeatureSequence};
use crate::error::{Error, Result};
use crate::labeling::{make_tem_labels, FrameLabels};
use crate::par::Jobs;
use crate::train::Loop;

/// Videos per gradient work unit.
const CHUNK_VIDEOS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryScores {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub action: Vec<f64>,
}

impl BoundaryScores {
    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    /// Stand-in when the module is switched off: neutral boundaries and
    /// identity suppression.
    pub fn constant(t_len: usize) -> Self {
        Self {
            start: vec![0.0; t_len],
            end: vec![0.0; t_len],
            action: vec![1.0; t_len],
        }
    }
}

#[derive(Clone, Debug)]
pub struct TemModel {
    pub channels: usize,
    pub hidden: usize,
    pub store: ParamStore,
    boundary: [Conv1dLayer; 3],
    action: [Conv1dLayer; 3],
}

fn branch(
    store: &mut ParamStore,
    name: &str,
    c: usize,
    h: usize,
    out: usize,
    rng: &mut ChaCha8Rng,
) -> Result<[Conv1dLayer; 3]> {
    Ok([
        Conv1dLayer::same(store, &format!("{name}.conv1"), c, h, 3, rng)?,
        Conv1dLayer::same(store, &format!("{name}.conv2"), h, h, 3, rng)?,
        Conv1dLayer::same(store, &format!("{name}.conv3"), h, out, 1, rng)?,
    ])
}

fn run_branch(layers: &[Conv1dLayer; 3], tape: &mut Tape<'_>, x: Var) -> Result<Var> {
    let h = layers[0].forward(tape, x)?;
    let h = tape.relu(h);
    let h = layers[1].forward(tape, h)?;
    let h = tape.relu(h);
    let y = layers[2].forward(tape, h)?;
    Ok(tape.sigmoid(y))
}

impl TemModel {
    pub fn new(channels: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let boundary = branch(&mut store, "tem.boundary", channels, hidden, 2, &mut rng)?;
        let action = branch(&mut store, "tem.action", channels, hidden, 1, &mut rng)?;
        Ok(Self {
            channels,
            hidden,
            store,
            boundary,
            action,
        })
    }

    /// Model with the architecture of `new` and parameters from `saved`.
    pub fn from_store(channels: usize, hidden: usize, saved: &ParamStore) -> Result<Self> {
        let mut m = Self::new(channels, hidden, 0)?;
        m.store.load_from(saved)?;
        Ok(m)
    }

    /// `x` is `[B, C, T]`; returns boundary probabilities `[B, 2, T]` and
    /// actionness `[B, 1, T]`.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<(Var, Var)> {
        Ok((run_branch(&self.boundary, tape, x)?, run_branch(&self.action, tape, x)?))
    }

    pub fn infer(&self, f: &FeatureSequence) -> Result<BoundaryScores> {
        if f.channels() != self.channels {
            return Err(Error::shape(
                "tem_forward",
                format!("model expects {} channels, features have {}", self.channels, f.channels()),
            ));
        }
        let t = f.len();
        let mut tape = Tape::new(&self.store);
        let x = tape.input(Tensor::new(vec![1, self.channels, t], f.channels_first())?);
        let (b, a) = self.forward(&mut tape, x)?;
        let bd = tape.value(b).data();
        Ok(BoundaryScores {
            start: bd[..t].to_vec(),
            end: bd[t..].to_vec(),
            action: tape.value(a).data().to_vec(),
        })
    }
}

/// `out[t][c] = f[t][c] * action[t]`.
pub fn suppress_background(f: &FeatureSequence, action: &[f64]) -> Result<FeatureSequence> {
    if action.len() != f.len() {
        return Err(Error::shape(
            "suppress_background",
            format!("{} actionness values for {} steps", action.len(), f.len()),
        ));
    }
    Ok(f.map_rows(|t, row, out| {
        for (o, v) in out.iter_mut().zip(row) {
            *o = v * action[t];
        }
    }))
}

pub struct TemSample {
    /// Channel-major features `[C, T]`.
    pub x: Vec<f64>,
    pub labels: FrameLabels,
}

pub fn tem_samples(ds: &Dataset, t_len: usize, cfg: &TemConfig) -> Vec<TemSample> {
    ds.annotations
        .iter()
        .map(|(vid, ann)| {
            let f = &ds.features[vid];
            let inst = ann.frame_instances(t_len, f.frame_rate_ratio);
            TemSample {
                x: f.channels_first(),
                labels: make_tem_labels(&inst, t_len, cfg.dilation),
            }
        })
        .collect()
}

/// `#neg / #pos`, capped; the cap also applies when there are no
/// positives.
pub fn balance_weight(labels: impl Iterator<Item = f64>, cap: f64) -> f64 {
    let (mut pos, mut n) = (0usize, 0usize);
    for v in labels {
        pos += (v > 0.5) as usize;
        n += 1;
    }
    if pos == 0 {
        cap
    } else {
        ((n - pos) as f64 / pos as f64).min(cap)
    }
}

/// Trains from `start_epoch` to the end of the schedule and returns the
/// per-epoch loss.
pub fn tem_train(
    model: &mut TemModel,
    adam: &mut AdamState,
    start_epoch: usize,
    samples: &[TemSample],
    cfg: &PipelineConfig,
    jobs: &Jobs,
) -> Result<Vec<f64>> {
    let t = cfg.t;
    let c = model.channels;
    let cap = cfg.tem.pos_weight_cap;
    let lp = Loop {
        tag: "tem",
        seed: cfg.seed,
        batch: cfg.tem.batch_videos,
        chunk: CHUNK_VIDEOS,
        schedule: &cfg.tem.schedule,
        jobs,
    };
    let arch = model.clone();
    lp.fit(&mut model.store, adam, start_epoch, samples.len(), |store, batch, chunk| {
        let pick = |f: fn(&FrameLabels) -> &Vec<f64>| {
            batch.iter().flat_map(move |&i| f(&samples[i].labels).iter().copied())
        };
        let pw = [
            balance_weight(pick(|l| &l.start), cap),
            balance_weight(pick(|l| &l.end), cap),
            balance_weight(pick(|l| &l.action), cap),
        ];
        let b = chunk.len();
        let mut x = Vec::with_capacity(b * c * t);
        let mut ys = Vec::with_capacity(b * t);
        let mut ye = Vec::with_capacity(b * t);
        let mut ya = Vec::with_capacity(b * t);
        for &i in chunk {
            let s = &samples[i];
            x.extend_from_slice(&s.x);
            ys.extend_from_slice(&s.labels.start);
            ye.extend_from_slice(&s.labels.end);
            ya.extend_from_slice(&s.labels.action);
        }
        let mut tape = Tape::new(store);
        let xv = tape.input(Tensor::new(vec![b, c, t], x)?);
        let (bd, act) = arch.forward(&mut tape, xv)?;
        let ps = tape.index_axis(bd, 1, 0)?;
        let pe = tape.index_axis(bd, 1, 1)?;
        let pa = tape.index_axis(act, 1, 0)?;
        let ls = tape.weighted_bce(ps, &Tensor::new(vec![b, t], ys)?, pw[0])?;
        let le = tape.weighted_bce(pe, &Tensor::new(vec![b, t], ye)?, pw[1])?;
        let la = tape.weighted_bce(pa, &Tensor::new(vec![b, t], ya)?, pw[2])?;
        let l = tape.add(ls, le)?;
        let loss = tape.add(l, la)?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    })
}
