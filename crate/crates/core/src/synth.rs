//! Synthetic untrimmed sequences with known action instances.
//!
//! Every video holds 1..=k non-overlapping instances of one class. Class `c`
//! owns channels `2c` (a plateau of height `amplitude` inside the action)
//! and `2c + 1` (a ramp from 0 to `amplitude` plus a short bump at each
//! boundary). All channels carry Gaussian noise of std `amplitude / snr`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{AnnotationSet, ClassScore, Dataset, FeatureSequence, Instance};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_train: usize,
    pub num_test: usize,
    pub t: usize,
    pub channels: usize,
    pub classes: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    /// Instance length `e - s` in frames.
    pub min_duration: usize,
    pub max_duration: usize,
    pub amplitude: f64,
    pub snr: f64,
    /// Frames kept free at both ends of the sequence.
    pub margin: usize,
    /// Minimum background frames between instances.
    pub min_gap: usize,
    pub frame_rate_ratio: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_train: 200,
            num_test: 50,
            t: 100,
            channels: 8,
            classes: 4,
            min_actions: 1,
            max_actions: 3,
            min_duration: 8,
            max_duration: 40,
            amplitude: 1.0,
            snr: 4.0,
            margin: 2,
            min_gap: 3,
            frame_rate_ratio: 1.0,
            seed: 42,
        }
    }
}

const MAX_TRIES: usize = 1000;

pub fn class_label(k: usize) -> String {
    format!("class_{k}")
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Random non-overlapping `(start, end)` frame pairs.
fn pack<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    for _ in 0..MAX_TRIES {
        let n = rng.random_range(cfg.min_actions..=cfg.max_actions);
        if n == 0 {
            return Ok(Vec::new());
        }
        let durs: Vec<usize> = (0..n)
            .map(|_| rng.random_range(cfg.min_duration..=cfg.max_duration))
            .collect();
        let needed = durs.iter().map(|d| d + 1).sum::<usize>() + (n - 1) * cfg.min_gap + 2 * cfg.margin;
        if needed > cfg.t {
            continue;
        }
        let slack = cfg.t - needed;
        let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=slack)).collect();
        cuts.sort_unstable();
        let mut out = Vec::with_capacity(n);
        let mut pos = cfg.margin;
        let mut used = 0;
        for (i, d) in durs.iter().enumerate() {
            pos += cuts[i] - used;
            used = cuts[i];
            out.push((pos, pos + d));
            pos += d + 1 + cfg.min_gap;
        }
        return Ok(out);
    }
    Err(Error::Infeasible(format!(
        "could not place {}..={} actions of {}..={} frames in T={} after {MAX_TRIES} tries",
        cfg.min_actions, cfg.max_actions, cfg.min_duration, cfg.max_duration, cfg.t
    )))
}

fn validate(cfg: &SynthConfig) -> Result<()> {
    if cfg.classes == 0 || 2 * cfg.classes > cfg.channels {
        return Err(Error::InvalidArgument(format!(
            "{} classes need at least {} channels, have {}",
            cfg.classes,
            2 * cfg.classes,
            cfg.channels
        )));
    }
    if cfg.min_actions > cfg.max_actions || cfg.min_duration > cfg.max_duration || cfg.min_duration == 0 {
        return Err(Error::InvalidArgument("empty action count or duration range".into()));
    }
    if !(cfg.snr > 0.0) || !(cfg.frame_rate_ratio > 0.0) || cfg.t < 2 {
        return Err(Error::InvalidArgument("snr, frame_rate_ratio must be positive and t >= 2".into()));
    }
    Ok(())
}

fn video<R: Rng>(cfg: &SynthConfig, id: String, rng: &mut R) -> Result<(AnnotationSet, FeatureSequence)> {
    let class = rng.random_range(0..cfg.classes);
    let spans = pack(cfg, rng)?;
    let (t_len, c) = (cfg.t, cfg.channels);
    let a = cfg.amplitude;
    let std = if cfg.snr.is_finite() { a / cfg.snr } else { 0.0 };
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut data: Vec<f64> = (0..t_len * c).map(|_| normal.sample(rng)).collect();
    let (plateau, ramp) = (2 * class, 2 * class + 1);
    for &(s, e) in &spans {
        for t in s..=e {
            data[t * c + plateau] += a;
            data[t * c + ramp] += a * (t - s) as f64 / (e - s) as f64;
        }
        for b in [s, e] {
            for t in b.saturating_sub(2)..=(b + 2).min(t_len - 1) {
                let d = t as f64 - b as f64;
                data[t * c + ramp] += a * (-0.5 * d * d).exp();
            }
        }
    }
    // Exactly representable in the f32 file format.
    for v in &mut data {
        *v = *v as f32 as f64;
    }
    let ratio = cfg.frame_rate_ratio;
    let label = class_label(class);
    let ann = AnnotationSet {
        video_id: id.clone(),
        duration: t_len as f64 * ratio,
        instances: spans
            .iter()
            .map(|&(s, e)| Instance {
                start: s as f64 * ratio,
                end: e as f64 * ratio,
                label: label.clone(),
            })
            .collect(),
        video_level_classes: vec![ClassScore { label, score: 1.0 }],
    };
    let seq = FeatureSequence::new(id, t_len, c, data, ratio)?;
    Ok((ann, seq))
}

fn split(cfg: &SynthConfig, n: usize, prefix: &str, stream: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, stream));
    let mut ds = Dataset {
        annotations: BTreeMap::new(),
        features: BTreeMap::new(),
    };
    for i in 0..n {
        let (ann, seq) = video(cfg, format!("{prefix}_{i:05}"), &mut rng)?;
        ds.annotations.insert(ann.video_id.clone(), ann);
        ds.features.insert(seq.video_id.clone(), seq);
    }
    Ok(ds)
}

/// Train and test splits.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    validate(cfg)?;
    Ok((
        split(cfg, cfg.num_train, "train", 0)?,
        split(cfg, cfg.num_test, "test", 1)?,
    ))
}
