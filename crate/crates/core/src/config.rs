//! Pipeline configuration. Every field has a default, and a JSON file only
//! needs the fields it changes relative to a preset.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::autograd::AdamConfig;
use crate::error::{Error, Result};
use crate::labeling::LabelScale;
use crate::pem::PemInput;
use crate::proposals::ScoreMode;
use crate::synth::SynthConfig;
use crate::vem::{EncoderKind, Fusion, VoteNorm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrStage {
    pub lr: f64,
    pub epochs: usize,
}

/// Piecewise-constant learning rate by epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LrSchedule(pub Vec<LrStage>);

impl LrSchedule {
    pub fn new(stages: &[(f64, usize)]) -> Self {
        Self(stages.iter().map(|&(lr, epochs)| LrStage { lr, epochs }).collect())
    }

    pub fn total_epochs(&self) -> usize {
        self.0.iter().map(|s| s.epochs).sum()
    }

    /// Learning rate for 0-based `epoch`; the last stage extends forever.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut acc = 0;
        for s in &self.0 {
            acc += s.epochs;
            if epoch < acc {
                return s.lr;
            }
        }
        self.0.last().map_or(0.0, |s| s.lr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemConfig {
    pub hidden: usize,
    pub schedule: LrSchedule,
    pub batch_videos: usize,
    /// Boundary label half-width as a fraction of the instance length.
    pub dilation: f64,
    pub pos_weight_cap: f64,
    /// Multiply VEM input by actionness. Off means identity suppression.
    pub use_actionness: bool,
    /// Include the naive boundary scores in the confidence fusion.
    pub use_boundary: bool,
}

impl Default for TemConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            schedule: LrSchedule::new(&[(1e-4, 10), (1e-5, 5)]),
            batch_videos: 16,
            dilation: 0.05,
            pos_weight_cap: 100.0,
            use_actionness: true,
            use_boundary: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PemConfig {
    pub hidden: usize,
    pub schedule: LrSchedule,
    pub batch: usize,
    pub input: PemInput,
    pub max_per_video: usize,
    /// Ground-truth jitter as a fraction of the instance length.
    pub jitter: f64,
    pub jitter_copies: usize,
}

impl Default for PemConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            schedule: LrSchedule::new(&[(1e-4, 10), (1e-5, 5)]),
            batch: 256,
            input: PemInput::Actionness,
            max_per_video: 500,
            jitter: 0.1,
            jitter_copies: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VemConfig {
    pub encoder: EncoderKind,
    pub conv_channels: usize,
    pub hidden: usize,
    pub schedule: LrSchedule,
    pub batch: usize,
    pub label_scale: LabelScale,
    /// Frames between a boundary frame and the zero crossing of its
    /// relative-distance labels.
    pub label_offset: f64,
    /// Loss weight of windows from videos without instances.
    pub empty_weight: f64,
    pub vote_norm: VoteNorm,
    pub fusion: Fusion,
}

impl Default for VemConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Lstm,
            conv_channels: 64,
            hidden: 128,
            schedule: LrSchedule::new(&[(1e-4, 10), (1e-5, 5)]),
            batch: 512,
            label_scale: LabelScale::default(),
            label_offset: 0.5,
            empty_weight: 0.1,
            vote_norm: VoteNorm::MeanPerWindow,
            fusion: Fusion::MinMaxMean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preset: String,
    /// Fixed sequence length after rescaling.
    pub t: usize,
    /// Window lengths whose voting scores are fused.
    pub windows: Vec<usize>,
    pub xi: f64,
    pub tau: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub top_k: usize,
    pub top_c: usize,
    pub score_mode: ScoreMode,
    pub seed: u64,
    /// Samples per gradient work unit. Fixed so results do not depend on
    /// the worker count.
    pub chunk: usize,
    pub rescale: bool,
    pub adam: AdamConfig,
    pub tem: TemConfig,
    pub pem: PemConfig,
    pub vem: VemConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::activitynet()
    }
}

impl PipelineConfig {
    pub fn activitynet() -> Self {
        Self {
            preset: "activitynet".into(),
            t: 100,
            windows: vec![15, 5],
            xi: 0.3,
            tau: 100,
            alpha: 0.6,
            sigma: 0.5,
            top_k: 200,
            top_c: 1,
            score_mode: ScoreMode::Full,
            seed: 42,
            chunk: 64,
            rescale: true,
            adam: AdamConfig::default(),
            tem: TemConfig::default(),
            pem: PemConfig::default(),
            vem: VemConfig::default(),
            synth: SynthConfig::default(),
        }
    }

    pub fn thumos() -> Self {
        let schedule = LrSchedule::new(&[(1e-3, 10), (1e-4, 5)]);
        let mut c = Self::activitynet();
        c.preset = "thumos".into();
        c.t = 750;
        c.windows = vec![10, 5];
        c.tau = 70;
        c.top_k = 400;
        c.top_c = 2;
        c.tem.schedule = schedule.clone();
        c.pem.schedule = schedule.clone();
        c.vem.schedule = schedule;
        c.vem.batch = 256;
        c.synth.t = 750;
        c
    }

    /// Desk-scale operating point for the synthetic dataset: the
    /// ActivityNet geometry with the faster THUMOS learning rates and
    /// smaller networks.
    pub fn synthetic() -> Self {
        let mut c = Self::activitynet();
        c.preset = "synthetic".into();
        c.tem.hidden = 32;
        c.tem.schedule = LrSchedule::new(&[(1e-3, 20), (1e-4, 5)]);
        c.tem.batch_videos = 16;
        c.pem.schedule = LrSchedule::new(&[(1e-3, 20), (1e-4, 5)]);
        c.vem.conv_channels = 32;
        c.vem.hidden = 32;
        c.vem.schedule = LrSchedule::new(&[(1e-3, 10), (1e-4, 3)]);
        c.vem.batch = 256;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "activitynet" | "anet" => Ok(Self::activitynet()),
            "thumos" => Ok(Self::thumos()),
            "synthetic" => Ok(Self::synthetic()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset `{other}` (expected activitynet, thumos, synthetic)"
            ))),
        }
    }

    /// Applies the fields present in `json` on top of `base`. A top-level
    /// `preset` field in `json` replaces `base` with that preset first.
    pub fn from_json_over(base: &Self, json: &str) -> Result<Self> {
        let overlay: Value = serde_json::from_str(json)
            .map_err(|e| Error::InvalidArgument(format!("config JSON: {e}")))?;
        let base = match overlay.get("preset").and_then(Value::as_str) {
            Some(name) => Self::preset(name)?,
            None => base.clone(),
        };
        let mut merged = serde_json::to_value(&base).expect("config serializes");
        merge(&mut merged, overlay);
        let cfg: Self = serde_json::from_value(merged)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.t < 2 {
            return bad(format!("t must be >= 2, got {}", self.t));
        }
        if self.windows.is_empty() || self.windows.iter().any(|&j| j < 2 || j > self.t) {
            return bad(format!("window lengths {:?} must lie in 2..=t", self.windows));
        }
        if !(0.0..1.0).contains(&self.xi) {
            return bad(format!("xi must be in [0, 1), got {}", self.xi));
        }
        if self.sigma <= 0.0 {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.chunk == 0 || self.vem.batch == 0 || self.pem.batch == 0 || self.tem.batch_videos == 0 {
            return bad("batch and chunk sizes must be positive".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_string(self).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
