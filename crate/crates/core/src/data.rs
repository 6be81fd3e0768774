//! Videos, annotations, feature sequences and predictions, plus their file
//! formats.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"TVNF";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub score: f64,
}

/// Ground truth for one video. Times are in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationSet {
    pub video_id: String,
    pub duration: f64,
    pub instances: Vec<Instance>,
    /// Ranked video-level class labels, best first.
    pub video_level_classes: Vec<ClassScore>,
}

pub type Annotations = BTreeMap<String, AnnotationSet>;

/// An action instance in feature-step indices, both ends inclusive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameInstance {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl AnnotationSet {
    /// Instances converted to feature indices for a sequence of `t_len`
    /// steps of `ratio` seconds. Instances that collapse to a single index
    /// are dropped.
    pub fn frame_instances(&self, t_len: usize, ratio: f64) -> Vec<FrameInstance> {
        let mut out: Vec<FrameInstance> = self
            .instances
            .iter()
            .filter_map(|inst| {
                let start = sec_to_index(inst.start, ratio, t_len);
                let end = sec_to_index(inst.end, ratio, t_len);
                (start < end).then(|| FrameInstance {
                    start,
                    end,
                    label: inst.label.clone(),
                })
            })
            .collect();
        out.sort_by_key(|f| (f.start, f.end));
        out
    }
}

/// Nearest feature index for a time in seconds, clamped to the sequence.
pub fn sec_to_index(sec: f64, ratio: f64, t_len: usize) -> usize {
    let i = (sec / ratio).round();
    if i <= 0.0 {
        0
    } else {
        (i as usize).min(t_len.saturating_sub(1))
    }
}

pub fn index_to_sec(index: f64, ratio: f64) -> f64 {
    index * ratio
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    segment: [f64; 2],
    label: String,
}

#[derive(Serialize, Deserialize)]
struct RawVideo {
    duration: f64,
    #[serde(default)]
    annotations: Vec<RawInstance>,
    #[serde(default)]
    video_classes: Vec<ClassScore>,
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Annotations> {
    let raw: BTreeMap<String, RawVideo> =
        serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    let mut out = Annotations::new();
    for (vid, video) in raw {
        if !(video.duration.is_finite() && video.duration > 0.0) {
            return Err(Error::format(
                path,
                format!("video `{vid}`: field `duration` must be positive, got {}", video.duration),
            ));
        }
        let mut instances = Vec::with_capacity(video.annotations.len());
        for (k, inst) in video.annotations.into_iter().enumerate() {
            let [mut s, mut e] = inst.segment;
            if !(s.is_finite() && e.is_finite()) {
                return Err(Error::format(
                    path,
                    format!("video `{vid}`: annotations[{k}].segment is not finite"),
                ));
            }
            if s < 0.0 {
                warn!("video `{vid}`: annotations[{k}] starts before 0, clamped");
                s = 0.0;
            }
            if e > video.duration {
                warn!("video `{vid}`: annotations[{k}] ends after the video, clamped");
                e = video.duration;
            }
            if s >= e {
                warn!("video `{vid}`: annotations[{k}] has start >= end, skipped");
                continue;
            }
            instances.push(Instance {
                start: s,
                end: e,
                label: inst.label,
            });
        }
        for (k, c) in video.video_classes.iter().enumerate() {
            if !c.score.is_finite() {
                return Err(Error::format(
                    path,
                    format!("video `{vid}`: video_classes[{k}].score is not finite"),
                ));
            }
        }
        out.insert(
            vid.clone(),
            AnnotationSet {
                video_id: vid,
                duration: video.duration,
                instances,
                video_level_classes: video.video_classes,
            },
        );
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Annotations> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path)
}

pub fn annotations_to_json(anns: &Annotations) -> String {
    let raw: BTreeMap<&str, RawVideo> = anns
        .iter()
        .map(|(vid, a)| {
            let v = RawVideo {
                duration: a.duration,
                annotations: a
                    .instances
                    .iter()
                    .map(|i| RawInstance {
                        segment: [i.start, i.end],
                        label: i.label.clone(),
                    })
                    .collect(),
                video_classes: a.video_level_classes.clone(),
            };
            (vid.as_str(), v)
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("annotation serialization cannot fail")
}

pub fn save_annotations(path: &Path, anns: &Annotations) -> Result<()> {
    std::fs::write(path, annotations_to_json(anns)).map_err(|e| Error::io(path, e))
}

/// A `t_len x channels` feature matrix, row-major by time step.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    t_len: usize,
    channels: usize,
    data: Vec<f64>,
    /// Seconds per feature step.
    pub frame_rate_ratio: f64,
}

impl FeatureSequence {
    pub fn new(
        video_id: impl Into<String>,
        t_len: usize,
        channels: usize,
        data: Vec<f64>,
        frame_rate_ratio: f64,
    ) -> Result<Self> {
        if data.len() != t_len * channels {
            return Err(Error::shape(
                "feature_sequence",
                format!("{} values for {t_len}x{channels}", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature value at step {}, channel {}",
                i / channels.max(1),
                i % channels.max(1)
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            t_len,
            channels,
            data,
            frame_rate_ratio,
        })
    }

    pub fn len(&self) -> usize {
        self.t_len
    }

    pub fn is_empty(&self) -> bool {
        self.t_len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    /// Channel-major copy, `[channels, t_len]`.
    pub fn channels_first(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        for t in 0..self.t_len {
            for c in 0..self.channels {
                out[c * self.t_len + t] = self.data[t * self.channels + c];
            }
        }
        out
    }

    /// Sets the time scale from the video duration in seconds.
    pub fn with_duration(mut self, duration: f64) -> Self {
        self.frame_rate_ratio = duration / self.t_len as f64;
        self
    }

    pub fn map_rows(&self, mut f: impl FnMut(usize, &[f64], &mut [f64])) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for t in 0..self.t_len {
            f(t, self.row(t), &mut data[t * self.channels..(t + 1) * self.channels]);
        }
        Self {
            data,
            ..self.clone()
        }
    }
}

/// Linear interpolation onto `target` evenly spaced points that include both
/// endpoints.
pub fn rescale_sequence(seq: &FeatureSequence, target: usize) -> Result<FeatureSequence> {
    if target < 2 {
        return Err(Error::InvalidArgument(format!("rescale target must be >= 2, got {target}")));
    }
    if seq.t_len < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot rescale a sequence of length {}",
            seq.t_len
        )));
    }
    if target == seq.t_len {
        return Ok(seq.clone());
    }
    let c = seq.channels;
    let step = (seq.t_len - 1) as f64 / (target - 1) as f64;
    let mut data = Vec::with_capacity(target * c);
    for i in 0..target {
        let pos = if i == target - 1 { (seq.t_len - 1) as f64 } else { i as f64 * step };
        let lo = (pos.floor() as usize).min(seq.t_len - 2);
        let w = pos - lo as f64;
        for ch in 0..c {
            let a = seq.get(lo, ch);
            let b = seq.get(lo + 1, ch);
            data.push(a + (b - a) * w);
        }
    }
    FeatureSequence::new(seq.video_id.clone(), target, c, data, seq.frame_rate_ratio * step)
}

pub fn write_features_tvnf<W: Write>(mut w: W, seq: &FeatureSequence) -> std::io::Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(seq.t_len as u32).to_le_bytes())?;
    w.write_all(&(seq.channels as u32).to_le_bytes())?;
    for &v in &seq.data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()
}

pub fn save_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features_tvnf(BufWriter::new(f), seq).map_err(|e| Error::io(path, e))
}

fn read_tvnf(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 16 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::format(path, "missing TVNF header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(Error::format(path, format!("unsupported feature version {version}")));
    }
    let (t, c) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != t * c * 4 {
        return Err(Error::format(
            path,
            format!("header says {t}x{c} but body has {} bytes", body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok((t, c, data))
}

fn read_csv(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut channels = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::format(path, format!("line {}: {e}", line + 1))),
        };
        match channels {
            None => channels = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(Error::format(
                    path,
                    format!("line {}: expected {c} values, got {}", line + 1, values.len()),
                ))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    Ok((rows, channels.unwrap_or(0), data))
}

/// Loads a TVNF or CSV feature file. With `rescale`, a length different from
/// `expected_t` is interpolated to it; otherwise it is an error.
pub fn load_features(
    path: &Path,
    expected_t: Option<usize>,
    expected_c: Option<usize>,
    rescale: bool,
) -> Result<FeatureSequence> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (t, c, data) = if is_csv { read_csv(path, &bytes)? } else { read_tvnf(path, &bytes)? };
    if let Some(ec) = expected_c {
        if ec != c {
            return Err(Error::format(path, format!("expected {ec} channels, found {c}")));
        }
    }
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let seq = FeatureSequence::new(video_id, t, c, data, 1.0).map_err(|e| match e {
        Error::NonFinite(msg) => Error::format(path, format!("non-finite {msg}")),
        other => other,
    })?;
    match expected_t {
        Some(et) if et != t && rescale => rescale_sequence(&seq, et),
        Some(et) if et != t => Err(Error::format(
            path,
            format!("expected length {et}, found {t} (enable rescaling to resample)"),
        )),
        _ => Ok(seq),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub segment: [f64; 2],
    pub score: f64,
    pub label: String,
}

pub type Predictions = BTreeMap<String, Vec<Prediction>>;

pub fn save_predictions(path: &Path, preds: &Predictions) -> Result<()> {
    let text = serde_json::to_string_pretty(preds).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: &Path) -> Result<Predictions> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let preds: Predictions = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    for (vid, list) in &preds {
        for (k, p) in list.iter().enumerate() {
            if !(p.segment[0].is_finite() && p.segment[1].is_finite() && p.score.is_finite()) {
                return Err(Error::format(path, format!("video `{vid}`: prediction {k} is not finite")));
            }
        }
    }
    Ok(preds)
}

/// Annotations plus one feature sequence per annotated video. On disk:
/// `annotations.json` and `features/<video_id>.tvnf` (or `.csv`).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub annotations: Annotations,
    pub features: BTreeMap<String, FeatureSequence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let feat_dir = dir.join("features");
        std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        save_annotations(&dir.join("annotations.json"), &self.annotations)?;
        for (vid, seq) in &self.features {
            save_features(&feat_dir.join(format!("{vid}.tvnf")), seq)?;
        }
        Ok(())
    }

    /// Loads every annotated video, rescaling to `t_len` when `rescale` is
    /// set. The time scale of each sequence comes from its annotated
    /// duration.
    pub fn load(dir: &Path, t_len: usize, rescale: bool) -> Result<Self> {
        let annotations = load_annotations(&dir.join("annotations.json"))?;
        let feat_dir = dir.join("features");
        let mut features = BTreeMap::new();
        for (vid, ann) in &annotations {
            let bin = feat_dir.join(format!("{vid}.tvnf"));
            let path = if bin.exists() { bin } else { feat_dir.join(format!("{vid}.csv")) };
            let mut seq = load_features(&path, None, None, false)?.with_duration(ann.duration);
            seq.video_id = vid.clone();
            if seq.len() != t_len {
                if !rescale {
                    return Err(Error::format(
                        &path,
                        format!("expected length {t_len}, found {} (enable rescaling)", seq.len()),
                    ));
                }
                seq = rescale_sequence(&seq, t_len)?;
            }
            features.insert(vid.clone(), seq);
        }
        Ok(Self { annotations, features })
    }
}
