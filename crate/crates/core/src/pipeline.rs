//! Staged training (TEM, then PEM, then VEM), checkpoint layout, inference
//! and ablation sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{load_checkpoint, save_checkpoint, AdamState, ParamStore, Tensor};
use crate::config::PipelineConfig;
use crate::data::{AnnotationSet, Dataset, FeatureSequence, Predictions};
use crate::error::{Error, Result};
use crate::eval::{anet_thresholds, compute_map, EvalReport};
use crate::labeling::{make_pem_labels, make_window_labels, WindowLabels};
use crate::par::Jobs;
use crate::pem::{pem_train, PemModel};
use crate::proposals::{
    assign_classes, extract_candidates, generate_proposals, pair_proposals, ProposalParams,
    ScoreMode, ScoredProposal,
};
use crate::tem::{suppress_background, tem_samples, tem_train, BoundaryScores, TemModel};
use crate::train::stream_seed;
use crate::vem::{
    encoder_name, min_max, vem_train_encoder, voting_scores, Boundary, EncoderKind, VemModel,
    VotingScores,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const META_FILE: &str = "model.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Tem,
    Pem,
    Vem,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Tem, Stage::Pem, Stage::Vem];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Tem => "tem",
            Stage::Pem => "pem",
            Stage::Vem => "vem",
        }
    }

    fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Tem => &[],
            Stage::Pem => &[Stage::Tem],
            Stage::Vem => &[Stage::Tem, Stage::Pem],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}` (expected tem, pem, vem, all)")))
    }
}

/// Written next to the checkpoints; inference refuses mismatching data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub version: String,
    pub channels: usize,
    pub t: usize,
    pub windows: Vec<usize>,
    pub encoder: EncoderKind,
    pub config_hash: String,
}

pub fn dataset_channels(ds: &Dataset) -> Result<usize> {
    let mut it = ds.features.values();
    let first = it
        .next()
        .ok_or_else(|| Error::Pipeline("dataset has no videos".into()))?
        .channels();
    if let Some(f) = it.find(|f| f.channels() != first) {
        return Err(Error::Pipeline(format!(
            "video `{}` has {} channels, others have {first}",
            f.video_id,
            f.channels()
        )));
    }
    Ok(first)
}

fn init_seed(cfg: &PipelineConfig, tag: &str) -> u64 {
    stream_seed(cfg.seed, &format!("init.{tag}"), 0)
}

fn pack_opt(out: &mut ParamStore, tag: &str, adam: &AdamState, params: &ParamStore, epochs_done: usize) {
    for (name, t) in adam.to_store(params).iter() {
        out.add(format!("{tag}/{name}"), t.clone());
    }
    out.add(format!("{tag}/epoch"), Tensor::scalar(epochs_done as f64));
}

fn unpack_opt(saved: &ParamStore, tag: &str, params: &ParamStore, cfg: &PipelineConfig) -> Result<(AdamState, usize)> {
    let prefix = format!("{tag}/");
    let mut inner = ParamStore::new();
    let mut epoch = None;
    for (name, t) in saved.iter() {
        if let Some(rest) = name.strip_prefix(&prefix) {
            if rest == "epoch" {
                epoch = Some(t.item() as usize);
            } else {
                inner.add(rest, t.clone());
            }
        }
    }
    let epoch = epoch.ok_or_else(|| Error::Checkpoint(format!("no optimizer state for `{tag}`")))?;
    Ok((AdamState::from_store(params, &inner, cfg.adam)?, epoch))
}

/// Parameters and optimizer state of one stage.
#[derive(Clone, Debug)]
pub struct StageState {
    pub params: ParamStore,
    pub optimizer: ParamStore,
}

/// Loss per epoch for each trained unit, with the first epoch index.
pub type Curves = Vec<(String, usize, Vec<f64>)>;

pub fn train_tem(
    cfg: &PipelineConfig,
    ds: &Dataset,
    jobs: &Jobs,
    resume: Option<&StageState>,
) -> Result<(TemModel, StageState, Curves)> {
    let c = dataset_channels(ds)?;
    let mut model = TemModel::new(c, cfg.tem.hidden, init_seed(cfg, "tem"))?;
    let (mut adam, start) = match resume {
        Some(st) => {
            model.store.load_from(&st.params)?;
            unpack_opt(&st.optimizer, "tem", &model.store, cfg)?
        }
        None => (AdamState::new(&model.store, cfg.adam), 0),
    };
    let samples = tem_samples(ds, cfg.t, &cfg.tem);
    let curve = tem_train(&mut model, &mut adam, start, &samples, cfg, jobs)?;
    let mut optimizer = ParamStore::new();
    pack_opt(&mut optimizer, "tem", &adam, &model.store, start + curve.len());
    let state = StageState {
        params: model.store.clone(),
        optimizer,
    };
    Ok((model, state, vec![("tem".into(), start, curve)]))
}

/// Proposals `(s, e)` in frames for PEM training: pairs of TEM boundary
/// peaks, exact ground truth and jittered copies of it, at most
/// `max_per_video`.
pub fn pem_training_proposals(
    cfg: &PipelineConfig,
    ann: &AnnotationSet,
    f: &FeatureSequence,
    bounds: &BoundaryScores,
    video_index: usize,
) -> Vec<(f64, f64)> {
    let t = f.len();
    let inst = ann.frame_instances(t, f.frame_rate_ratio);
    let starts = extract_candidates(&min_max(&bounds.start), cfg.xi);
    let ends = extract_candidates(&min_max(&bounds.end), cfg.xi);
    let mut props: Vec<(f64, f64)> = pair_proposals(&starts, &ends, cfg.tau)
        .into_iter()
        .map(|(s, e)| (s as f64, e as f64))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, "pem.proposals", video_index));
    let last = (t - 1) as f64;
    for g in &inst {
        let (s, e) = (g.start as f64, g.end as f64);
        props.push((s, e));
        let len = e - s;
        for _ in 0..cfg.pem.jitter_copies {
            let js = (s + rng.random_range(-1.0..=1.0) * cfg.pem.jitter * len).round().clamp(0.0, last);
            let je = (e + rng.random_range(-1.0..=1.0) * cfg.pem.jitter * len).round().clamp(0.0, last);
            if je - js >= 1.0 {
                props.push((js, je));
            }
        }
    }
    if props.len() > cfg.pem.max_per_video {
        props.shuffle(&mut rng);
        props.truncate(cfg.pem.max_per_video);
    }
    props
}

pub fn train_pem(
    cfg: &PipelineConfig,
    ds: &Dataset,
    tem: &TemModel,
    jobs: &Jobs,
    resume: Option<&StageState>,
) -> Result<(PemModel, StageState, Curves)> {
    let c = dataset_channels(ds)?;
    let mut model = PemModel::new(cfg.pem.input, c, cfg.pem.hidden, init_seed(cfg, "pem"));
    let (mut adam, start) = match resume {
        Some(st) => {
            model.store.load_from(&st.params)?;
            unpack_opt(&st.optimizer, "pem", &model.store, cfg)?
        }
        None => (AdamState::new(&model.store, cfg.adam), 0),
    };
    let videos: Vec<(usize, &AnnotationSet)> = ds.annotations.values().enumerate().collect();
    let per_video = jobs.try_map(&videos, |&(i, ann)| {
        let f = &ds.features[&ann.video_id];
        let bounds = tem.infer(f)?;
        let props = pem_training_proposals(cfg, ann, f, &bounds, i);
        let targets = make_pem_labels(&props, &ann.frame_instances(f.len(), f.frame_rate_ratio));
        let feats: Vec<Vec<f64>> = props.iter().map(|&(s, e)| model.features(s, e, &bounds, f)).collect();
        Ok((feats, targets))
    })?;
    let (mut feats, mut targets) = (Vec::new(), Vec::new());
    for (f, t) in per_video {
        feats.extend(f);
        targets.extend(t);
    }
    info!("pem: {} training proposals", feats.len());
    let curve = pem_train(&mut model, &mut adam, start, &feats, &targets, cfg, jobs)?;
    let mut optimizer = ParamStore::new();
    pack_opt(&mut optimizer, "pem", &adam, &model.store, start + curve.len());
    let state = StageState {
        params: model.store.clone(),
        optimizer,
    };
    Ok((model, state, vec![("pem".into(), start, curve)]))
}

/// VEM input: features, multiplied by actionness unless switched off.
pub fn vem_input(cfg: &PipelineConfig, f: &FeatureSequence, bounds: &BoundaryScores) -> Result<FeatureSequence> {
    if cfg.tem.use_actionness {
        suppress_background(f, &bounds.action)
    } else {
        Ok(f.clone())
    }
}

pub fn train_vem(
    cfg: &PipelineConfig,
    ds: &Dataset,
    tem: &TemModel,
    jobs: &Jobs,
    resume: Option<&StageState>,
) -> Result<(VemModel, StageState, Curves)> {
    let c = dataset_channels(ds)?;
    let mut model = VemModel::new(cfg, c, init_seed(cfg, "vem"))?;
    if let Some(st) = resume {
        model = VemModel::from_store(cfg, c, &st.params)?;
    }
    let anns: Vec<&AnnotationSet> = ds.annotations.values().collect();
    let inputs = jobs.try_map(&anns, |ann| {
        let f = &ds.features[&ann.video_id];
        Ok(vem_input(cfg, f, &tem.infer(f)?)?.channels_first())
    })?;
    let mut optimizer = ParamStore::new();
    let mut curves = Vec::new();
    for scale in &mut model.scales {
        let j = scale.j;
        let labels: Vec<Vec<WindowLabels>> = anns
            .iter()
            .map(|ann| {
                let f = &ds.features[&ann.video_id];
                let inst = ann.frame_instances(f.len(), f.frame_rate_ratio);
                make_window_labels(
                    &inst,
                    f.len(),
                    j,
                    1,
                    cfg.vem.label_scale,
                    cfg.vem.label_offset,
                    cfg.vem.empty_weight,
                )
            })
            .collect::<Result<_>>()?;
        let windows: Vec<(usize, &WindowLabels)> = labels
            .iter()
            .enumerate()
            .flat_map(|(v, ws)| ws.iter().map(move |w| (v, w)))
            .collect();
        for b in [Boundary::Start, Boundary::End] {
            let tag = encoder_name(j, b);
            let enc = scale.encoder_mut(b);
            let (mut adam, start) = match resume {
                Some(st) => unpack_opt(&st.optimizer, &tag, &enc.store, cfg)?,
                None => (AdamState::new(&enc.store, cfg.adam), 0),
            };
            let curve = vem_train_encoder(enc, &mut adam, start, &inputs, cfg.t, &windows, b, cfg, jobs)?;
            pack_opt(&mut optimizer, &tag, &adam, &enc.store, start + curve.len());
            curves.push((tag, start, curve));
        }
    }
    let state = StageState {
        params: model.to_store(),
        optimizer,
    };
    Ok((model, state, curves))
}

#[derive(Clone, Debug)]
pub struct Models {
    pub channels: usize,
    pub tem: TemModel,
    pub pem: PemModel,
    pub vem: VemModel,
}

/// Per-video scores that do not depend on proposal parameters.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub video_id: String,
    pub bounds: BoundaryScores,
    pub votes: VotingScores,
}

pub fn analyze(cfg: &PipelineConfig, models: &Models, f: &FeatureSequence) -> Result<Analysis> {
    if f.channels() != models.channels {
        return Err(Error::Pipeline(format!(
            "video `{}` has {} channels but the models were trained on {}",
            f.video_id,
            f.channels(),
            models.channels
        )));
    }
    let bounds = models.tem.infer(f)?;
    let input = vem_input(cfg, f, &bounds)?;
    let votes = voting_scores(&models.vem, &input, cfg.vem.vote_norm, cfg.vem.fusion)?;
    Ok(Analysis {
        video_id: f.video_id.clone(),
        bounds,
        votes,
    })
}

pub fn proposal_params(cfg: &PipelineConfig) -> ProposalParams {
    ProposalParams {
        xi: cfg.xi,
        tau: cfg.tau,
        alpha: cfg.alpha,
        sigma: cfg.sigma,
        top_k: cfg.top_k,
        mode: cfg.score_mode,
        use_boundary: cfg.tem.use_boundary,
    }
}

pub fn propose(
    cfg: &PipelineConfig,
    models: &Models,
    a: &Analysis,
    f: &FeatureSequence,
) -> Result<Vec<ScoredProposal>> {
    let pem = |pairs: &[(usize, usize)]| {
        let feats: Vec<f64> = pairs
            .iter()
            .flat_map(|&(s, e)| models.pem.features(s as f64, e as f64, &a.bounds, f))
            .collect();
        models.pem.score_batch(feats, pairs.len())
    };
    generate_proposals(&a.votes, &a.bounds, pem, &proposal_params(cfg))
}

pub fn analyze_dataset(cfg: &PipelineConfig, models: &Models, ds: &Dataset, jobs: &Jobs) -> Result<Vec<Analysis>> {
    let seqs: Vec<&FeatureSequence> = ds.features.values().collect();
    jobs.try_map(&seqs, |f| analyze(cfg, models, f))
}

pub fn predict_from(
    cfg: &PipelineConfig,
    models: &Models,
    ds: &Dataset,
    analyses: &[Analysis],
    jobs: &Jobs,
) -> Result<Predictions> {
    let lists = jobs.try_map(analyses, |a| {
        let f = &ds.features[&a.video_id];
        let classes = ds
            .annotations
            .get(&a.video_id)
            .map(|x| x.video_level_classes.as_slice())
            .unwrap_or(&[]);
        let props = propose(cfg, models, a, f)?;
        Ok(assign_classes(&props, classes, cfg.top_c, f.frame_rate_ratio))
    })?;
    Ok(analyses.iter().map(|a| a.video_id.clone()).zip(lists).collect())
}

pub fn infer_dataset(cfg: &PipelineConfig, models: &Models, ds: &Dataset, jobs: &Jobs) -> Result<Predictions> {
    let analyses = analyze_dataset(cfg, models, ds, jobs)?;
    predict_from(cfg, models, ds, &analyses, jobs)
}

/// Checkpoint directory layout: `<stage>.tvnc`, `<stage>.opt.tvnc`,
/// `<stage>_loss.csv` and `model.json`.
#[derive(Clone, Debug)]
pub struct CheckpointDir(pub PathBuf);

impl CheckpointDir {
    pub fn params_path(&self, stage: Stage) -> PathBuf {
        self.0.join(format!("{stage}.tvnc"))
    }

    pub fn optimizer_path(&self, stage: Stage) -> PathBuf {
        self.0.join(format!("{stage}.opt.tvnc"))
    }

    pub fn loss_path(&self, stage: Stage) -> PathBuf {
        self.0.join(format!("{stage}_loss.csv"))
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.params_path(stage).exists()
    }

    pub fn save_stage(&self, stage: Stage, st: &StageState) -> Result<()> {
        std::fs::create_dir_all(&self.0).map_err(|e| Error::io(&self.0, e))?;
        save_checkpoint(&self.params_path(stage), &st.params)?;
        save_checkpoint(&self.optimizer_path(stage), &st.optimizer)
    }

    pub fn load_stage(&self, stage: Stage) -> Result<StageState> {
        if !self.has(stage) {
            return Err(Error::Pipeline(format!(
                "missing {stage} checkpoint at {}; run `train --stage {stage}` first",
                self.params_path(stage).display()
            )));
        }
        Ok(StageState {
            params: load_checkpoint(&self.params_path(stage))?,
            optimizer: load_checkpoint(&self.optimizer_path(stage))?,
        })
    }

    pub fn meta(&self) -> Result<ModelMeta> {
        let p = self.0.join(META_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&p, e))
    }

    pub fn write_meta(&self, meta: &ModelMeta) -> Result<()> {
        let p = self.0.join(META_FILE);
        std::fs::create_dir_all(&self.0).map_err(|e| Error::io(&self.0, e))?;
        let text = serde_json::to_string_pretty(meta).expect("meta serializes");
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    /// Appends `unit,epoch,loss` rows; a fresh run (first epoch 0)
    /// truncates the file.
    pub fn write_curves(&self, stage: Stage, curves: &Curves) -> Result<()> {
        use std::io::Write;
        let p = self.loss_path(stage);
        let fresh = curves.iter().all(|(_, start, _)| *start == 0);
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&p)
            .map_err(|e| Error::io(&p, e))?;
        let mut text = String::new();
        if fresh {
            text.push_str("unit,epoch,loss\n");
        }
        for (unit, start, curve) in curves {
            for (i, l) in curve.iter().enumerate() {
                text.push_str(&format!("{unit},{},{l:.10}\n", start + i + 1));
            }
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&p, e))
    }

    pub fn load_models(&self, cfg: &PipelineConfig) -> Result<Models> {
        let meta = self.meta()?;
        if meta.t != cfg.t || meta.windows != cfg.windows || meta.encoder != cfg.vem.encoder {
            return Err(Error::Pipeline(format!(
                "checkpoint was trained with t={}, windows={:?}, encoder={:?}; config has t={}, windows={:?}, encoder={:?}",
                meta.t, meta.windows, meta.encoder, cfg.t, cfg.windows, cfg.vem.encoder
            )));
        }
        let c = meta.channels;
        let tem = TemModel::from_store(c, cfg.tem.hidden, &self.load_stage(Stage::Tem)?.params)?;
        let pem = PemModel::from_store(cfg.pem.input, c, cfg.pem.hidden, &self.load_stage(Stage::Pem)?.params)?;
        let vem = VemModel::from_store(cfg, c, &self.load_stage(Stage::Vem)?.params)?;
        Ok(Models { channels: c, tem, pem, vem })
    }
}

/// Trains `stage` into `dir`, loading prerequisite stages from it. With
/// `resume`, training continues from the stage's saved optimizer state.
pub fn train_stage(
    stage: Stage,
    cfg: &PipelineConfig,
    ds: &Dataset,
    dir: &CheckpointDir,
    jobs: &Jobs,
    resume: bool,
) -> Result<Curves> {
    for &pre in stage.prerequisites() {
        if !dir.has(pre) {
            return Err(Error::Pipeline(format!(
                "stage {stage} needs a trained {pre} checkpoint in {}; run `train --stage {pre}` first",
                dir.0.display()
            )));
        }
    }
    let channels = dataset_channels(ds)?;
    if stage == Stage::Tem {
        dir.write_meta(&ModelMeta {
            version: VERSION.into(),
            channels,
            t: cfg.t,
            windows: cfg.windows.clone(),
            encoder: cfg.vem.encoder,
            config_hash: cfg.hash(),
        })?;
    } else if dir.meta()?.channels != channels {
        return Err(Error::Pipeline("dataset channels differ from the TEM checkpoint".into()));
    }
    let previous = if resume { Some(dir.load_stage(stage)?) } else { None };
    let tem = || -> Result<TemModel> {
        TemModel::from_store(channels, cfg.tem.hidden, &dir.load_stage(Stage::Tem)?.params)
    };
    let (state, curves) = match stage {
        Stage::Tem => {
            let (_, st, c) = train_tem(cfg, ds, jobs, previous.as_ref())?;
            (st, c)
        }
        Stage::Pem => {
            let (_, st, c) = train_pem(cfg, ds, &tem()?, jobs, previous.as_ref())?;
            (st, c)
        }
        Stage::Vem => {
            let (_, st, c) = train_vem(cfg, ds, &tem()?, jobs, previous.as_ref())?;
            (st, c)
        }
    };
    dir.save_stage(stage, &state)?;
    dir.write_curves(stage, &curves)?;
    Ok(curves)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    /// Actionness suppression and boundary scores on and off.
    TemParts,
    Alpha,
    Window,
    Tau,
    Xi,
    Encoder,
}

impl Sweep {
    pub const NAMES: [&'static str; 6] = ["tem-parts", "alpha", "window", "tau", "xi", "encoder"];

    pub fn name(self) -> &'static str {
        match self {
            Sweep::TemParts => "tem-parts",
            Sweep::Alpha => "alpha",
            Sweep::Window => "window",
            Sweep::Tau => "tau",
            Sweep::Xi => "xi",
            Sweep::Encoder => "encoder",
        }
    }
}

impl FromStr for Sweep {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tem-parts" => Sweep::TemParts,
            "alpha" => Sweep::Alpha,
            "window" | "J" | "j" => Sweep::Window,
            "tau" => Sweep::Tau,
            "xi" => Sweep::Xi,
            "encoder" => Sweep::Encoder,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown sweep `{other}`; options: {}",
                    Sweep::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub name: String,
    pub report: EvalReport,
}

fn evaluate(cfg: &PipelineConfig, models: &Models, test: &Dataset, analyses: &[Analysis], jobs: &Jobs) -> Result<EvalReport> {
    let preds = predict_from(cfg, models, test, analyses, jobs)?;
    Ok(compute_map(&preds, &test.annotations, &anet_thresholds()))
}

/// Rows of one sweep evaluated on `test`. Sweeps that change the window
/// encoders or their input retrain the VEM on `train`.
pub fn ablate(
    sweep: Sweep,
    cfg: &PipelineConfig,
    models: &Models,
    train: &Dataset,
    test: &Dataset,
    jobs: &Jobs,
) -> Result<Vec<AblationRow>> {
    let base = analyze_dataset(cfg, models, test, jobs)?;
    let mut rows = Vec::new();
    let mut row = |name: String, c: &PipelineConfig, m: &Models, a: &[Analysis]| -> Result<()> {
        let report = evaluate(c, m, test, a, jobs)?;
        info!("ablation {}: {name}: average mAP {:?}", sweep.name(), report.average_map);
        rows.push(AblationRow { name, report });
        Ok(())
    };
    let with_vem = |c: &PipelineConfig| -> Result<(Models, Vec<Analysis>)> {
        let (vem, _, _) = train_vem(c, train, &models.tem, jobs, None)?;
        let m = Models { vem, ..models.clone() };
        let a = analyze_dataset(c, &m, test, jobs)?;
        Ok((m, a))
    };
    match sweep {
        Sweep::TemParts => {
            let modes = [
                ("full", ScoreMode::Full, true),
                ("voting_only", ScoreMode::VotingOnly, true),
                ("boundary_only", ScoreMode::BoundaryOnly, true),
                ("no_boundary_scores", ScoreMode::Full, false),
            ];
            for (name, mode, use_boundary) in modes {
                let mut c = cfg.clone();
                c.score_mode = mode;
                c.tem.use_boundary = use_boundary;
                row(name.into(), &c, models, &base)?;
            }
            let mut c = cfg.clone();
            c.tem.use_actionness = !cfg.tem.use_actionness;
            let (m, a) = with_vem(&c)?;
            let name = if c.tem.use_actionness { "with_actionness" } else { "no_actionness" };
            row(name.into(), &c, &m, &a)?;
        }
        Sweep::Alpha => {
            for k in 0..=10 {
                let mut c = cfg.clone();
                c.alpha = k as f64 / 10.0;
                row(format!("alpha={:.1}", c.alpha), &c, models, &base)?;
            }
        }
        Sweep::Xi => {
            for xi in [0.1, 0.2, 0.3, 0.4, 0.5] {
                let mut c = cfg.clone();
                c.xi = xi;
                row(format!("xi={xi:.1}"), &c, models, &base)?;
            }
        }
        Sweep::Tau => {
            for tau in (1..=10).map(|k| k * cfg.tau / 10) {
                let mut c = cfg.clone();
                c.tau = tau;
                row(format!("tau={tau}"), &c, models, &base)?;
            }
        }
        Sweep::Window => {
            let mut sets: Vec<Vec<usize>> = [5, 10, 15, 20]
                .into_iter()
                .filter(|&j| j <= cfg.t)
                .map(|j| vec![j])
                .collect();
            if cfg.windows.len() > 1 {
                sets.push(cfg.windows.clone());
            }
            for w in sets {
                let mut c = cfg.clone();
                c.windows = w.clone();
                let name = format!("J={}", w.iter().map(|j| j.to_string()).collect::<Vec<_>>().join("+"));
                if w == cfg.windows {
                    row(name, &c, models, &base)?;
                } else {
                    let (m, a) = with_vem(&c)?;
                    row(name, &c, &m, &a)?;
                }
            }
        }
        Sweep::Encoder => {
            for kind in [EncoderKind::Lstm, EncoderKind::Srf, EncoderKind::Sll] {
                let mut c = cfg.clone();
                c.vem.encoder = kind;
                if kind == cfg.vem.encoder {
                    row(kind.name().into(), &c, models, &base)?;
                } else {
                    let (m, a) = with_vem(&c)?;
                    row(kind.name().into(), &c, &m, &a)?;
                }
            }
        }
    }
    Ok(rows)
}

/// Sweep rows as CSV, one column per IoU threshold plus the average.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    if let Some(first) = rows.first() {
        s.push_str(&first.report.csv_header());
        s.push('\n');
    }
    for r in rows {
        s.push_str(&r.report.csv_row(&r.name));
        s.push('\n');
    }
    s
}

/// Manifest accompanying every output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            command: command.into(),
            version: VERSION.into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join("manifest.json");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}
