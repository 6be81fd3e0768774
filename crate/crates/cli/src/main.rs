use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use tvnet_core::config::PipelineConfig;
use tvnet_core::data::{load_annotations, load_predictions, save_predictions, Dataset};
use tvnet_core::eval::{anet_thresholds, compute_map, thumos_thresholds};
use tvnet_core::par::Jobs;
use tvnet_core::pipeline::{
    ablate, ablation_csv, analyze_dataset, predict_from, train_stage, Analysis, CheckpointDir,
    Manifest, Stage, Sweep,
};
use tvnet_core::plot::{line_chart, Series};
use tvnet_core::synth::generate_synthetic;
use tvnet_core::vem::min_max;

#[derive(Parser)]
#[command(name = "tvnet", version, about = "Temporal action localization with boundary voting")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// activitynet, thumos or synthetic.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Tem,
    Pem,
    Vem,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdSet {
    Anet,
    Thumos,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic train/test dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        num_train: Option<usize>,
        #[arg(long)]
        num_test: Option<usize>,
    },
    /// Trains TEM, PEM and VEM into the output directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        stage: StageArg,
        /// Continue the stage from its saved optimizer state.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        plots: bool,
    },
    /// Predicts segments for every video in a dataset.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Per-video score curves as CSV.
        #[arg(long)]
        curves: bool,
        /// SVG charts next to the curve CSVs.
        #[arg(long)]
        plots: bool,
    },
    /// Scores predictions against annotations.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "anet")]
        thresholds: ThresholdSet,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Runs one ablation sweep and writes its table.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// tem-parts, alpha, window (or J), tau, xi, encoder.
        #[arg(long)]
        sweep: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
}

/// Preset, then the saved checkpoint config if any, then `--config`, then
/// `--seed`.
fn load_config(common: &Common, ckpt: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::preset(common.preset.as_deref().unwrap_or("synthetic"))?;
    if let Some(dir) = ckpt {
        let saved = dir.join("config.json");
        if saved.exists() && common.preset.is_none() {
            let text = std::fs::read_to_string(&saved).with_context(|| format!("reading {}", saved.display()))?;
            cfg = PipelineConfig::from_json_over(&cfg, &text)?;
        }
    }
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg = PipelineConfig::from_json_over(&cfg, &text)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_data(common: &Common, num_train: Option<usize>, num_test: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common, None)?;
    if let Some(n) = num_train {
        cfg.synth.num_train = n;
    }
    if let Some(n) = num_test {
        cfg.synth.num_test = n;
    }
    let (train, test) = generate_synthetic(&cfg.synth)?;
    let out = &common.out_dir;
    train.save(&out.join("train"))?;
    test.save(&out.join("test"))?;
    write(&out.join("config.json"), &cfg.to_json())?;
    let mut m = Manifest::new("gen-data", &cfg);
    m.outputs.insert("train".into(), format!("{} videos", train.len()));
    m.outputs.insert("test".into(), format!("{} videos", test.len()));
    m.write(out)?;
    info!("wrote {} train and {} test videos to {}", train.len(), test.len(), out.display());
    Ok(())
}

fn train(common: &Common, data: &Path, stage: StageArg, resume: bool, plots: bool) -> Result<()> {
    let cfg = load_config(common, None)?;
    let ds = Dataset::load(data, cfg.t, cfg.rescale)?;
    let jobs = Jobs::new(common.jobs);
    let dir = CheckpointDir(common.out_dir.clone());
    let stages: Vec<Stage> = match stage {
        StageArg::Tem => vec![Stage::Tem],
        StageArg::Pem => vec![Stage::Pem],
        StageArg::Vem => vec![Stage::Vem],
        StageArg::All => Stage::ALL.to_vec(),
    };
    write(&common.out_dir.join("config.json"), &cfg.to_json())?;
    let mut m = Manifest::new("train", &cfg);
    for st in stages {
        let t0 = Instant::now();
        let curves = train_stage(st, &cfg, &ds, &dir, &jobs, resume)?;
        info!("stage {st} trained in {:.1}s", t0.elapsed().as_secs_f64());
        if plots {
            let series: Vec<Series<'_>> = curves
                .iter()
                .map(|(name, _, y)| Series { name, y })
                .collect();
            write(&common.out_dir.join(format!("{st}_loss.svg")), &line_chart(&format!("{st} loss"), &series))?;
        }
        m.outputs.insert(st.name().into(), dir.params_path(st).display().to_string());
    }
    m.write(&common.out_dir)?;
    Ok(())
}

fn curves_csv(a: &Analysis) -> String {
    let (vs, ve) = (min_max(&a.votes.start), min_max(&a.votes.end));
    let mut s = String::from("frame,vote_start,vote_end,boundary_start,boundary_end,actionness\n");
    for t in 0..vs.len() {
        let _ = writeln!(
            s,
            "{t},{:.6},{:.6},{:.6},{:.6},{:.6}",
            vs[t], ve[t], a.bounds.start[t], a.bounds.end[t], a.bounds.action[t]
        );
    }
    s
}

fn infer(common: &Common, data: &Path, ckpt: &Path, curves: bool, plots: bool) -> Result<()> {
    let cfg = load_config(common, Some(ckpt))?;
    let ds = Dataset::load(data, cfg.t, cfg.rescale)?;
    let models = CheckpointDir(ckpt.to_path_buf()).load_models(&cfg)?;
    let jobs = Jobs::new(common.jobs);
    let t0 = Instant::now();
    let analyses = analyze_dataset(&cfg, &models, &ds, &jobs)?;
    let preds = predict_from(&cfg, &models, &ds, &analyses, &jobs)?;
    let elapsed = t0.elapsed().as_secs_f64();
    info!(
        "inferred {} videos in {elapsed:.2}s ({:.1} ms per video)",
        ds.len(),
        1000.0 * elapsed / ds.len().max(1) as f64
    );
    let out = &common.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_predictions(&out.join("predictions.json"), &preds)?;
    if curves || plots {
        for a in &analyses {
            write(&out.join("curves").join(format!("{}.csv", a.video_id)), &curves_csv(a))?;
            if plots {
                let (vs, ve) = (min_max(&a.votes.start), min_max(&a.votes.end));
                let svg = line_chart(
                    &a.video_id,
                    &[
                        Series { name: "vote start", y: &vs },
                        Series { name: "vote end", y: &ve },
                        Series { name: "boundary start", y: &a.bounds.start },
                        Series { name: "boundary end", y: &a.bounds.end },
                    ],
                );
                write(&out.join("curves").join(format!("{}.svg", a.video_id)), &svg)?;
            }
        }
    }
    let mut m = Manifest::new("infer", &cfg);
    m.outputs.insert("predictions".into(), "predictions.json".into());
    m.write(out)?;
    Ok(())
}

fn eval(pred: &Path, gt: &Path, set: ThresholdSet, out: &Path) -> Result<()> {
    let preds = load_predictions(pred)?;
    let anns = load_annotations(gt)?;
    let thresholds = match set {
        ThresholdSet::Anet => anet_thresholds(),
        ThresholdSet::Thumos => thumos_thresholds(),
    };
    let report = compute_map(&preds, &anns, &thresholds);
    let csv = format!("{}\n{}\n", report.csv_header(), report.csv_row("all"));
    write(&out.join("eval.csv"), &csv)?;
    let json = serde_json::json!({
        "thresholds": report.thresholds,
        "map": report.map,
        "average_map": report.average_map,
        "class_ap": report.class_ap,
        "num_predictions": report.num_predictions,
        "num_gt": report.num_gt,
    });
    write(&out.join("eval.json"), &serde_json::to_string_pretty(&json)?)?;
    for (th, m) in report.thresholds.iter().zip(&report.map) {
        match m {
            Some(v) => println!("mAP@{th:.2} = {v:.4}"),
            None => println!("mAP@{th:.2} = n/a"),
        }
    }
    match report.average_map {
        Some(v) => println!("average mAP = {v:.4}"),
        None => println!("average mAP = n/a (no ground truth)"),
    }
    Ok(())
}

fn run_ablate(common: &Common, sweep: &str, train: &Path, test: &Path, ckpt: &Path) -> Result<()> {
    let sweep: Sweep = sweep.parse()?;
    let cfg = load_config(common, Some(ckpt))?;
    let train_ds = Dataset::load(train, cfg.t, cfg.rescale)?;
    let test_ds = Dataset::load(test, cfg.t, cfg.rescale)?;
    let models = CheckpointDir(ckpt.to_path_buf()).load_models(&cfg)?;
    let jobs = Jobs::new(common.jobs);
    let rows = ablate(sweep, &cfg, &models, &train_ds, &test_ds, &jobs)?;
    let name = format!("ablation_{}.csv", sweep.name());
    write(&common.out_dir.join(&name), &ablation_csv(&rows))?;
    for r in &rows {
        println!("{}: average mAP {:.4}", r.name, r.report.average_map.unwrap_or(f64::NAN));
    }
    let mut m = Manifest::new("ablate", &cfg);
    m.outputs.insert(sweep.name().into(), name);
    m.write(&common.out_dir)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::GenData { common, num_train, num_test } => gen_data(&common, num_train, num_test),
        Command::Train { common, data, stage, resume, plots } => train(&common, &data, stage, resume, plots),
        Command::Infer { common, data, ckpt, curves, plots } => infer(&common, &data, &ckpt, curves, plots),
        Command::Eval { pred, gt, thresholds, out_dir } => eval(&pred, &gt, thresholds, &out_dir),
        Command::Ablate { common, sweep, train, test, ckpt } => run_ablate(&common, &sweep, &train, &test, &ckpt),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TVNET_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
