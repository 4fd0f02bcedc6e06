//! The `d2m` command line: corpus synthesis, offline and baseline
//! generation, distillation, training, evaluation and the streaming server.

pub mod server;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dance2music::baseline::{baseline_generate, fit_threshold, BaselineConfig};
use dance2music::eval::{report_csv, summarize, EvalRow};
use dance2music::music::{write_midi, write_notes_json, FIRST_NOTE};
use dance2music::net::{
    build_examples, load_params, online_generate, read_dataset, train, write_dataset, ModelConfig,
    Sampling, TrainingExample,
};
use dance2music::pose::{load_pose_json, synth_dance, ImageSize, SynthConfig};
use dance2music::search::{beam_generate, SearchConfig};
use dance2music::simcorr::global_correlation;
use dance2music::stream::ServedModel;
use dance2music::{DanceSequence, GeneratorTag, NoteSequence};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "d2m", version, about = "Generate music from dance pose sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Beam-search notes for a pose file.
    Offline(OfflineArgs),
    /// Threshold baseline notes for a pose file.
    Baseline(BaselineArgs),
    /// Write a synthetic dance corpus.
    Synth(SynthArgs),
    /// Label a corpus with the offline search and write training examples.
    Distill(DistillArgs),
    /// Train the online model.
    Train(TrainArgs),
    /// Compare offline, online and baseline generators on a corpus.
    Eval(EvalArgs),
    /// Serve the online model over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PoseInput {
    /// Canonical pose file, or estimator records (file or directory).
    #[arg(long)]
    pub poses: PathBuf,
    /// Image width for estimator records, in pixels.
    #[arg(long, requires = "image_height")]
    pub image_width: Option<f64>,
    #[arg(long, requires = "image_width")]
    pub image_height: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OfflineArgs {
    #[command(flatten)]
    pub input: PoseInput,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub midi: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub beam: usize,
    /// Notes of history scored per step; set to the total note count for global history.
    #[arg(long, default_value_t = 10)]
    pub window_notes: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub input: PoseInput,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub midi: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Fixed similarity threshold.
    #[arg(long, conflicts_with = "fit_corpus")]
    pub threshold: Option<f64>,
    /// Corpus directory to fit the threshold on; defaults to the input dance.
    #[arg(long)]
    pub fit_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 80.0)]
    pub percentile: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Seconds per dance.
    #[arg(long, default_value_t = 12.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 30)]
    pub fps: u32,
    #[arg(long, default_value_t = 4)]
    pub base_poses: usize,
    #[arg(long, default_value_t = 6)]
    pub motif_len: usize,
    #[arg(long, default_value_t = 0.03)]
    pub noise: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DistillArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model preset whose window sizes shape the examples.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long, default_value_t = 50)]
    pub beam: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out dataset scored after every epoch.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Defaults to the preset's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub beam: usize,
    /// Baseline threshold; fitted on `--fit-corpus` (or the evaluated corpus) when absent.
    #[arg(long, conflicts_with = "fit_corpus")]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub fit_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 80.0)]
    pub percentile: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub model: PathBuf,
    /// `argmax` or `temp:<tau>`.
    #[arg(long, default_value = "argmax")]
    pub sampling: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to `serve.manifest.json` in the working directory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or missing inputs; exit code 2.
    Usage(String),
    /// Anything that fails after the inputs were accepted; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dance2music::Error> for CliError {
    fn from(e: dance2music::Error) -> Self {
        match e {
            dance2music::Error::InvalidInput(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Offline(a) => cmd_offline(&a).map(|_| ()),
        Command::Baseline(a) => cmd_baseline(&a).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Distill(a) => cmd_distill(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Serve(a) => cmd_serve(&a),
    }
}

fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} `{}` does not exist", path.display())))
    }
}

fn default_manifest(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the run manifest: command, arguments, versions and results.
pub fn write_manifest(
    path: &Path,
    command: &str,
    args: &impl Serialize,
    results: Value,
) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "args": args,
        "versions": {
            "d2m": env!("CARGO_PKG_VERSION"),
            "dance2music": dance2music::VERSION,
        },
        "results": results,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_input(input: &PoseInput) -> CliResult<DanceSequence> {
    require_exists(&input.poses, "pose input")?;
    let image = match (input.image_width, input.image_height) {
        (Some(width), Some(height)) => Some(ImageSize { width, height }),
        _ => None,
    };
    Ok(load_pose_json(&input.poses, image)?)
}

/// Canonical pose files of a corpus directory, in file-name order.
pub fn corpus_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    require_exists(dir, "corpus directory")?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n != MANIFEST_FILE)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no pose files in `{}`", dir.display())));
    }
    Ok(files)
}

pub fn load_corpus(dir: &Path) -> CliResult<Vec<DanceSequence>> {
    corpus_files(dir)?
        .iter()
        .map(|p| {
            load_pose_json(p, None)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn save_notes(seq: &NoteSequence, out: &Path, midi: Option<&Path>) -> CliResult<()> {
    write_notes_json(seq, out)?;
    if let Some(m) = midi {
        write_midi(seq, m)?;
    }
    Ok(())
}

pub fn cmd_offline(a: &OfflineArgs) -> CliResult<NoteSequence> {
    let dance = load_input(&a.input)?;
    let cfg = SearchConfig {
        k: a.k,
        beam_width: a.beam,
        window_notes: a.window_notes,
        ..SearchConfig::default()
    };
    let notes = beam_generate(&dance, &cfg)?;
    let corr = global_correlation(&dance, &notes, a.k)?;
    let seq = NoteSequence::new(notes, a.k as u32, dance.fps, GeneratorTag::Offline)?;
    save_notes(&seq, &a.out, a.midi.as_deref())?;
    println!("{} notes, global correlation {corr:.6}", seq.notes.len());
    let manifest = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out));
    write_manifest(&manifest, "offline", a, json!({ "notes": seq.notes.len(), "correlation": corr }))?;
    Ok(seq)
}

pub fn cmd_baseline(a: &BaselineArgs) -> CliResult<NoteSequence> {
    let dance = load_input(&a.input)?;
    let cfg = BaselineConfig {
        k: a.k,
        percentile: a.percentile,
        seed: a.seed,
        first_note: FIRST_NOTE,
    };
    cfg.validate()?;
    let threshold = match (a.threshold, &a.fit_corpus) {
        (Some(t), _) => t,
        (None, Some(dir)) => fit_threshold(&load_corpus(dir)?, &cfg)?,
        (None, None) => fit_threshold(std::slice::from_ref(&dance), &cfg)?,
    };
    let notes = baseline_generate(&dance, threshold, &cfg)?;
    let corr = global_correlation(&dance, &notes, a.k)?;
    let seq = NoteSequence::new(notes, a.k as u32, dance.fps, GeneratorTag::Baseline)?;
    save_notes(&seq, &a.out, a.midi.as_deref())?;
    println!("{} notes, threshold {threshold:.6}, global correlation {corr:.6}", seq.notes.len());
    let manifest = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out));
    write_manifest(
        &manifest,
        "baseline",
        a,
        json!({ "notes": seq.notes.len(), "threshold": threshold, "seed": a.seed, "correlation": corr }),
    )?;
    Ok(seq)
}

/// Per-dance seeds drawn from the corpus seed.
pub fn dance_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    fs::create_dir_all(&a.out)?;
    let mut written = Vec::with_capacity(a.count);
    for (i, seed) in dance_seeds(a.seed, a.count).into_iter().enumerate() {
        let cfg = SynthConfig {
            duration_s: a.duration,
            fps: a.fps,
            n_base_poses: a.base_poses,
            motif_len: a.motif_len,
            noise_std: a.noise,
            seed,
            ..SynthConfig::default()
        };
        let mut dance = synth_dance(&cfg)?;
        dance.source_id = format!("synth-{}-{i:04}", a.seed);
        let path = a.out.join(format!("dance_{i:04}.json"));
        dance.save(&path)?;
        written.push(path);
    }
    write_manifest(&a.out.join(MANIFEST_FILE), "synth", a, json!({ "files": written.len() }))?;
    println!("wrote {} dances to {}", written.len(), a.out.display());
    Ok(written)
}

pub fn distill_corpus(
    corpus: &[DanceSequence],
    search: &SearchConfig,
    model: &ModelConfig,
) -> CliResult<Vec<TrainingExample<f32>>> {
    let mut examples = Vec::new();
    for d in corpus {
        let labels = beam_generate(d, search)?;
        examples.extend(build_examples(d, &labels, model)?);
    }
    Ok(examples)
}

pub fn cmd_distill(a: &DistillArgs) -> CliResult<usize> {
    let model = ModelConfig::preset(&a.preset)?;
    let corpus = load_corpus(&a.corpus)?;
    let search = SearchConfig {
        k: model.k(),
        beam_width: a.beam,
        window_notes: model.window_notes,
        ..SearchConfig::default()
    };
    let examples = distill_corpus(&corpus, &search, &model)?;
    write_dataset(&a.out, &model, &examples)?;
    println!("{} examples from {} dances", examples.len(), corpus.len());
    let manifest = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out));
    write_manifest(&manifest, "distill", a, json!({ "dances": corpus.len(), "examples": examples.len() }))?;
    Ok(examples.len())
}

fn load_examples(path: &Path, cfg: &ModelConfig) -> CliResult<Vec<TrainingExample<f32>>> {
    require_exists(path, "dataset")?;
    let (side, window, examples) = read_dataset(path)?;
    if side != cfg.window_frames || window != cfg.window_notes {
        return Err(CliError::Usage(format!(
            "dataset `{}` has {side}-frame / {window}-note windows, the preset needs {} / {}",
            path.display(),
            cfg.window_frames,
            cfg.window_notes
        )));
    }
    Ok(examples)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_loss: f64,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<TrainSummary> {
    let mut cfg = ModelConfig::preset(&a.preset)?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    cfg.seed = a.seed;
    cfg.validate()?;
    let train_set = load_examples(&a.data, &cfg)?;
    let val_set = match &a.val {
        Some(p) => load_examples(p, &cfg)?,
        None => Vec::new(),
    };
    let start = Instant::now();
    let (params, log) = train(&train_set, &val_set, &cfg, |e| match e.val_acc {
        Some(acc) => eprintln!("epoch {:>3}  loss {:.5}  val_acc {acc:.4}", e.epoch, e.loss),
        None => eprintln!("epoch {:>3}  loss {:.5}", e.epoch, e.loss),
    })?;
    let seconds = start.elapsed().as_secs_f64();
    params.save(&a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".log.csv");
        PathBuf::from(s)
    });
    fs::write(&log_path, log.to_csv())?;
    let summary = TrainSummary {
        epochs: cfg.epochs,
        final_loss: log.final_loss().unwrap_or(f64::NAN),
        val_acc: log.epochs.last().and_then(|e| e.val_acc),
        seconds,
    };
    println!("trained {} epochs in {seconds:.1}s, final loss {:.5}", summary.epochs, summary.final_loss);
    // wall time is left out of the manifest so reruns reproduce it exactly
    let manifest = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out));
    write_manifest(
        &manifest,
        "train",
        a,
        json!({ "config": cfg, "examples": train_set.len(), "final_loss": summary.final_loss, "val_acc": summary.val_acc }),
    )?;
    Ok(summary)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<Vec<EvalRow>> {
    require_exists(&a.model, "model")?;
    let params = load_params(&a.model, None)?;
    let k = params.config.k();
    let corpus = load_corpus(&a.corpus)?;
    let bcfg = BaselineConfig {
        k,
        percentile: a.percentile,
        seed: a.seed,
        first_note: FIRST_NOTE,
    };
    bcfg.validate()?;
    let threshold = match (a.threshold, &a.fit_corpus) {
        (Some(t), _) => t,
        (None, Some(dir)) => fit_threshold(&load_corpus(dir)?, &bcfg)?,
        (None, None) => fit_threshold(&corpus, &bcfg)?,
    };
    let search = SearchConfig {
        k,
        beam_width: a.beam,
        window_notes: params.config.window_notes,
        ..SearchConfig::default()
    };
    let mut rows = Vec::with_capacity(3 * corpus.len());
    for dance in &corpus {
        let labels = beam_generate(dance, &search)?;
        let online = online_generate(&params, dance, Sampling::Argmax)?;
        let base = baseline_generate(dance, threshold, &bcfg)?;
        for (tag, notes) in [
            (GeneratorTag::Offline, &labels),
            (GeneratorTag::Online, &online),
            (GeneratorTag::Baseline, &base),
        ] {
            rows.push(EvalRow::new(dance, tag, notes, &labels, k)?);
        }
    }
    fs::write(&a.report, report_csv(&rows))?;
    for (tag, corr, acc, flat) in summarize(&rows) {
        println!("{:<9} correlation {corr:.4}  accuracy {acc:.4}  flatness {flat:.2}", tag.as_str());
    }
    let manifest = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.report));
    let means: Vec<Value> = summarize(&rows)
        .into_iter()
        .map(|(tag, corr, acc, flat)| {
            json!({ "generator": tag.as_str(), "correlation": corr, "accuracy": acc, "flatness": flat })
        })
        .collect();
    write_manifest(&manifest, "eval", a, json!({ "threshold": threshold, "summary": means }))?;
    Ok(rows)
}

pub fn served_model(a: &ServeArgs) -> CliResult<ServedModel> {
    require_exists(&a.model, "model")?;
    let params = load_params(&a.model, None)?;
    let sampling = match a.sampling.parse::<Sampling>()? {
        Sampling::Temperature { tau, .. } => Sampling::Temperature { tau, seed: a.seed },
        s => s,
    };
    let tag = a
        .model
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    Ok(ServedModel { params: Arc::new(params), sampling, tag })
}

pub fn cmd_serve(a: &ServeArgs) -> CliResult<()> {
    let model = served_model(a)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| PathBuf::from("serve.manifest.json"));
    write_manifest(&manifest, "serve", a, json!({ "k": model.params.config.k() }))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {}:{}: {e}", a.host, a.port)))?;
        eprintln!("listening on ws://{}/v1/session", listener.local_addr()?);
        server::serve(listener, model, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(CliError::from)
    })
}
