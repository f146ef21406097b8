//! The `msc` command line: argument grammar, config layering and the six
//! subcommands.
//!
//! Tunables resolve as: command-line flag, then `--config` JSON file, then
//! built-in default. A config file may be a flat object keyed by long flag
//! names or a `run_manifest.json` from an earlier run.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::adapter::{load_checkpoint, save_checkpoint, AdapterParams};
use crate::data::{load_feature_set, save_feature_set, AugmentMode, AugmentationPolicy, FeatureSet, Format};
use crate::diagnostics::{
    angular_histogram, collapse_monitor, confidence_stats, uniformity, write_metric_csvs, Frame, DEFAULT_BINS,
    DEFAULT_SAMPLE_PAIRS,
};
use crate::error::Error;
use crate::geometry::{compute_center, Matrix};
use crate::losses::{LossConfig, Objective};
use crate::scoring::{classify, evaluate, kmeans_compress, score_all, Gallery, GalleryKind};
use crate::trainer::{grad_check, train, TrainConfig, TrainHistory};

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(name = "msc", version, about = "One-class anomaly detection on pre-trained embeddings")]
pub struct Cli {
    /// Worker threads for parallel scoring and k-means assignment.
    #[arg(long, global = true, env = "MSC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fine-tune the adapter on an all-normal training set.
    Train(TrainArgs),
    /// Score a labeled test set and report ROC-AUC.
    Eval(EvalArgs),
    /// Score queries, optionally thresholding them.
    Score(ScoreArgs),
    /// Compress the adapted training features to k-means centroids.
    Compress(CompressArgs),
    /// Uniformity, confidence and angular histograms, collapse curves.
    Diagnose(DiagnoseArgs),
    /// Compare analytic and finite-difference adapter gradients.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Labeled set scored after every epoch.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub wd: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub augment: Option<AugmentMode>,
    /// Jitter std as a fraction of the mean feature norm.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub aug_seed: Option<u64>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Neighbours for the per-epoch validation AUC.
    #[arg(long)]
    pub k: Option<usize>,
    /// Checkpoint path; history and snapshots are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GalleryMode {
    /// Raw training features, adapted with the checkpoint.
    #[default]
    Train,
    /// Rows are final exemplars (e.g. written by `compress`).
    Exemplars,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct GalleryArgs {
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub gallery_mode: Option<GalleryMode>,
    /// Adapter checkpoint; the identity adapter when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Compress the gallery to this many k-means centroids first.
    #[arg(long)]
    pub kmeans: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct EvalArgs {
    /// Labeled test features.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[command(flatten)]
    #[serde(flatten)]
    pub gallery: GalleryArgs,
    /// Output directory for scores.csv and summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ScoreArgs {
    /// Query features; labels are optional.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[command(flatten)]
    #[serde(flatten)]
    pub gallery: GalleryArgs,
    /// Flag queries whose score exceeds this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct CompressArgs {
    /// Raw training features.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub kmeans: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output feature file of unit-norm centroids.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct DiagnoseArgs {
    /// Features to analyse (labels enable the histograms).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Raw training features defining the center; defaults to `--features`.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub frame: Option<Frame>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training history to export as per-epoch curves and a collapse report.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub auc_drop: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct GradCheckArgs {
    #[arg(long, value_enum)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Failure of a command: bad invocation (exit 2) or a domain error (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Domain(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs one subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Domain(Error::InvalidConfig(format!("thread pool: {e}"))))?;
    pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Score(a) => cmd_score(a),
        Command::Compress(a) => cmd_compress(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::GradCheck(a) => cmd_grad_check(a),
    })
}

/// Overlays the flags that were given on top of the config file.
fn layered<T: Serialize + DeserializeOwned + Default>(command: &str, cli: &T, config: Option<&Path>) -> CliResult<T> {
    let mut base = match config {
        Some(p) => {
            require_file(p, "--config")?;
            let v: Value = serde_json::from_slice(&fs::read(p)?)?;
            match v {
                Value::Object(mut m) if m.contains_key("config") => {
                    if let Some(other) = m.get("command").and_then(Value::as_str).filter(|c| *c != command) {
                        return Err(Error::InvalidConfig(format!(
                            "config file: manifest was written by `{other}`, not `{command}`"
                        ))
                        .into());
                    }
                    m.remove("config").unwrap_or_default()
                }
                other => other,
            }
        }
        None => Value::Object(Map::new()),
    };
    let Value::Object(base_map) = &mut base else {
        return Err(Error::InvalidConfig("config file must hold a JSON object".into()).into());
    };
    if let Value::Object(known) = serde_json::to_value(T::default())? {
        if let Some(k) = base_map.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::InvalidConfig(format!("config file: unknown key `{k}`")).into());
        }
    }
    if let Value::Object(flags) = serde_json::to_value(cli)? {
        for (k, v) in flags {
            if !v.is_null() {
                base_map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| Error::InvalidConfig(format!("config file: {e}")).into())
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> CliResult<T> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("the following required argument was not provided: {flag}")))
}

fn require_file(p: &Path, flag: &str) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{flag}: input file {} does not exist", p.display())).into())
    }
}

fn require_dir(p: &Path, flag: &str) -> CliResult<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{flag}: directory {} does not exist", p.display())).into())
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Rejects an output path that names one of the inputs.
fn not_an_input(out: &Path, inputs: &[&Path]) -> CliResult<()> {
    let canon = |p: &Path| fs::canonicalize(p).ok();
    let out_c = canon(out);
    for i in inputs {
        if out_c.is_some() && canon(i) == out_c {
            return Err(Error::InvalidConfig(format!(
                "output {} would overwrite an input file",
                out.display()
            ))
            .into());
        }
    }
    Ok(())
}

fn load(path: &Path, format: Option<Format>) -> CliResult<FeatureSet> {
    Ok(load_feature_set(path, format.unwrap_or_else(|| Format::from_path(path)))?)
}

fn load_params(checkpoint: Option<&Path>, dim: usize) -> CliResult<AdapterParams> {
    match checkpoint {
        Some(p) => {
            let params = load_checkpoint(p)?;
            if params.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: params.dim() }.into());
            }
            Ok(params)
        }
        None => Ok(AdapterParams::zeros(dim, dim)),
    }
}

fn write_manifest(dir: &Path, command: &str, config: &impl Serialize, extra: Value) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "resolved": extra,
    });
    fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Sibling file of `out` with its extension replaced by `suffix`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parent_dir(out).join(format!("{stem}.{suffix}"))
}

fn cmd_train(cli: TrainArgs) -> CliResult<()> {
    let a = layered("train", &cli, cli.config.as_deref())?;
    let features = required(&a.features, "--features")?;
    let out = required(&a.out, "--out")?;
    let seed = required(&a.seed, "--seed")?;
    require_file(&features, "--features")?;
    if let Some(v) = &a.val {
        require_file(v, "--val")?;
    }
    require_dir(&parent_dir(&out), "--out")?;
    let mut inputs = vec![features.as_path()];
    inputs.extend(a.val.as_deref());
    not_an_input(&out, &inputs)?;

    let defaults = TrainConfig::default();
    let objective = a.objective.unwrap_or(defaults.loss.objective);
    let cfg = TrainConfig {
        loss: LossConfig {
            objective,
            tau: a.tau.unwrap_or(defaults.loss.tau),
            lambda: a.lambda.unwrap_or(defaults.loss.lambda),
        },
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch.unwrap_or(defaults.batch_size),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        weight_decay: a.wd.unwrap_or(defaults.weight_decay),
        hidden: a.hidden,
        seed,
        snapshot_every: a.snapshot_every.unwrap_or(defaults.snapshot_every),
        augment: AugmentationPolicy {
            mode: a.augment.unwrap_or(defaults.augment.mode),
            sigma: a.sigma.unwrap_or(defaults.augment.sigma),
            seed: a.aug_seed.unwrap_or(seed),
        },
        eval_k: a.k.unwrap_or(defaults.eval_k),
        diag_pairs: defaults.diag_pairs,
    };
    cfg.validate()?;

    let train_fs = load(&features, a.format)?;
    let val_fs = a.val.as_deref().map(|p| load(p, a.format)).transpose()?;
    let (params, history) = train(&train_fs, val_fs.as_ref(), &cfg)?;

    save_checkpoint(&params, &out)?;
    let history_path = sibling(&out, "history.json");
    fs::write(&history_path, serde_json::to_string_pretty(&history)?)?;
    let mut outputs = vec![out.clone(), history_path];
    for snap in &history.snapshots {
        let p = sibling(&out, &format!("epoch{}.msca", snap.epoch));
        save_checkpoint(&snap.params, &p)?;
        outputs.push(p);
    }
    let last = history.last();
    println!(
        "trained {} epochs ({objective}): loss {:.6}, uniformity {:.4}{}",
        cfg.epochs,
        last.loss.unwrap_or(f64::NAN),
        last.uniformity_origin,
        last.val_auc.map_or(String::new(), |v| format!(", val auc {v:.4}"))
    );
    if history.collapsed() {
        eprintln!("warning: representation collapse detected (uniformity above threshold)");
    }
    write_manifest(&parent_dir(&out), "train", &a, json!({ "train_config": cfg, "outputs": outputs }))
}

/// Builds the gallery for eval/score.
fn build_gallery(g: &GalleryArgs, format: Option<Format>, dim: usize) -> CliResult<(Gallery, AdapterParams, Value)> {
    let path = required(&g.gallery, "--gallery")?;
    let params = load_params(g.checkpoint.as_deref(), dim)?;
    let rows = load(&path, format)?.to_matrix();
    let mut gallery = match g.gallery_mode.unwrap_or_default() {
        GalleryMode::Train => Gallery::from_train(&rows, &params)?,
        GalleryMode::Exemplars => {
            let kind = read_gallery_kind(&path).unwrap_or(GalleryKind::FullTrain);
            Gallery::from_exemplars(&rows, kind)?
        }
    };
    let seed = g.seed.unwrap_or(0);
    let max_iters = g.max_iters.unwrap_or(100);
    if let Some(k) = g.kmeans {
        gallery = kmeans_compress(gallery.exemplars(), k, seed, max_iters)?;
    }
    let info = json!({
        "gallery_kind": gallery.kind(),
        "gallery_size": gallery.len(),
        "kmeans_seed": seed,
        "max_iters": max_iters,
    });
    Ok((gallery, params, info))
}

fn read_gallery_kind(path: &Path) -> Option<GalleryKind> {
    let v: Value = serde_json::from_slice(&fs::read(sibling(path, "gallery.json")).ok()?).ok()?;
    serde_json::from_value(v.get("gallery_kind")?.clone()).ok()
}

fn check_gallery_inputs(g: &GalleryArgs) -> CliResult<Vec<PathBuf>> {
    let gallery = required(&g.gallery, "--gallery")?;
    require_file(&gallery, "--gallery")?;
    let mut inputs = vec![gallery];
    if let Some(c) = &g.checkpoint {
        require_file(c, "--checkpoint")?;
        inputs.push(c.clone());
    }
    Ok(inputs)
}

fn cmd_eval(cli: EvalArgs) -> CliResult<()> {
    let a = layered("eval", &cli, cli.config.as_deref())?;
    let features = required(&a.features, "--features")?;
    let out = required(&a.out, "--out")?;
    let mut inputs = check_gallery_inputs(&a.gallery)?;
    require_file(&features, "--features")?;
    require_dir(&out, "--out")?;
    inputs.push(features.clone());

    let test = load(&features, a.format)?;
    if test.labels().is_none() {
        return Err(Error::InvariantViolation("eval needs a labeled test set; use `score` for unlabeled queries".into()).into());
    }
    let (gallery, params, info) = build_gallery(&a.gallery, a.format, test.dim())?;
    let k = a.gallery.k.unwrap_or(2);
    let report = evaluate(&test, &params, &gallery, k)?;
    let (csv, summary) = (out.join("scores.csv"), out.join("summary.json"));
    for p in [&csv, &summary] {
        not_an_input(p, &inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    }
    report.write(&csv, &summary)?;
    println!(
        "roc_auc {:.6} (k = {k}, {} exemplars)",
        report.roc_auc.unwrap_or(f64::NAN),
        gallery.len()
    );
    write_manifest(&out, "eval", &a, json!({ "k": k, "gallery": info, "roc_auc": report.roc_auc }))
}

fn cmd_score(cli: ScoreArgs) -> CliResult<()> {
    let a = layered("score", &cli, cli.config.as_deref())?;
    let features = required(&a.features, "--features")?;
    let out = required(&a.out, "--out")?;
    let mut inputs = check_gallery_inputs(&a.gallery)?;
    require_file(&features, "--features")?;
    require_dir(&out, "--out")?;
    inputs.push(features.clone());

    let queries = load(&features, a.format)?;
    let (gallery, params, info) = build_gallery(&a.gallery, a.format, queries.dim())?;
    let k = a.gallery.k.unwrap_or(2);
    let scores = score_all(&queries.to_matrix(), &params, &gallery, k)?;
    let mut body = String::from(if a.threshold.is_some() { "query_id,score,decision\n" } else { "query_id,score\n" });
    let mut flagged = 0;
    for (i, s) in scores.iter().enumerate() {
        match a.threshold {
            Some(t) => {
                let d = classify(*s, t);
                flagged += usize::from(d.is_anomalous());
                body.push_str(&format!("{i},{s:?},{}\n", d.as_u8()));
            }
            None => body.push_str(&format!("{i},{s:?}\n")),
        }
    }
    let csv = out.join("scores.csv");
    not_an_input(&csv, &inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    fs::write(&csv, body)?;
    match a.threshold {
        Some(t) => println!("scored {} queries, {flagged} above threshold {t}", scores.len()),
        None => println!("scored {} queries", scores.len()),
    }
    write_manifest(&out, "score", &a, json!({ "k": k, "gallery": info }))
}

fn cmd_compress(cli: CompressArgs) -> CliResult<()> {
    let a = layered("compress", &cli, cli.config.as_deref())?;
    let features = required(&a.features, "--features")?;
    let out = required(&a.out, "--out")?;
    let k = required(&a.kmeans, "--kmeans")?;
    require_file(&features, "--features")?;
    let mut inputs = vec![features.as_path()];
    if let Some(c) = &a.checkpoint {
        require_file(c, "--checkpoint")?;
        inputs.push(c);
    }
    require_dir(&parent_dir(&out), "--out")?;
    not_an_input(&out, &inputs)?;

    let train_fs = load(&features, a.format)?;
    let params = load_params(a.checkpoint.as_deref(), train_fs.dim())?;
    let full = Gallery::from_train(&train_fs.to_matrix(), &params)?;
    let seed = a.seed.unwrap_or(0);
    let gallery = kmeans_compress(full.exemplars(), k, seed, a.max_iters.unwrap_or(100))?;
    let format = a.format.unwrap_or_else(|| Format::from_path(&out));
    save_feature_set(&FeatureSet::from_matrix(gallery.exemplars(), None)?, &out, format)?;
    let meta = json!({ "gallery_kind": gallery.kind(), "kmeans_k": gallery.kmeans_k(), "seed": seed });
    fs::write(sibling(&out, "gallery.json"), serde_json::to_string_pretty(&meta)?)?;
    println!("wrote {k} centroids from {} training rows", train_fs.len());
    write_manifest(&parent_dir(&out), "compress", &a, meta)
}

fn cmd_diagnose(cli: DiagnoseArgs) -> CliResult<()> {
    let a = layered("diagnose", &cli, cli.config.as_deref())?;
    let features = required(&a.features, "--features")?;
    let out = required(&a.out, "--out")?;
    require_file(&features, "--features")?;
    for (p, flag) in [(&a.train, "--train"), (&a.checkpoint, "--checkpoint"), (&a.history, "--history")] {
        if let Some(p) = p {
            require_file(p, flag)?;
        }
    }
    require_dir(&out, "--out")?;

    let frame = a.frame.unwrap_or(Frame::Origin);
    let bins = a.bins.unwrap_or(DEFAULT_BINS);
    let fs_ = load(&features, a.format)?;
    let train_raw = match &a.train {
        Some(p) => load(p, a.format)?.to_matrix(),
        None => fs_.to_matrix(),
    };
    let center = compute_center(train_raw.iter_rows())?;
    let params = load_params(a.checkpoint.as_deref(), fs_.dim())?;
    let raw = fs_.to_matrix();
    let adapted: Matrix = crate::adapter::adapter_forward_batch(&raw, &params)?;
    let u = uniformity(&adapted, frame, &center, a.pairs.unwrap_or(DEFAULT_SAMPLE_PAIRS), a.seed.unwrap_or(0))?;
    let mut written = Vec::new();
    let uni_path = out.join(format!("diag_uniformity_{}.csv", frame.name()));
    fs::write(&uni_path, format!("epoch,metric,frame,value\n0,uniformity,{},{u:?}\n", frame.name()))?;
    written.push(uni_path);
    println!("uniformity ({}) {u:.6}", frame.name());

    if let Some(labels) = fs_.labels() {
        let conf = confidence_stats(&raw, labels, bins)?;
        let p = out.join("diag_confidence_none.json");
        fs::write(&p, conf.to_json()?)?;
        written.push(p);
        let ang = angular_histogram(&adapted, &center, frame, labels, bins)?;
        let p = out.join(format!("diag_angle_{}.json", frame.name()));
        fs::write(&p, ang.to_json()?)?;
        written.push(p);
    }
    let mut collapse_epoch = None;
    if let Some(h) = &a.history {
        let history: TrainHistory = serde_json::from_slice(&fs::read(h)?)?;
        written.extend(write_metric_csvs(&out, &history)?);
        let report = collapse_monitor(&history, None, a.auc_drop.unwrap_or(0.1));
        let p = out.join("collapse.csv");
        fs::write(&p, report.to_csv())?;
        written.push(p);
        collapse_epoch = report.collapse_epoch;
        match report.collapse_epoch {
            Some(e) => println!("collapse detected at epoch {e} ({:?})", report.reason.expect("reason set with epoch")),
            None => println!("no collapse detected"),
        }
    }
    write_manifest(
        &out,
        "diagnose",
        &a,
        json!({ "uniformity": u, "collapse_epoch": collapse_epoch, "outputs": written }),
    )
}

fn cmd_grad_check(cli: GradCheckArgs) -> CliResult<()> {
    let a = layered("grad-check", &cli, cli.config.as_deref())?;
    if let Some(out) = &a.out {
        require_dir(out, "--out")?;
    }
    let defaults = LossConfig::default();
    let cfg = LossConfig {
        objective: a.objective.unwrap_or(defaults.objective),
        tau: a.tau.unwrap_or(defaults.tau),
        lambda: a.lambda.unwrap_or(defaults.lambda),
    };
    let tol = a.tol.unwrap_or(1e-4);
    let report = grad_check(&cfg, a.trials.unwrap_or(20), tol, a.seed.unwrap_or(0))?;
    println!(
        "{}: max rel err {:.3e} over {} trials (tolerance {tol:e}) {}",
        cfg.objective,
        report.max_rel_err,
        report.trials,
        if report.passed { "PASS" } else { "FAIL" }
    );
    if let Some(out) = &a.out {
        write_manifest(out, "grad-check", &a, serde_json::to_value(&report)?)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!(
            "gradient check failed: max relative error {:e} exceeds {tol:e}",
            report.max_rel_err
        ))
        .into())
    }
}
