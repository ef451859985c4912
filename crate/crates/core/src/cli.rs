//! The `mwpt` command line: data generation, training, evaluation, late
//! fusion, gradient checking and cost reporting.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 data or format,
//! 4 numerical failure (NaN during training or a failed gradient check).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::autodiff::{AdamConfig, LrSchedule, GRADCHECK_TOLERANCE};
use crate::data::{self, gen_synthetic, SyntheticSpec, TEST_MANIFEST, TRAIN_MANIFEST};
use crate::error::{Error, Result};
use crate::fusion::{count_macs, count_params, late_fuse, ModalityPosterior};
use crate::model::{load_checkpoint, save_checkpoint, Ablation, GestFormerModel, ModelConfig};
use crate::tensor::Tensor;
use crate::train::{evaluate, train, TrainConfig, METRICS_HEADER};
use crate::verify;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const CONFIG_ECHO: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.mwpt";

#[derive(Parser, Debug)]
#[command(name = "mwpt", version, about = "Wavelet-pooling gesture transformer toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multimodal dataset.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint and metrics log.
    Train(RunArgs),
    /// Evaluate a checkpoint; writes per-sample posteriors.
    Eval(RunArgs),
    /// Late-fuse per-modality posterior files.
    Fuse(FuseArgs),
    /// Finite-difference gradient suite.
    Gradcheck(RunArgs),
    /// Parameter and MAC report.
    Bench(RunArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub frames: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub modalities: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Total sample count, split 80/20 into train and test.
    #[arg(long, conflicts_with_all = ["train", "test"])]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub train: usize,
    #[arg(long, default_value_t = 60)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Posterior files written by `eval`, one per modality.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Effective configuration of `train`, `eval`, `gradcheck` and `bench`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: PathBuf,
    /// Modality used by train / eval; empty means the only one present.
    pub modality: String,
    pub split: String,
    pub checkpoint: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_factor: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = LrSchedule::default();
        RunConfig {
            model: ModelConfig {
                frames: 40,
                input_dim: 16,
                embed_dim: 32,
                stages: 2,
                classes: 3,
                expansion: 2,
                ablation: Ablation::FULL,
            },
            data: PathBuf::from("data"),
            modality: String::new(),
            split: "test".into(),
            checkpoint: PathBuf::new(),
            epochs: 100,
            batch_size: 8,
            lr: schedule.base,
            lr_milestones: schedule.milestones,
            lr_factor: schedule.factor,
            seed: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean {value:?} for key {key}"))),
    }
}

impl RunConfig {
    /// Defaults for `gradcheck`: the toy model.
    pub fn toy() -> Self {
        RunConfig {
            model: ModelConfig::toy(),
            ..RunConfig::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "frames" => m.frames = parse(key, value)?,
            "input_dim" => m.input_dim = parse(key, value)?,
            "embed_dim" => m.embed_dim = parse(key, value)?,
            "stages" => m.stages = parse(key, value)?,
            "classes" => m.classes = parse(key, value)?,
            "expansion" => m.expansion = parse(key, value)?,
            "msp" => m.ablation.msp = parse_bool(key, value)?,
            "wcp" => m.ablation.wcp = parse_bool(key, value)?,
            "gdfn" => m.ablation.gdfn = parse_bool(key, value)?,
            "embedding" => m.ablation.embedding = parse_bool(key, value)?,
            "baseline" => {
                let i: usize = parse(key, value)?;
                m.ablation = Ablation::baseline(i)
                    .ok_or_else(|| Error::config(format!("baseline {i} not in 1..=8")))?;
            }
            "data" => self.data = PathBuf::from(value.trim()),
            "modality" => self.modality = value.trim().to_string(),
            "split" => match value.trim() {
                s @ ("train" | "test") => self.split = s.to_string(),
                other => return Err(Error::config(format!("split must be train or test, got {other:?}"))),
            },
            "checkpoint" => self.checkpoint = PathBuf::from(value.trim()),
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_milestones" => {
                self.lr_milestones = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "lr_factor" => self.lr_factor = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file: blank lines and `#` comments skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("{origin}:{}: expected key = value, got {line:?}", i + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects key=value, got {kv:?}")))?;
        self.set(k.trim(), v)
    }

    fn entries(&self) -> BTreeMap<&'static str, String> {
        let m = &self.model;
        let a = m.ablation;
        let milestones: Vec<String> = self.lr_milestones.iter().map(|e| e.to_string()).collect();
        BTreeMap::from([
            ("frames", m.frames.to_string()),
            ("input_dim", m.input_dim.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("stages", m.stages.to_string()),
            ("classes", m.classes.to_string()),
            ("expansion", m.expansion.to_string()),
            ("msp", a.msp.to_string()),
            ("wcp", a.wcp.to_string()),
            ("gdfn", a.gdfn.to_string()),
            ("embedding", a.embedding.to_string()),
            ("data", self.data.display().to_string()),
            ("modality", self.modality.clone()),
            ("split", self.split.clone()),
            ("checkpoint", self.checkpoint.display().to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", format!("{:e}", self.lr)),
            ("lr_milestones", milestones.join(",")),
            ("lr_factor", format!("{:e}", self.lr_factor)),
            ("seed", self.seed.to_string()),
        ])
    }

    /// Effective configuration; reading it back reproduces this value.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            schedule: LrSchedule {
                base: self.lr,
                milestones: self.lr_milestones.clone(),
                factor: self.lr_factor,
            },
            shuffle_seed: self.seed,
        }
    }

    /// Defaults, then the config file, then `--set` overrides, then `--seed`.
    pub fn resolve(base: RunConfig, args: &RunArgs) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(path) = &args.config {
            let text = fs::read_to_string(path).map_err(Error::io_at(path))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for kv in &args.set {
            cfg.apply_override(kv)?;
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        cfg.model.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Dimension(_)
        | Error::Input(_)
        | Error::Contract(_)
        | Error::Format { .. }
        | Error::Length { .. }
        | Error::Io(_) => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Reports go to `out`, errors to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenData(a) => cmd_gen_data(&a, out),
        Command::Train(a) => cmd_train(&RunConfig::resolve(RunConfig::default(), &a)?, &a.out, out),
        Command::Eval(a) => cmd_eval(&RunConfig::resolve(RunConfig::default(), &a)?, &a.out, out),
        Command::Fuse(a) => cmd_fuse(&a.files, a.out.as_deref(), out),
        Command::Gradcheck(a) => cmd_gradcheck(&RunConfig::resolve(RunConfig::toy(), &a)?, &a.out, out),
        Command::Bench(a) => cmd_bench(&RunConfig::resolve(RunConfig::default(), &a)?, &a.out, out),
    }
}

fn prepare_out(cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_ECHO), cfg.render())?;
    Ok(())
}

pub fn cmd_gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = SyntheticSpec {
        classes: a.classes,
        frames: a.frames,
        input_dim: a.dim,
        modalities: a.modalities,
        noise: a.noise,
        seed: a.seed,
        train_samples: a.train,
        test_samples: a.test,
    };
    if let Some(total) = a.samples {
        spec = spec.with_total(total);
    }
    let ds = gen_synthetic(&spec)?;
    ds.write_to(&a.out)?;
    writeln!(
        out,
        "wrote {} train + {} test samples × {} modalities ({}) to {}",
        ds.train.len(),
        ds.test.len(),
        ds.modalities.len(),
        ds.modalities.join(","),
        a.out.display()
    )?;
    Ok(())
}

/// Resolves the modality to load: the configured one, or the only one in
/// the manifest.
fn pick_modality(cfg: &RunConfig, manifest: &Path) -> Result<String> {
    if !cfg.modality.is_empty() {
        return Ok(cfg.modality.clone());
    }
    let mut names: Vec<String> = data::read_manifest(manifest)?
        .into_iter()
        .map(|e| e.modality)
        .collect();
    names.sort();
    names.dedup();
    match names.len() {
        1 => Ok(names.remove(0)),
        0 => Err(Error::input(format!("{} is empty", manifest.display()))),
        _ => Err(Error::config(format!(
            "dataset has modalities {}; set modality=<name>",
            names.join(",")
        ))),
    }
}

pub fn cmd_train(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let train_manifest = cfg.data.join(TRAIN_MANIFEST);
    let modality = pick_modality(cfg, &train_manifest)?;
    let train_set = data::load_split(&train_manifest, Some(&modality))?;
    let test_set = data::load_split(cfg.data.join(TEST_MANIFEST), Some(&modality))?;
    prepare_out(cfg, dir)?;

    let mut model = GestFormerModel::new(cfg.model.clone(), cfg.seed)?;
    let metrics_path = dir.join(METRICS_FILE);
    fs::write(&metrics_path, format!("{METRICS_HEADER}\n"))?;
    let mut log = fs::OpenOptions::new().append(true).open(&metrics_path)?;
    let history = train(&mut model, &train_set, &test_set, &cfg.train_config(), |m| {
        writeln!(log, "{m}")?;
        log.flush()?;
        Ok(())
    })?;
    save_checkpoint(dir.join(CHECKPOINT_FILE), &model)?;
    match history.last() {
        Some(m) => writeln!(
            out,
            "modality {modality}: {} epochs, final loss {:.6}, train acc {:.4}, test acc {:.4}",
            m.epoch, m.loss, m.train_acc, m.test_acc
        )?,
        None => writeln!(out, "modality {modality}: 0 epochs, initial checkpoint written")?,
    }
    Ok(())
}

/// Posterior file name for one modality.
pub fn posterior_file(modality: &str) -> String {
    format!("posteriors_{modality}.csv")
}

pub fn cmd_eval(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let manifest = cfg.data.join(if cfg.split == "train" {
        TRAIN_MANIFEST
    } else {
        TEST_MANIFEST
    });
    let modality = pick_modality(cfg, &manifest)?;
    let checkpoint = if cfg.checkpoint.as_os_str().is_empty() {
        dir.join(CHECKPOINT_FILE)
    } else {
        cfg.checkpoint.clone()
    };
    let model = load_checkpoint(&checkpoint)?;
    let samples = data::load_split(&manifest, Some(&modality))?;
    let ev = evaluate(&model, &samples)?;
    prepare_out(cfg, dir)?;

    let mut text = format!("# modality: {modality}\n");
    for (s, p) in samples.iter().zip(&ev.posteriors) {
        let probs: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(text, "{},{},{}", s.id, s.label, probs.join(","));
    }
    fs::write(dir.join(posterior_file(&modality)), text)?;
    let report = format!("modality = {modality}\nsplit = {}\n{ev}\n", cfg.split);
    fs::write(dir.join(format!("eval_{modality}.txt")), &report)?;
    write!(out, "{report}")?;
    Ok(())
}

/// Rows of one posterior file: `(sample id, label, probabilities)`.
pub struct PosteriorFile {
    pub modality: String,
    pub rows: Vec<(String, usize, Vec<f64>)>,
}

pub fn read_posterior_file(path: &Path) -> Result<PosteriorFile> {
    let text = fs::read_to_string(path).map_err(Error::io_at(path))?;
    let mut modality = path
        .file_stem()
        .map(|s| s.to_string_lossy().trim_start_matches("posteriors_").to_string())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(name) = rest.trim().strip_prefix("modality:") {
                modality = name.trim().to_string();
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |why: &str| Error::input(format!("{}:{}: {why}", path.display(), i + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(bad("expected sample_id,label,p0,..."));
        }
        let label = fields[1].parse().map_err(|_| bad("bad label"))?;
        let probs = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad("bad probability")))
            .collect::<Result<Vec<_>>>()?;
        rows.push((fields[0].to_string(), label, probs));
    }
    Ok(PosteriorFile { modality, rows })
}

/// `(sample id, label, fused class)`.
pub type FusedRow = (String, usize, usize);

/// Fused predictions in the first file's order, plus per-file accuracies.
pub fn fuse_files(files: &[PosteriorFile]) -> Result<(Vec<FusedRow>, Vec<f64>)> {
    let first = files
        .first()
        .ok_or_else(|| Error::input("fuse needs at least one posterior file"))?;
    let lookups: Vec<BTreeMap<&str, (usize, &Vec<f64>)>> = files
        .iter()
        .map(|f| f.rows.iter().map(|(id, l, p)| (id.as_str(), (*l, p))).collect())
        .collect();
    for (f, map) in files.iter().zip(&lookups) {
        if let Some((id, ..)) = f.rows.iter().find(|(id, ..)| !lookups[0].contains_key(id.as_str())) {
            return Err(Error::input(format!(
                "sample {id} of modality {} is missing from modality {}",
                f.modality, first.modality
            )));
        }
        if map.len() != f.rows.len() {
            return Err(Error::input(format!("modality {} repeats a sample id", f.modality)));
        }
    }
    let mut fused = Vec::with_capacity(first.rows.len());
    let mut correct = vec![0usize; files.len()];
    for (id, label, _) in &first.rows {
        let mut posts = Vec::with_capacity(files.len());
        for (fi, (f, map)) in files.iter().zip(&lookups).enumerate() {
            let (l, p) = map.get(id.as_str()).ok_or_else(|| {
                Error::input(format!(
                    "sample {id} of modality {} is missing from modality {}",
                    first.modality, f.modality
                ))
            })?;
            if l != label {
                return Err(Error::input(format!(
                    "sample {id}: label {label} in {} but {l} in {}",
                    first.modality, f.modality
                )));
            }
            let post = ModalityPosterior::new(f.modality.clone(), Tensor::from_vec([p.len()], p.to_vec())?)?;
            correct[fi] += (crate::model::argmax(p) == *label) as usize;
            posts.push(post);
        }
        fused.push((id.clone(), *label, late_fuse(&posts)?));
    }
    let n = first.rows.len().max(1) as f64;
    Ok((fused, correct.iter().map(|&c| c as f64 / n).collect()))
}

pub fn cmd_fuse(paths: &[PathBuf], dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let files = paths
        .iter()
        .map(|p| read_posterior_file(p))
        .collect::<Result<Vec<_>>>()?;
    let (fused, singles) = fuse_files(&files)?;
    let mut report = String::new();
    for (f, acc) in files.iter().zip(&singles) {
        let _ = writeln!(report, "{} accuracy = {acc:.6}", f.modality);
    }
    let correct = fused.iter().filter(|(_, l, p)| l == p).count();
    let _ = writeln!(
        report,
        "fused accuracy = {:.6} ({correct}/{})",
        correct as f64 / fused.len().max(1) as f64,
        fused.len()
    );
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        let mut text = String::from("sample_id,label,prediction\n");
        for (id, l, p) in &fused {
            let _ = writeln!(text, "{id},{l},{p}");
        }
        fs::write(dir.join("fused.csv"), text)?;
        fs::write(dir.join("fuse.txt"), &report)?;
    }
    write!(out, "{report}")?;
    Ok(())
}

pub fn cmd_gradcheck(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    prepare_out(cfg, dir)?;
    let checks = verify::full_suite(&cfg.model, cfg.seed)?;
    let mut report = String::new();
    for c in &checks {
        let _ = writeln!(
            report,
            "{:<20} {:>6} entries  max rel err {:.3e}  {}",
            c.name,
            c.checked,
            c.max_rel_error,
            if c.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    fs::write(dir.join("gradcheck.txt"), &report)?;
    write!(out, "{report}")?;
    if failed.is_empty() {
        writeln!(out, "all {} checks below {GRADCHECK_TOLERANCE:e}", checks.len())?;
        Ok(())
    } else {
        Err(Error::Numerical(format!("gradient check failed: {}", failed.join(", "))))
    }
}

pub fn cmd_bench(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    prepare_out(cfg, dir)?;
    let model = GestFormerModel::new(cfg.model.clone(), cfg.seed)?;
    let report = format!(
        "# parameters\n{}\n# macs\n{}\n",
        count_params(&model),
        count_macs(&cfg.model)
    );
    fs::write(dir.join("cost.txt"), &report)?;
    write!(out, "{report}")?;
    Ok(())
}
