//! `qpc` command-line entry point.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::CircuitShape;
use crate::classifier::{classify, classify_shots};
use crate::complexity::audit;
use crate::dataset::{
    read_feature_csv, read_idx_images, read_idx_labels, rough_grid_features, select_subset,
    write_feature_csv, FeatureRow,
};
use crate::encoding::EncodedSample;
use crate::error::{Error, Result};
use crate::objective::AdamConfig;
use crate::par;
use crate::trainer::{train_with, Checkpoint, Dataset, TrainConfig, METRICS_HEADER};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Parser)]
#[command(name = "qpc", version, about = "Label-controlled quantum multi-class classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract grid features from MNIST IDX files into train/test CSVs.
    Ingest {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Comma-separated digit labels, e.g. 1,7
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<u8>,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a config file, writing checkpoints and metrics.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a saved checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a feature directory's test.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding test.csv.
        #[arg(long)]
        test: PathBuf,
        /// Decode from sampled readouts instead of exact probabilities.
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare closed-form resource counts with an explicit decomposition.
    Audit {
        #[arg(long = "L")]
        classes: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    par::init_threads_from_env();
    let mut stdout = std::io::stdout().lock();
    match dispatch(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qpc: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Ingest {
            images,
            labels,
            classes,
            train,
            test,
            seed,
            out: dir,
        } => {
            let (n_train, n_test) = ingest(&images, &labels, &classes, train, test, seed, &dir)?;
            writeln!(
                out,
                "wrote {n_train} training and {n_test} test rows to {}",
                dir.display()
            )
            .map_err(|e| Error::io("<stdout>", e))
        }
        Command::Train { config, out: dir, resume } => {
            let (cfg, data_dir) = load_config(&config)?;
            let resume = resume.map(Checkpoint::load).transpose()?;
            let rows = train_to_dir(&cfg, &data_dir, &dir, resume)?;
            writeln!(out, "{} iterations, metrics in {}", rows, dir.join(METRICS_FILE).display())
                .map_err(|e| Error::io("<stdout>", e))
        }
        Command::Eval {
            checkpoint,
            test,
            shots,
            seed,
        } => {
            let report = evaluate(&checkpoint, &test, shots, seed)?;
            emit_json(out, &report)
        }
        Command::Audit { classes, k, m } => {
            let shape = CircuitShape::new(classes, m, k)?;
            emit_json(out, &audit(&shape)?)
        }
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

/// Grid features for a seeded per-class selection of an IDX pair.
pub fn ingest(
    images: &Path,
    labels: &Path,
    classes: &[u8],
    n_train: usize,
    n_test: usize,
    seed: u64,
    out: &Path,
) -> Result<(usize, usize)> {
    let imgs = read_idx_images(images)?;
    let labs = read_idx_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            imgs.len(),
            labs.len()
        )));
    }
    let subset = select_subset(&labs, classes, n_train, n_test, seed)?;
    let rows = |groups: &[Vec<usize>]| -> Result<Vec<FeatureRow>> {
        groups
            .iter()
            .flatten()
            .map(|&i| {
                Ok(FeatureRow {
                    label: labs[i],
                    features: rough_grid_features(&imgs[i])?,
                })
            })
            .collect()
    };
    let train_rows = rows(&subset.train)?;
    let test_rows = rows(&subset.test)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_feature_csv(out.join(TRAIN_FILE), &train_rows)?;
    write_feature_csv(out.join(TEST_FILE), &test_rows)?;
    Ok((train_rows.len(), test_rows.len()))
}

/// Parses a `key = value` training config. Returns the config and the
/// feature directory (relative paths resolve against the config's folder).
pub fn load_config(path: &Path) -> Result<(TrainConfig, PathBuf)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

pub fn parse_config(text: &str, base: &Path) -> Result<(TrainConfig, PathBuf)> {
    let mut cfg = TrainConfig::default();
    let mut adam = AdamConfig::default();
    let mut classes = None;
    let mut data = None;
    let mut seen: Vec<String> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
        }
        seen.push(key.to_string());
        let bad = |what: &str| Error::Config(format!("line {}: `{key}` expects {what}, got `{value}`", n + 1));
        macro_rules! num {
            ($t:ty, $what:expr) => {
                value.parse::<$t>().map_err(|_| bad($what))?
            };
        }
        match key {
            "classes" => {
                let list = value
                    .split(',')
                    .map(|s| s.trim().parse::<u8>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("a comma-separated label list"))?;
                classes = Some(list);
            }
            "train_per_class" => cfg.train_per_class = num!(usize, "an integer"),
            "m" => cfg.reps = num!(usize, "an integer"),
            "iterations" => cfg.iterations = num!(usize, "an integer"),
            "tolerance" => cfg.tolerance = num!(f64, "a number"),
            "seed" => cfg.seed = num!(u64, "an integer"),
            "grad_eps" => cfg.grad_eps = num!(f64, "a number"),
            "step_size" => adam.step_size = num!(f64, "a number"),
            "beta1" => adam.beta1 = num!(f64, "a number"),
            "beta2" => adam.beta2 = num!(f64, "a number"),
            "adam_epsilon" => adam.epsilon = num!(f64, "a number"),
            "data" => data = Some(base.join(value)),
            other => return Err(Error::Config(format!("line {}: unknown key `{other}`", n + 1))),
        }
    }
    cfg.classes = classes.ok_or_else(|| Error::Config("missing key `classes`".into()))?;
    cfg.adam = adam;
    cfg.validate()?;
    let data = data.ok_or_else(|| Error::Config("missing key `data`".into()))?;
    Ok((cfg, data))
}

/// Reads `dir/train.csv` and `dir/test.csv`, mapping dataset labels to
/// class ids by their position in `classes`.
pub fn load_dataset(dir: &Path, classes: &[u8]) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("dataset directory {} not found", dir.display())));
    }
    Ok(Dataset {
        train: load_pools(&dir.join(TRAIN_FILE), classes)?,
        test: load_pools(&dir.join(TEST_FILE), classes)?,
    })
}

fn load_pools(path: &Path, classes: &[u8]) -> Result<Vec<Vec<EncodedSample>>> {
    let mut pools = vec![Vec::new(); classes.len()];
    for row in read_feature_csv(path)? {
        let class = classes.iter().position(|&c| c == row.label).ok_or_else(|| {
            Error::Data(format!("{}: label {} not among configured classes", path.display(), row.label))
        })?;
        pools[class].push(EncodedSample::new(&row.features, class)?);
    }
    Ok(pools)
}

/// Trains and writes `checkpoints/iter-NNNN.json`, `final.json` and
/// `metrics.csv` under `out`. Returns the number of iterations run.
pub fn train_to_dir(
    cfg: &TrainConfig,
    data_dir: &Path,
    out: &Path,
    resume: Option<Checkpoint>,
) -> Result<usize> {
    let data = load_dataset(data_dir, &cfg.classes)?;
    let ck_dir = out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    let metrics_path = out.join(METRICS_FILE);
    fs::write(&metrics_path, format!("{METRICS_HEADER}\n")).map_err(|e| Error::io(&metrics_path, e))?;
    let outcome = train_with(cfg, &data, resume, |ck, row| {
        ck.save(ck_dir.join(format!("iter-{:04}.json", ck.iteration)))?;
        let mut f = OpenOptions::new()
            .append(true)
            .open(&metrics_path)
            .map_err(|e| Error::io(&metrics_path, e))?;
        writeln!(
            f,
            "{},{},{},{},{}",
            row.iter, row.cost, row.train_acc, row.test_acc, row.elapsed_ms
        )
        .map_err(|e| Error::io(&metrics_path, e))
    })?;
    outcome.last.save(out.join(FINAL_CHECKPOINT))?;
    Ok(outcome.metrics.len())
}

#[derive(Debug, Serialize)]
pub struct PerClass {
    pub label: u8,
    pub count: usize,
    pub correct: usize,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub iteration: usize,
    pub classes: Vec<u8>,
    pub samples: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<PerClass>,
    pub shots: Option<usize>,
}

pub fn evaluate(checkpoint: &Path, test_dir: &Path, shots: Option<usize>, seed: u64) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let w = ck.parameters()?;
    let shape = ck.shape;
    let path = if test_dir.is_dir() { test_dir.join(TEST_FILE) } else { test_dir.to_path_buf() };
    let samples: Vec<EncodedSample> = load_pools(&path, &ck.classes)?.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: no test rows", path.display())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut confusion = vec![vec![0usize; shape.classes()]; shape.classes()];
    for s in &samples {
        let pred = match shots {
            Some(n) => classify_shots(&shape, &w, s.features(), n, &mut rng)?,
            None => classify(&shape, &w, s.features())?,
        };
        confusion[s.label()][pred] += 1;
    }
    let correct: usize = (0..shape.classes()).map(|c| confusion[c][c]).sum();
    let per_class = ck
        .classes
        .iter()
        .enumerate()
        .map(|(c, &label)| PerClass {
            label,
            count: confusion[c].iter().sum(),
            correct: confusion[c][c],
        })
        .collect();
    Ok(EvalReport {
        iteration: ck.iteration,
        classes: ck.classes.clone(),
        samples: samples.len(),
        accuracy: correct as f64 / samples.len() as f64,
        confusion,
        per_class,
        shots,
    })
}
