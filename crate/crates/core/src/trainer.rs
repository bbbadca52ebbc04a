//! The quantum-classical optimization loop.
//!
//! Each iteration takes a full-batch finite-difference gradient, one Adam
//! step, then records the cost and accuracies of the updated weights. Row
//! `k` of the metrics and checkpoint `k` therefore describe the same `W_k`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitShape, ParameterTensor};
use crate::classifier::evaluate_accuracy;
use crate::encoding::EncodedSample;
use crate::error::{Error, Result};
use crate::objective::{adam_step, cost, grad_fd, AdamConfig, AdamState, Batch, DEFAULT_GRAD_EPS};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "iter,cost,train_acc,test_acc,elapsed_ms";

/// Consecutive small cost changes that end training.
const CONVERGED_STREAK: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Dataset labels; position in this list is the class id.
    pub classes: Vec<u8>,
    pub train_per_class: usize,
    pub reps: usize,
    pub iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub grad_eps: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            classes: vec![1, 7],
            train_per_class: 200,
            reps: 2,
            iterations: 30,
            tolerance: 1e-4,
            seed: 0,
            grad_eps: DEFAULT_GRAD_EPS,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(Error::Config(format!("class label {c} listed twice")));
            }
        }
        if self.train_per_class == 0 {
            return Err(Error::Config("train_per_class must be >= 1".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config(format!("tolerance {} must be > 0", self.tolerance)));
        }
        if !(self.grad_eps > 0.0 && self.grad_eps.is_finite()) {
            return Err(Error::Config(format!("grad_eps {} must be > 0", self.grad_eps)));
        }
        self.adam.validate()
    }
}

/// Class-indexed training and test pools.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Vec<EncodedSample>>,
    pub test: Vec<Vec<EncodedSample>>,
}

impl Dataset {
    /// Feature length shared by every sample.
    pub fn n_padded(&self) -> Result<usize> {
        let mut all = self.train.iter().chain(&self.test).flatten();
        let first = all
            .next()
            .ok_or_else(|| Error::Data("dataset has no samples".into()))?
            .features()
            .len();
        if all.any(|s| s.features().len() != first) {
            return Err(Error::Data("samples have differing feature lengths".into()));
        }
        Ok(first)
    }

    fn flat_test(&self) -> Vec<EncodedSample> {
        self.test.iter().flatten().cloned().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: usize,
    pub cost: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub elapsed_ms: u64,
}

/// Shuffles each class pool and zips the first `m_per_class` positions into
/// tuples of one sample per class.
pub fn make_batches(per_class: &[Vec<EncodedSample>], m_per_class: usize, seed: u64) -> Result<Batch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    make_batches_with(per_class, m_per_class, &mut rng)
}

fn make_batches_with(
    per_class: &[Vec<EncodedSample>],
    m_per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    if m_per_class == 0 {
        return Err(Error::Data("need at least one tuple".into()));
    }
    let mut shuffled = Vec::with_capacity(per_class.len());
    for (class, pool) in per_class.iter().enumerate() {
        if pool.len() < m_per_class {
            return Err(Error::Data(format!(
                "class {class} has {} samples, {m_per_class} needed",
                pool.len()
            )));
        }
        if let Some(s) = pool.iter().find(|s| s.label() != class) {
            return Err(Error::Data(format!(
                "sample labelled {} found in pool of class {class}",
                s.label()
            )));
        }
        let mut pool = pool.clone();
        pool.shuffle(rng);
        pool.truncate(m_per_class);
        shuffled.push(pool);
    }
    let tuples = (0..m_per_class)
        .map(|r| shuffled.iter().map(|pool| pool[r].clone()).collect())
        .collect();
    Batch::new(tuples)
}

/// Full optimizer state after some iteration; enough to resume or to
/// recompute that iteration's cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub shape: CircuitShape,
    pub classes: Vec<u8>,
    pub seed: u64,
    pub iteration: usize,
    /// Flattened in (class, rep, qubit, unit, angle) order.
    pub weights: Vec<f64>,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn parameters(&self) -> Result<ParameterTensor> {
        ParameterTensor::from_vec(self.shape, self.weights.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "{}: checkpoint format {} unsupported (expected {CHECKPOINT_VERSION})",
                path.display(),
                ck.format_version
            )));
        }
        if ck.classes.len() != ck.shape.classes() {
            return Err(Error::Shape(format!(
                "{}: {} class labels for a {}-class circuit",
                path.display(),
                ck.classes.len(),
                ck.shape.classes()
            )));
        }
        let n = ck.shape.param_count();
        if ck.adam.first_moment.len() != n || ck.adam.second_moment.len() != n {
            return Err(Error::Shape(format!("{}: Adam moments do not match weights", path.display())));
        }
        ck.parameters()?;
        Ok(ck)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub shape: CircuitShape,
    pub weights: ParameterTensor,
    pub metrics: Vec<MetricsRow>,
    pub batch: Batch,
    pub last: Checkpoint,
}

/// Trains from a seeded uniform(−π, π) initialization.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    train_with(config, data, None, |_, _| Ok(()))
}

/// Trains, optionally resuming from `resume`, calling `observe` after every
/// iteration with that iteration's checkpoint and metrics.
pub fn train_with(
    config: &TrainConfig,
    data: &Dataset,
    resume: Option<Checkpoint>,
    mut observe: impl FnMut(&Checkpoint, &MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let classes = config.classes.len();
    if data.train.len() != classes || data.test.len() != classes {
        return Err(Error::Data(format!(
            "dataset has {}/{} train/test pools for {classes} classes",
            data.train.len(),
            data.test.len()
        )));
    }
    let n_padded = data.n_padded()?;
    if n_padded % 3 != 0 {
        return Err(Error::Data(format!("feature length {n_padded} is not padded to 3")));
    }
    let shape = CircuitShape::new(classes, config.reps, n_padded / 3)?;
    let test = data.flat_test();
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = ParameterTensor::from_fn(shape, |_, _, _, _, _| {
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
    });
    let batch = make_batches(&data.train, config.train_per_class, config.seed)?;
    let train_samples: Vec<EncodedSample> = batch.tuples().iter().flatten().cloned().collect();

    let (mut w, mut adam, start) = match resume {
        Some(ck) => {
            if ck.shape != shape || ck.classes != config.classes {
                return Err(Error::Config("checkpoint does not match the configuration".into()));
            }
            let w = ck.parameters()?;
            (w, ck.adam, ck.iteration)
        }
        None => (init, AdamState::new(config.adam, shape.param_count()), 0),
    };

    let at_iter = |iter: usize| {
        move |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!("iteration {iter}: {m}")),
            other => other,
        }
    };

    let clock = Instant::now();
    let mut metrics = Vec::new();
    let mut previous: Option<f64> = None;
    let mut streak = 0;
    let mut last = None;
    for iter in start + 1..=start + config.iterations {
        let grad = grad_fd(&shape, &batch, &w, config.grad_eps).map_err(at_iter(iter))?;
        adam_step(&mut w, &grad, &mut adam)?;
        let c = cost(&shape, &batch, &w).map_err(at_iter(iter))?;
        let row = MetricsRow {
            iter,
            cost: c,
            train_acc: evaluate_accuracy(&shape, &w, &train_samples)?,
            test_acc: evaluate_accuracy(&shape, &w, &test)?,
            elapsed_ms: clock.elapsed().as_millis() as u64,
        };
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            shape,
            classes: config.classes.clone(),
            seed: config.seed,
            iteration: iter,
            weights: w.as_slice().to_vec(),
            adam: adam.clone(),
        };
        observe(&ck, &row)?;
        metrics.push(row);
        last = Some(ck);

        if let Some(p) = previous {
            if (c - p).abs() < config.tolerance {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        previous = Some(c);
        if streak >= CONVERGED_STREAK {
            break;
        }
    }

    Ok(TrainOutcome {
        shape,
        weights: w,
        metrics,
        batch,
        last: last.expect("at least one iteration runs"),
    })
}

/// Formats rows under [`METRICS_HEADER`].
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter, r.cost, r.train_acc, r.test_acc, r.elapsed_ms
        ));
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}
