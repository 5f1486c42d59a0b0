//! Desk-scale learners and the finite-ensemble training distribution.
//!
//! A stochastic training rule is represented by a uniform ensemble of
//! parameter vectors: one plain SGD run, independent-seed runs, or snapshots
//! of a single Langevin chain.

mod network;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use network::{argmax, Architecture, Head};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::scores::{LabelSpace, Target};
use crate::seed::{rng_from, Rng};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learner: LearnerKind,
    /// Hidden layer widths; ignored by the logistic learner.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Langevin temperature; 0 is plain SGD.
    pub temperature: f64,
    pub ensemble_size: usize,
    /// Epochs between Langevin snapshots after `epochs` of burn-in.
    /// 0 trains `ensemble_size` independent chains instead.
    pub snapshot_stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learner: LearnerKind::Logistic,
            hidden: vec![32, 32],
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            temperature: 0.0,
            ensemble_size: 16,
            snapshot_stride: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Domain(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.ensemble_size == 0 {
            return Err(Error::Domain("epochs, batch size and ensemble size must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Domain(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.learner == LearnerKind::Mlp && self.hidden.contains(&0) {
            return Err(Error::Domain("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    fn langevin_snapshots(&self) -> bool {
        self.temperature > 0.0 && self.snapshot_stride > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetadata {
    pub learner: LearnerKind,
    pub config: TrainConfig,
    /// Training data contained a single class.
    pub single_class: bool,
}

/// Uniform distribution over trained parameter vectors of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnsemble {
    pub format_version: u32,
    pub architecture: Architecture,
    pub members: Vec<Vec<f64>>,
    pub metadata: EnsembleMetadata,
}

impl ModelEnsemble {
    pub fn new(architecture: Architecture, members: Vec<Vec<f64>>, metadata: EnsembleMetadata) -> Result<Self> {
        let e = Self {
            format_version: ENSEMBLE_FORMAT_VERSION,
            architecture,
            members,
            metadata,
        };
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Domain(format!("unsupported ensemble format {}", self.format_version)));
        }
        if self.members.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        let n = self.architecture.n_params();
        for m in &self.members {
            if m.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> Model<'_> {
        Model {
            architecture: &self.architecture,
            params: &self.members[i],
        }
    }

    pub fn models(&self) -> impl Iterator<Item = Model<'_>> {
        (0..self.len()).map(|i| self.member(i))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s)?;
        e.validate()?;
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// A single parameter vector with its architecture.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub architecture: &'a Architecture,
    pub params: &'a [f64],
}

impl Model<'_> {
    /// Argmax label for classifiers, clipped output for regressors.
    pub fn predict(&self, x: &[f64]) -> Result<Target<f64>> {
        self.architecture.check_input(x)?;
        let out = self.architecture.raw_output(self.params, x);
        Ok(match self.architecture.head {
            Head::Softmax { .. } => Target::Label(argmax(&out)),
            Head::Regression { lo, hi } => Target::Real(out[0].clamp(lo, hi)),
        })
    }

    pub fn raw_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.architecture.check_input(x)?;
        Ok(self.architecture.raw_output(self.params, x))
    }

    /// Mean training loss on `data`.
    pub fn loss(&self, data: &Dataset) -> f64 {
        let (xs, ys) = batch_view(data, &(0..data.len()).collect::<Vec<_>>());
        self.architecture.loss_and_grad(self.params, &xs, &ys).0
    }
}

/// Uniform draw of one ensemble member.
pub fn draw_model<'a>(ensemble: &'a ModelEnsemble, rng: &mut Rng) -> Model<'a> {
    if ensemble.len() == 1 {
        return ensemble.member(0);
    }
    ensemble.member(rng.random_range(0..ensemble.len()))
}

pub fn train_classifier(data: &Dataset, cfg: &TrainConfig) -> Result<ModelEnsemble> {
    if !matches!(data.space, LabelSpace::Discrete { .. }) {
        return Err(Error::TypeMismatch("classifier needs discrete labels".into()));
    }
    Ok(train_with_history(data, cfg)?.0)
}

pub fn train_regressor(data: &Dataset, cfg: &TrainConfig) -> Result<ModelEnsemble> {
    if !matches!(data.space, LabelSpace::Interval { .. }) {
        return Err(Error::TypeMismatch("regressor needs real targets".into()));
    }
    Ok(train_with_history(data, cfg)?.0)
}

fn architecture_for(data: &Dataset, cfg: &TrainConfig) -> Architecture {
    let head = match data.space {
        LabelSpace::Discrete { k } => Head::Softmax { k },
        LabelSpace::Interval { lo, hi } => Head::Regression { lo, hi },
    };
    Architecture {
        input_dim: data.dim(),
        hidden: match cfg.learner {
            LearnerKind::Logistic => Vec::new(),
            LearnerKind::Mlp => cfg.hidden.clone(),
        },
        head,
    }
}

/// Trains an ensemble and returns the full-data loss after each epoch of the
/// first chain.
pub fn train_with_history(data: &Dataset, cfg: &TrainConfig) -> Result<(ModelEnsemble, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    for t in &data.targets {
        data.space.check(t)?;
    }
    let arch = architecture_for(data, cfg);
    let single_class = match data.space {
        LabelSpace::Discrete { .. } => data.targets.windows(2).all(|w| w[0] == w[1]),
        LabelSpace::Interval { .. } => false,
    };
    let ys: Vec<f64> = data
        .targets
        .iter()
        .map(|t| match *t {
            Target::Label(k) => k as f64,
            Target::Real(v) => v,
        })
        .collect();

    let (members, history) = if cfg.langevin_snapshots() {
        let mut rng = rng_from(cfg.seed, &[0]);
        let mut params = init_params(&arch, &mut rng);
        let mut history = Vec::new();
        for _ in 0..cfg.epochs {
            history.push(epoch(&arch, &mut params, data, &ys, cfg, &mut rng));
        }
        let mut members = Vec::with_capacity(cfg.ensemble_size);
        for _ in 0..cfg.ensemble_size {
            for _ in 0..cfg.snapshot_stride {
                history.push(epoch(&arch, &mut params, data, &ys, cfg, &mut rng));
            }
            members.push(params.clone());
        }
        (members, history)
    } else {
        let runs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.ensemble_size)
            .into_par_iter()
            .map(|m| {
                let mut rng = rng_from(cfg.seed, &[m as u64]);
                let mut params = init_params(&arch, &mut rng);
                let history = (0..cfg.epochs)
                    .map(|_| epoch(&arch, &mut params, data, &ys, cfg, &mut rng))
                    .collect();
                (params, history)
            })
            .collect();
        let history = runs[0].1.clone();
        (runs.into_iter().map(|r| r.0).collect(), history)
    };
    if members.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("parameters diverged; lower the learning rate".into()));
    }
    let ensemble = ModelEnsemble::new(
        arch,
        members,
        EnsembleMetadata {
            learner: cfg.learner,
            config: cfg.clone(),
            single_class,
        },
    )?;
    Ok((ensemble, history))
}

/// He-scaled Gaussian weights, zero biases.
fn init_params(arch: &Architecture, rng: &mut Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(arch.n_params());
    for w in arch.widths().windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let normal = Normal::new(0.0, (2.0 / n_in.max(1) as f64).sqrt()).expect("positive sd");
        params.extend((0..n_in * n_out).map(|_| normal.sample(rng)));
        params.extend(std::iter::repeat_n(0.0, n_out));
    }
    params
}

fn batch_view<'a>(data: &'a Dataset, idx: &[usize]) -> (Vec<&'a [f64]>, Vec<f64>) {
    let xs = idx.iter().map(|&i| data.features[i].as_slice()).collect();
    let ys = idx
        .iter()
        .map(|&i| match data.targets[i] {
            Target::Label(k) => k as f64,
            Target::Real(v) => v,
        })
        .collect();
    (xs, ys)
}

/// One pass of shuffled mini-batch (noisy) gradient descent; returns the
/// full-data loss afterwards.
fn epoch(arch: &Architecture, params: &mut [f64], data: &Dataset, ys: &[f64], cfg: &TrainConfig, rng: &mut Rng) -> f64 {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let noise_sd = (2.0 * cfg.learning_rate * cfg.temperature).sqrt();
    for chunk in order.chunks(cfg.batch_size) {
        let xs: Vec<&[f64]> = chunk.iter().map(|&i| data.features[i].as_slice()).collect();
        let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
        let (_, grad) = arch.loss_and_grad(params, &xs, &by);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
            if noise_sd > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                *p += noise_sd * z;
            }
        }
    }
    let xs: Vec<&[f64]> = data.features.iter().map(|r| r.as_slice()).collect();
    arch.loss_and_grad(params, &xs, ys).0
}

/// Fraction of `data` a model labels correctly.
pub fn accuracy(model: &Model<'_>, data: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    for (x, y) in data.iter() {
        if model.predict(x)? == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, Provenance, SyntheticKind};

    fn separable(n: usize) -> Dataset {
        let mut rng = rng_from(3, &[]);
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let sign = if label == 0 { -1.0 } else { 1.0 };
            let x0 = sign * (0.5 + rng.random::<f64>());
            let x1 = rng.random_range(-1.0..1.0);
            features.push(vec![x0, x1]);
            targets.push(Target::Label(label));
        }
        Dataset::new(features, targets, LabelSpace::Discrete { k: 2 }, Provenance::Manual).unwrap()
    }

    fn logistic_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            learner: LearnerKind::Logistic,
            epochs,
            learning_rate: 0.5,
            batch_size: 16,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_data_reaches_full_training_accuracy() {
        let data = separable(200);
        let e = train_classifier(&data, &logistic_cfg(500)).unwrap();
        assert_eq!(accuracy(&e.member(0), &data).unwrap(), 1.0);
    }

    #[test]
    fn empty_and_single_class_data() {
        let data = separable(10);
        let empty = data.subset(&[], Provenance::Manual);
        assert!(matches!(train_classifier(&empty, &logistic_cfg(5)), Err(Error::Empty(_))));
        let one = data.subset(&[0, 2, 4], Provenance::Manual);
        let e = train_classifier(&one, &logistic_cfg(5)).unwrap();
        assert!(e.metadata.single_class);
        assert!(!train_classifier(&data, &logistic_cfg(5)).unwrap().metadata.single_class);
    }

    #[test]
    fn training_is_deterministic() {
        let data = generate_synthetic(SyntheticKind::Classification { k: 3, d: 4, separation: 2.0 }, 120, 1).unwrap();
        let cfg = TrainConfig {
            learner: LearnerKind::Mlp,
            hidden: vec![8, 8],
            ensemble_size: 3,
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train_classifier(&data, &cfg).unwrap();
        let b = train_classifier(&data, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a.members[0], a.members[1]);
    }

    #[test]
    fn constant_target_regression() {
        let data = generate_synthetic(SyntheticKind::Regression { d: 3, noise: 0.0, lo: 0.0, hi: 1.0 }, 100, 2).unwrap();
        let data = Dataset::new(
            data.features.clone(),
            vec![Target::Real(0.5); data.len()],
            data.space,
            Provenance::Manual,
        )
        .unwrap();
        let cfg = TrainConfig {
            learner: LearnerKind::Mlp,
            hidden: vec![8, 8],
            learning_rate: 0.5,
            epochs: 3000,
            batch_size: 10,
            ..TrainConfig::default()
        };
        let e = train_regressor(&data, &cfg).unwrap();
        for x in &data.features {
            match e.member(0).predict(x).unwrap() {
                Target::Real(v) => assert!((v - 0.5).abs() < 0.01, "{v} {}", e.member(0).loss(&data)),
                t => panic!("{t:?}"),
            }
        }
    }

    #[test]
    fn langevin_snapshots_differ() {
        let data = separable(60);
        let cfg = TrainConfig {
            temperature: 1e-3,
            snapshot_stride: 2,
            ensemble_size: 4,
            ..logistic_cfg(10)
        };
        let e = train_classifier(&data, &cfg).unwrap();
        assert_eq!(e.len(), 4);
        assert_ne!(e.members[2], e.members[3]);
    }

    #[test]
    fn draw_frequencies_are_uniform() {
        let arch = Architecture {
            input_dim: 1,
            hidden: vec![],
            head: Head::Softmax { k: 2 },
        };
        let members = (0..4).map(|i| vec![i as f64; arch.n_params()]).collect();
        let meta = EnsembleMetadata {
            learner: LearnerKind::Logistic,
            config: TrainConfig::default(),
            single_class: false,
        };
        let e = ModelEnsemble::new(arch.clone(), members, meta.clone()).unwrap();
        let mut rng = rng_from(1, &[]);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[draw_model(&e, &mut rng).params[0] as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
        let seq = |seed| {
            let mut rng = rng_from(seed, &[]);
            (0..20).map(|_| draw_model(&e, &mut rng).params[0]).collect::<Vec<_>>()
        };
        assert_eq!(seq(5), seq(5));

        let single = ModelEnsemble::new(arch.clone(), vec![vec![7.0; arch.n_params()]], meta).unwrap();
        assert!((0..50).all(|_| draw_model(&single, &mut rng).params[0] == 7.0));
    }

    #[test]
    fn prediction_rules() {
        let arch = Architecture {
            input_dim: 3,
            hidden: vec![],
            head: Head::Softmax { k: 10 },
        };
        let zeros = vec![0.0; arch.n_params()];
        let m = Model {
            architecture: &arch,
            params: &zeros,
        };
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]).unwrap(), Target::Label(0));
        assert!(matches!(m.predict(&[1.0]), Err(Error::Dimension { expected: 3, got: 1 })));
        assert_eq!(argmax(&[0.1, 2.3, -1.0]), 1);

        let reg = Architecture {
            input_dim: 1,
            hidden: vec![],
            head: Head::Regression { lo: 0.0, hi: 1.0 },
        };
        // w = 0, b = 1.4
        let p = vec![0.0, 1.4];
        let m = Model {
            architecture: &reg,
            params: &p,
        };
        assert_eq!(m.predict(&[0.3]).unwrap(), Target::Real(1.0));
    }

    #[test]
    fn ensemble_json_round_trip_and_version() {
        let data = separable(20);
        let e = train_classifier(&data, &logistic_cfg(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.json");
        e.save(&path).unwrap();
        assert_eq!(ModelEnsemble::load(&path).unwrap(), e);
        let mut bad = e.clone();
        bad.format_version = 99;
        assert!(ModelEnsemble::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = e;
        bad.members[0].pop();
        assert!(ModelEnsemble::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn full_batch_descent_is_monotone() {
        let data = generate_synthetic(SyntheticKind::Regression { d: 2, noise: 0.05, lo: 0.0, hi: 1.0 }, 64, 4).unwrap();
        let cfg = TrainConfig {
            learner: LearnerKind::Mlp,
            hidden: vec![6],
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 64,
            ..TrainConfig::default()
        };
        let (_, history) = train_with_history(&data, &cfg).unwrap();
        assert!(history.windows(2).all(|w| w[1] <= w[0]), "{history:?}");
        let cls = separable(64);
        let cfg = TrainConfig {
            learning_rate: 0.2,
            batch_size: 64,
            ..logistic_cfg(100)
        };
        let (_, history) = train_with_history(&cls, &cfg).unwrap();
        assert!(history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_configs() {
        let data = separable(10);
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..logistic_cfg(1) },
            TrainConfig { epochs: 0, ..logistic_cfg(1) },
            TrainConfig { ensemble_size: 0, ..logistic_cfg(1) },
            TrainConfig { temperature: -1.0, ..logistic_cfg(1) },
        ] {
            assert!(train_classifier(&data, &cfg).is_err());
        }
    }
}
