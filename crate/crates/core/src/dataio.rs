//! Synthetic data generators, CSV ingestion and train/calibration/test splits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{LabelSpace, Target};
use crate::seed::rng_from;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    Synthetic {
        kind: SyntheticKind,
        seed: u64,
        /// Fraction of regression targets that hit the clipping bounds.
        clip_rate: f64,
    },
    Csv {
        path: PathBuf,
    },
    Split {
        part: SplitPart,
        seed: u64,
        parent: Box<Provenance>,
    },
    /// Built in memory by the caller.
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Cal,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<Target<f64>>,
    pub space: LabelSpace<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        targets: Vec<Target<f64>>,
        space: LabelSpace<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        space.validate()?;
        if features.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if features.len() != targets.len() {
            return Err(Error::SizeMismatch(format!(
                "{} feature rows but {} targets",
                features.len(),
                targets.len()
            )));
        }
        let d = features[0].len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite feature in row {i}")));
            }
        }
        for t in &targets {
            space.check(t)?;
        }
        Ok(Self {
            features,
            targets,
            space,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Rows at `indices`, in that order. Empty index lists are allowed and
    /// give an empty dataset (used for zero-size test splits).
    pub fn subset(&self, indices: &[usize], provenance: Provenance) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            space: self.space,
            provenance,
        }
    }

    /// First `n` rows.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            features: self.features[..n].to_vec(),
            targets: self.targets[..n].to_vec(),
            space: self.space,
            provenance: self.provenance.clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &Target<f64>)> {
        self.features.iter().map(|r| r.as_slice()).zip(&self.targets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum SyntheticKind {
    /// Unit-variance Gaussian classes, equal priors, means evenly spaced on a
    /// circle of radius `separation` in the first two coordinates.
    Classification { k: usize, d: usize, separation: f64 },
    /// `y = clip(f(x) + noise · (hi − lo) · N(0, 1), lo, hi)` with `x ~ U[-1, 1]^d`.
    Regression { d: usize, noise: f64, lo: f64, hi: f64 },
}

impl SyntheticKind {
    pub fn space(&self) -> Result<LabelSpace<f64>> {
        match *self {
            SyntheticKind::Classification { k, .. } => LabelSpace::discrete(k),
            SyntheticKind::Regression { lo, hi, .. } => LabelSpace::interval(lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        self.space()?;
        match *self {
            SyntheticKind::Classification { d, separation, .. } => {
                if d < 2 {
                    return Err(Error::Domain(format!("classification generator needs d >= 2, got {d}")));
                }
                if !(separation >= 0.0) || !separation.is_finite() {
                    return Err(Error::Domain(format!("separation must be finite and >= 0, got {separation}")));
                }
            }
            SyntheticKind::Regression { d, noise, .. } => {
                if d == 0 {
                    return Err(Error::Domain("regression generator needs d >= 1".into()));
                }
                if !(noise >= 0.0) || !noise.is_finite() {
                    return Err(Error::Domain(format!("noise must be finite and >= 0, got {noise}")));
                }
            }
        }
        Ok(())
    }
}

/// Noise-free regression function, with values in `[lo + 0.1w, lo + 0.9w]`.
pub fn regression_mean(x: &[f64], lo: f64, hi: f64) -> f64 {
    use std::f64::consts::PI;
    let w = hi - lo;
    let a = x[0];
    let b = x[1 % x.len()];
    lo + w * (0.5 + 0.25 * (PI * a).sin() + 0.15 * (PI * b).cos() * a)
}

pub fn generate_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<Dataset> {
    kind.validate()?;
    if n == 0 {
        return Err(Error::Empty("synthetic sample"));
    }
    let mut rng = rng_from(seed, &[0x6461_7461]);
    let mut features = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut clipped = 0usize;
    match kind {
        SyntheticKind::Classification { k, d, separation } => {
            for _ in 0..n {
                let y = rng.random_range(0..k);
                let angle = std::f64::consts::TAU * y as f64 / k as f64;
                let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                x[0] += separation * angle.cos();
                x[1] += separation * angle.sin();
                features.push(x);
                targets.push(Target::Label(y));
            }
        }
        SyntheticKind::Regression { d, noise, lo, hi } => {
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let eps: f64 = StandardNormal.sample(&mut rng);
                let raw = regression_mean(&x, lo, hi) + noise * (hi - lo) * eps;
                let y = raw.clamp(lo, hi);
                if y != raw {
                    clipped += 1;
                }
                features.push(x);
                targets.push(Target::Real(y));
            }
        }
    }
    let provenance = Provenance::Synthetic {
        kind,
        seed,
        clip_rate: clipped as f64 / n as f64,
    };
    Dataset::new(features, targets, kind.space()?, provenance)
}

/// Expected CSV layout: columns `x0..x{dim-1}` then `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub dim: usize,
    pub space: LabelSpace<f64>,
}

impl CsvSchema {
    fn header(&self) -> Vec<String> {
        (0..self.dim)
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect()
    }
}

pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<Dataset> {
    let file = File::open(path)?;
    read_csv(file, schema, path)
}

/// Parses CSV from any reader; `path` is used for provenance and messages.
/// Row numbers in errors count the header as row 1.
pub fn read_csv<R: Read>(reader: R, schema: CsvSchema, path: &Path) -> Result<Dataset> {
    schema.space.validate()?;
    let err = |row: usize, message: String| Error::Csv {
        path: path.display().to_string(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let expected = schema.header();
    if header != expected {
        return Err(err(1, format!("header {header:?} does not match {expected:?}")));
    }
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| err(row, e.to_string()))?;
        if record.len() != schema.dim + 1 {
            return Err(err(row, format!("expected {} fields, got {}", schema.dim + 1, record.len())));
        }
        let mut x = Vec::with_capacity(schema.dim);
        for (j, field) in record.iter().take(schema.dim).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(row, format!("x{j} = {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(err(row, format!("x{j} is not finite")));
            }
            x.push(v);
        }
        let field = record[schema.dim].trim();
        let y: f64 = field
            .parse()
            .map_err(|_| err(row, format!("y = {field:?} is not a number")))?;
        let target = match schema.space {
            LabelSpace::Discrete { .. } => {
                if y.fract() != 0.0 || y < 0.0 {
                    return Err(err(row, format!("label {field:?} is not a class index")));
                }
                Target::Label(y as usize)
            }
            LabelSpace::Interval { .. } => Target::Real(y),
        };
        schema.space.check(&target).map_err(|e| err(row, e.to_string()))?;
        features.push(x);
        targets.push(target);
    }
    if features.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    Dataset::new(
        features,
        targets,
        schema.space,
        Provenance::Csv {
            path: path.to_path_buf(),
        },
    )
}

pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    write_csv(data, file)
}

/// Writes with shortest round-trip float formatting, so reading back is exact.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let schema = CsvSchema {
        dim: data.dim(),
        space: data.space,
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.header())?;
    for (x, y) in data.iter() {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(match y {
            Target::Label(k) => k.to_string(),
            Target::Real(v) => v.to_string(),
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub cal: Dataset,
    pub test: Dataset,
    /// Source row indices of each part, in order.
    pub indices: [Vec<usize>; 3],
}

/// Seeded uniform permutation, then contiguous train/cal/test blocks.
pub fn split_dataset(data: &Dataset, n_tr: usize, n_cal: usize, n_test: usize, seed: u64) -> Result<Split> {
    let total = n_tr
        .checked_add(n_cal)
        .and_then(|s| s.checked_add(n_test))
        .ok_or_else(|| Error::SizeMismatch("split sizes overflow".into()))?;
    if total > data.len() {
        return Err(Error::SizeMismatch(format!(
            "split {n_tr} + {n_cal} + {n_test} = {total} exceeds {} rows",
            data.len()
        )));
    }
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(&mut rng_from(seed, &[0x7370_6c69]));
    let tr = perm[..n_tr].to_vec();
    let cal = perm[n_tr..n_tr + n_cal].to_vec();
    let test = perm[n_tr + n_cal..total].to_vec();
    let part = |p: SplitPart, idx: &[usize]| {
        data.subset(
            idx,
            Provenance::Split {
                part: p,
                seed,
                parent: Box::new(data.provenance.clone()),
            },
        )
    };
    Ok(Split {
        train: part(SplitPart::Train, &tr),
        cal: part(SplitPart::Cal, &cal),
        test: part(SplitPart::Test, &test),
        indices: [tr, cal, test],
    })
}
