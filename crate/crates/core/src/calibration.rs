//! Split conformal prediction: calibration scores, the conformal quantile,
//! set construction, and Monte Carlo estimation of coverage and set size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean_and_se, Scalar};
use crate::scores::{LabelSpace, ScoreKind, ScoreSpec, Target};
use crate::seed::{rng_from, Rng};

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha.as_f64()))
    }
}

/// n_α = ⌈(n_cal + 1)(1 − α)⌉ − 1.
pub fn n_alpha<T: Scalar>(n_cal: usize, alpha: T) -> Result<usize> {
    check_alpha(alpha)?;
    if n_cal == 0 {
        return Err(Error::Empty("calibration set"));
    }
    let x = (n_cal as f64 + 1.0) * (1.0 - alpha.as_f64());
    // Products such as 20 * 0.95 can land a few ulps above an integer.
    let rank = (x - 8.0 * f64::EPSILON * x).ceil() as usize;
    Ok(rank.saturating_sub(1).min(n_cal))
}

/// Calibration nonconformity scores, kept sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet<T> {
    sorted: Vec<T>,
    r_max: T,
}

impl<T: Scalar> CalibrationSet<T> {
    pub fn new(mut scores: Vec<T>, r_max: T) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("calibration set"));
        }
        if let Some(&bad) = scores.iter().find(|&&s| !(s >= T::zero() && s <= r_max)) {
            return Err(Error::OutOfRange {
                value: bad.as_f64(),
                lo: 0.0,
                hi: r_max.as_f64(),
            });
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("scores are not NaN"));
        Ok(Self { sorted: scores, r_max })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[T] {
        &self.sorted
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    /// Fraction of calibration scores ≤ r.
    pub fn empirical_cdf(&self, r: T) -> T {
        let below = self.sorted.partition_point(|&s| s <= r);
        T::from_count(below) / T::from_count(self.len())
    }

    /// The ascending order statistic of rank n_α + 1, or [`Quantile::FullSpace`]
    /// when the calibration set is too small for the requested level.
    pub fn conformal_quantile(&self, alpha: T) -> Result<Quantile<T>> {
        let k = n_alpha(self.len(), alpha)?;
        Ok(match self.sorted.get(k) {
            Some(&q) => Quantile::Score(q),
            None => Quantile::FullSpace,
        })
    }
}

/// Conformal threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantile<T> {
    Score(T),
    /// Not enough calibration data: every label is accepted.
    FullSpace,
}

impl<T: Scalar> Quantile<T> {
    pub fn accepts(&self, score: T) -> bool {
        match *self {
            Quantile::Score(q) => score <= q,
            Quantile::FullSpace => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSet<T> {
    Labels(Vec<usize>),
    Interval { lo: T, hi: T },
    FullSpace,
    Empty,
}

impl<T: Scalar> PredictionSet<T> {
    /// Counting measure for labels, length for intervals.
    pub fn size(&self, space: &LabelSpace<T>) -> T {
        match self {
            PredictionSet::Labels(l) => T::from_count(l.len()),
            PredictionSet::Interval { lo, hi } => *hi - *lo,
            PredictionSet::FullSpace => space.size(),
            PredictionSet::Empty => T::zero(),
        }
    }

    pub fn contains(&self, y: &Target<T>) -> bool {
        match (self, y) {
            (PredictionSet::Labels(l), Target::Label(v)) => l.contains(v),
            (PredictionSet::Interval { lo, hi }, Target::Real(v)) => *v >= *lo && *v <= *hi,
            (PredictionSet::FullSpace, _) => true,
            _ => false,
        }
    }
}

/// Set of all labels whose score against `prediction` does not exceed `q`.
pub fn predict_set<T: Scalar>(spec: &ScoreSpec<T>, prediction: &Target<T>, q: Quantile<T>) -> Result<PredictionSet<T>> {
    spec.space.check(prediction)?;
    let q = match q {
        Quantile::FullSpace => return Ok(PredictionSet::FullSpace),
        Quantile::Score(q) if q < T::zero() => return Ok(PredictionSet::Empty),
        Quantile::Score(q) => q,
    };
    match (spec.kind, spec.space, *prediction) {
        (ScoreKind::ZeroOne, LabelSpace::Discrete { .. }, Target::Label(l)) => Ok(if q < T::one() {
            PredictionSet::Labels(vec![l])
        } else {
            PredictionSet::FullSpace
        }),
        (ScoreKind::LpPower { p }, LabelSpace::Interval { lo, hi }, Target::Real(f)) => {
            let half = q.powf(T::one() / p);
            Ok(PredictionSet::Interval {
                lo: (f - half).max(lo),
                hi: (f + half).min(hi),
            })
        }
        _ => Err(Error::TypeMismatch(format!("{prediction:?} for {:?}", spec.kind))),
    }
}

/// One test point of a conformal trial: the score of its true label under the
/// drawn test model, and that model's prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestPoint<T> {
    pub score: T,
    pub prediction: Target<T>,
}

/// A calibration set and the test points evaluated against it.
#[derive(Debug, Clone)]
pub struct TrialDraw<T> {
    pub calibration: CalibrationSet<T>,
    pub tests: Vec<TestPoint<T>>,
}

/// Coverage fraction and mean normalized set size of a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome<T> {
    pub coverage: T,
    pub normalized_size: T,
}

pub fn evaluate_trial<T: Scalar>(spec: &ScoreSpec<T>, alpha: T, draw: &TrialDraw<T>) -> Result<TrialOutcome<T>> {
    if draw.tests.is_empty() {
        return Err(Error::Empty("test points"));
    }
    let q = draw.calibration.conformal_quantile(alpha)?;
    let norm = spec.space.size();
    let mut covered = 0usize;
    let mut sizes = Vec::with_capacity(draw.tests.len());
    for t in &draw.tests {
        if q.accepts(t.score) {
            covered += 1;
        }
        sizes.push(predict_set(spec, &t.prediction, q)?.size(&spec.space) / norm);
    }
    let n = T::from_count(draw.tests.len());
    Ok(TrialOutcome {
        coverage: T::from_count(covered) / n,
        normalized_size: crate::scalar::compensated_sum(sizes) / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate<T> {
    pub coverage: T,
    pub coverage_se: T,
    pub mean_normalized_size: T,
    pub size_se: T,
    pub n_trials: usize,
}

/// Monte Carlo estimate of coverage and normalized inefficiency.
///
/// Trial `i` receives an RNG derived from `(seed, i)`, so results do not
/// depend on scheduling. Standard errors are across trials.
pub fn estimate_coverage_and_size<T, F>(
    spec: &ScoreSpec<T>,
    alpha: T,
    sampler: F,
    n_trials: usize,
    seed: u64,
) -> Result<CoverageEstimate<T>>
where
    T: Scalar,
    F: Fn(usize, &mut Rng) -> Result<TrialDraw<T>> + Sync,
{
    check_alpha(alpha)?;
    if n_trials == 0 {
        return Err(Error::Empty("n_trials"));
    }
    let outcomes: Vec<TrialOutcome<T>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(seed, &[i as u64]);
            sampler(i, &mut rng)
                .and_then(|d| evaluate_trial(spec, alpha, &d))
                .map_err(|e| Error::Trial {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let cov: Vec<T> = outcomes.iter().map(|o| o.coverage).collect();
    let size: Vec<T> = outcomes.iter().map(|o| o.normalized_size).collect();
    let (coverage, coverage_se) = mean_and_se(&cov);
    let (mean_normalized_size, size_se) = mean_and_se(&size);
    Ok(CoverageEstimate {
        coverage,
        coverage_se,
        mean_normalized_size,
        size_se,
        n_trials,
    })
}
