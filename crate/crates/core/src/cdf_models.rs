//! Training-side c.d.f.s of the nonconformity score.
//!
//! Training c.d.f.s count scores strictly below `r`, so step functions here
//! are left-continuous. The calibration c.d.f. in [`crate::calibration`]
//! counts `≤ r` and is right-continuous.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::{nc_score, ScoreSpec, Target};
use crate::seed::{rng_from, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfSource {
    TrainingAveraged,
    DoublyEmpirical,
    PopulationMc,
    Analytic,
}

impl CdfSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CdfSource::TrainingAveraged => "training_averaged",
            CdfSource::DoublyEmpirical => "doubly_empirical",
            CdfSource::PopulationMc => "population_mc",
            CdfSource::Analytic => "analytic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "training_averaged" => CdfSource::TrainingAveraged,
            "doubly_empirical" => CdfSource::DoublyEmpirical,
            "population_mc" => CdfSource::PopulationMc,
            "analytic" => CdfSource::Analytic,
            other => return Err(Error::InvalidCdf(format!("unknown source {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfKind<T> {
    /// `F(r) = levels[#{knots < r}]`; `levels.len() == knots.len() + 1`.
    StrictStep { knots: Vec<T>, levels: Vec<T> },
    /// Piecewise linear through `points`, flat outside them.
    Grid { points: Vec<(T, T)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfEstimate<T> {
    pub kind: CdfKind<T>,
    pub source: CdfSource,
}

/// Shape of a c.d.f. on an interval between consecutive knots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece<T> {
    Constant(T),
    /// Linear through `(r0, v0)` and `(r1, v1)`.
    Linear { r0: T, v0: T, r1: T, v1: T },
}

impl<T: Scalar> Piece<T> {
    pub fn eval(&self, r: T) -> T {
        match *self {
            Piece::Constant(v) => v,
            Piece::Linear { r0, v0, r1, v1 } => v0 + (v1 - v0) * (r - r0) / (r1 - r0),
        }
    }
}

/// Interval `[a, b]` on which the c.d.f. follows a single [`Piece`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub a: T,
    pub b: T,
    pub piece: Piece<T>,
}

fn check_level<T: Scalar>(v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidCdf(format!("value {v} outside [0, 1]")))
    }
}

fn check_non_decreasing<T: Scalar>(values: impl Iterator<Item = T>) -> Result<()> {
    let mut prev = T::neg_infinity();
    for v in values {
        check_level(v)?;
        if v < prev {
            return Err(Error::InvalidCdf(format!("decreasing value {v} after {prev}")));
        }
        prev = v;
    }
    Ok(())
}

impl<T: Scalar> CdfEstimate<T> {
    pub fn step(knots: Vec<T>, levels: Vec<T>, source: CdfSource) -> Result<Self> {
        if levels.len() != knots.len() + 1 {
            return Err(Error::SizeMismatch(format!(
                "{} knots need {} levels, got {}",
                knots.len(),
                knots.len() + 1,
                levels.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidCdf("knots must be finite and strictly increasing".into()));
        }
        check_non_decreasing(levels.iter().copied())?;
        Ok(Self {
            kind: CdfKind::StrictStep { knots, levels },
            source,
        })
    }

    pub fn grid(points: Vec<(T, T)>, source: CdfSource) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("grid c.d.f. points"));
        }
        if points.iter().any(|p| !p.0.is_finite()) || points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidCdf("grid abscissae must be finite and strictly increasing".into()));
        }
        check_non_decreasing(points.iter().map(|p| p.1))?;
        Ok(Self {
            kind: CdfKind::Grid { points },
            source,
        })
    }

    /// Left-continuous empirical c.d.f. `#{s < r} / n` of a score multiset.
    pub fn from_scores(mut scores: Vec<T>, source: CdfSource) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("scores"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidCdf("non-finite score".into()));
        }
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = T::from_count(scores.len());
        let mut knots = Vec::new();
        let mut levels = vec![T::zero()];
        let mut i = 0;
        while i < scores.len() {
            let v = scores[i];
            while i < scores.len() && scores[i] == v {
                i += 1;
            }
            knots.push(v);
            levels.push(T::from_count(i) / n);
        }
        Self::step(knots, levels, source)
    }

    pub fn eval(&self, r: T) -> T {
        match &self.kind {
            CdfKind::StrictStep { knots, levels } => levels[knots.partition_point(|&k| k < r)],
            CdfKind::Grid { points } => {
                let j = points.partition_point(|p| p.0 <= r);
                if j == 0 {
                    points[0].1
                } else if j == points.len() {
                    points[j - 1].1
                } else {
                    let (r0, v0) = points[j - 1];
                    let (r1, v1) = points[j];
                    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
                }
            }
        }
    }

    /// Breakpoints of the c.d.f.
    pub fn knots(&self) -> Vec<T> {
        match &self.kind {
            CdfKind::StrictStep { knots, .. } => knots.clone(),
            CdfKind::Grid { points } => points.iter().map(|p| p.0).collect(),
        }
    }

    /// Splits `[a, b]` at the knots, giving the exact piece on each part.
    pub fn segments(&self, a: T, b: T) -> Vec<Segment<T>> {
        if !(b > a) {
            return Vec::new();
        }
        let mut cuts = vec![a];
        cuts.extend(self.knots().into_iter().filter(|&k| k > a && k < b));
        cuts.push(b);
        cuts.windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                let mid = lo + (hi - lo) / T::lit(2.0);
                let piece = match &self.kind {
                    CdfKind::StrictStep { .. } => Piece::Constant(self.eval(mid)),
                    CdfKind::Grid { points } => {
                        let j = points.partition_point(|p| p.0 <= mid);
                        if j == 0 || j == points.len() {
                            Piece::Constant(self.eval(mid))
                        } else {
                            let (r0, v0) = points[j - 1];
                            let (r1, v1) = points[j];
                            Piece::Linear { r0, v0, r1, v1 }
                        }
                    }
                };
                Segment { a: lo, b: hi, piece }
            })
            .collect()
    }

    /// Writes `r,value,source` rows. A step c.d.f. is written as a leading
    /// `-inf` row carrying the value below the first knot, followed by one
    /// row per knot carrying the value just above it.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["r", "value", "source"])?;
        let src = self.source.as_str();
        match &self.kind {
            CdfKind::StrictStep { knots, levels } => {
                out.write_record(["-inf".to_string(), levels[0].to_string(), src.to_string()])?;
                for (k, v) in knots.iter().zip(&levels[1..]) {
                    out.write_record([k.to_string(), v.to_string(), src.to_string()])?;
                }
            }
            CdfKind::Grid { points } => {
                for (r, v) in points {
                    out.write_record([r.to_string(), v.to_string(), src.to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["r", "value", "source"] {
            return Err(Error::InvalidCdf(format!("unexpected header {headers:?}")));
        }
        let mut rows: Vec<(f64, T)> = Vec::new();
        let mut source = None;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidCdf(format!("row {}: {e}", i + 1)))
            };
            let r = parse(&rec[0])?;
            let v = T::lit(parse(&rec[1])?);
            let s = CdfSource::parse(rec[2].trim())?;
            if *source.get_or_insert(s) != s {
                return Err(Error::InvalidCdf(format!("row {}: mixed sources", i + 1)));
            }
            rows.push((r, v));
        }
        let source = source.ok_or(Error::Empty("c.d.f. rows"))?;
        match rows.first() {
            Some(&(r, v0)) if r == f64::NEG_INFINITY => {
                let knots = rows[1..].iter().map(|x| T::lit(x.0)).collect();
                let mut levels = vec![v0];
                levels.extend(rows[1..].iter().map(|x| x.1));
                Self::step(knots, levels, source)
            }
            _ => Self::grid(rows.into_iter().map(|(r, v)| (T::lit(r), v)).collect(), source),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingCdfMode {
    /// Every model draw applied to every training point, averaged over draws.
    Averaged,
    /// Model draw `i` applied to training point `i` only.
    DoublyEmpirical,
}

/// Empirical training c.d.f. of the score from a finite ensemble of model draws.
pub fn training_cdf<T, M, X, P>(
    models: &[M],
    points: &[(X, Target<T>)],
    spec: &ScoreSpec<T>,
    mode: TrainingCdfMode,
    predict: P,
) -> Result<CdfEstimate<T>>
where
    T: Scalar,
    P: Fn(&M, &X) -> Result<Target<T>>,
{
    if models.is_empty() {
        return Err(Error::Empty("model draws"));
    }
    if points.is_empty() {
        return Err(Error::Empty("training points"));
    }
    let score = |m: &M, (x, y): &(X, Target<T>)| -> Result<T> { nc_score(spec, &predict(m, x)?, y) };
    match mode {
        TrainingCdfMode::Averaged => {
            let mut scores = Vec::with_capacity(models.len() * points.len());
            for m in models {
                for p in points {
                    scores.push(score(m, p)?);
                }
            }
            CdfEstimate::from_scores(scores, CdfSource::TrainingAveraged)
        }
        TrainingCdfMode::DoublyEmpirical => {
            if models.len() != points.len() {
                return Err(Error::SizeMismatch(format!(
                    "doubly empirical mode needs one draw per point: {} draws, {} points",
                    models.len(),
                    points.len()
                )));
            }
            let scores = models
                .iter()
                .zip(points)
                .map(|(m, p)| score(m, p))
                .collect::<Result<Vec<_>>>()?;
            CdfEstimate::from_scores(scores, CdfSource::DoublyEmpirical)
        }
    }
}

/// Monte Carlo population c.d.f. `Pr[R(f_θ(X), Y) < r]` from independent
/// (model, data point) draws on a stream seeded by `seed`.
pub fn population_cdf_mc<T, M, X, DM, DP, P>(
    mut draw_model: DM,
    mut draw_point: DP,
    predict: P,
    spec: &ScoreSpec<T>,
    n_samples: usize,
    seed: u64,
) -> Result<CdfEstimate<T>>
where
    T: Scalar,
    DM: FnMut(&mut Rng) -> M,
    DP: FnMut(&mut Rng) -> Result<(X, Target<T>)>,
    P: Fn(&M, &X) -> Result<Target<T>>,
{
    if n_samples == 0 {
        return Err(Error::Empty("population samples"));
    }
    let mut rng = rng_from(seed, &[]);
    let mut scores = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let m = draw_model(&mut rng);
        let (x, y) = draw_point(&mut rng)?;
        scores.push(nc_score(spec, &predict(&m, &x)?, &y)?);
    }
    CdfEstimate::from_scores(scores, CdfSource::PopulationMc)
}

fn nudge<T: Scalar>(r: T, up: bool) -> T {
    let step = (r.abs() * T::epsilon() * T::lit(4.0)).max(T::min_positive_value());
    if up {
        r + step
    } else {
        r - step
    }
}

/// sup_r |pop(r) − train(r)| over `grid` refined with every knot of both
/// c.d.f.s and points just either side of each.
pub fn generalization_gap<T: Scalar>(pop: &CdfEstimate<T>, train: &CdfEstimate<T>, grid: &[T]) -> Result<T> {
    if grid.is_empty() {
        return Err(Error::Empty("gap grid"));
    }
    let mut base: Vec<T> = grid.to_vec();
    base.extend(pop.knots());
    base.extend(train.knots());
    let mut gap = T::zero();
    for &r in &base {
        for probe in [r, nudge(r, false), nudge(r, true)] {
            gap = gap.max((pop.eval(probe) - train.eval(probe)).abs());
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn spec() -> ScoreSpec<f64> {
        ScoreSpec::lp_power(1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn strict_inequality_on_training_scores() {
        let pts: Vec<(f64, Target<f64>)> = [0.1, 0.2, 0.3, 0.4].iter().map(|&s| (s, Target::Real(0.0))).collect();
        // Model predicts the input, so the score equals the input.
        let cdf = training_cdf(&[()], &pts, &spec(), TrainingCdfMode::Averaged, |_, &x| Ok(Target::Real(x))).unwrap();
        assert_eq!(cdf.eval(0.3), 0.5);
        assert_eq!(cdf.eval(0.30000001), 0.75);
        assert_eq!(cdf.source, CdfSource::TrainingAveraged);
    }

    #[test]
    fn perfect_fit_is_one_above_zero() {
        let pts: Vec<(f64, Target<f64>)> = (0..10).map(|i| (i as f64 / 10.0, Target::Real(i as f64 / 10.0))).collect();
        let cdf = training_cdf(&[()], &pts, &spec(), TrainingCdfMode::Averaged, |_, &x| Ok(Target::Real(x))).unwrap();
        assert_eq!(cdf.eval(0.0), 0.0);
        for r in [1e-12, 0.3, 1.0] {
            assert_eq!(cdf.eval(r), 1.0);
        }
    }

    #[test]
    fn averaged_mode_averages_over_draws() {
        let pts = vec![(0usize, Target::Real(0.0))];
        // Draw A predicts 0 (score 0), draw B predicts 1 (score 1).
        let cdf = training_cdf(&[0.0, 1.0], &pts, &spec(), TrainingCdfMode::Averaged, |&m, _| Ok(Target::Real(m))).unwrap();
        assert_eq!(cdf.eval(0.5), 0.5);
    }

    #[test]
    fn training_cdf_errors() {
        let pts = vec![(0usize, Target::Real(0.0)), (1usize, Target::Real(0.0))];
        let none: [f64; 0] = [];
        let p = |&m: &f64, _: &usize| Ok(Target::Real(m));
        assert!(matches!(
            training_cdf(&none, &pts, &spec(), TrainingCdfMode::Averaged, p),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            training_cdf(&[0.1], &pts, &spec(), TrainingCdfMode::DoublyEmpirical, p),
            Err(Error::SizeMismatch(_))
        ));
        let empty: Vec<(usize, Target<f64>)> = vec![];
        assert!(training_cdf(&[0.1], &empty, &spec(), TrainingCdfMode::Averaged, p).is_err());
    }

    #[test]
    fn doubly_empirical_with_repeated_model_equals_averaged() {
        let mut rng = rng_from(3, &[]);
        let pts: Vec<(f64, Target<f64>)> = (0..200).map(|_| (rng.random::<f64>(), Target::Real(rng.random::<f64>()))).collect();
        let model = 0.3_f64;
        let p = |m: &f64, x: &f64| Ok(Target::Real((m + x) / 2.0));
        let avg = training_cdf(&[model], &pts, &spec(), TrainingCdfMode::Averaged, p).unwrap();
        let dbl = training_cdf(&vec![model; pts.len()], &pts, &spec(), TrainingCdfMode::DoublyEmpirical, p).unwrap();
        assert_eq!(avg.kind, dbl.kind);
    }

    #[test]
    fn population_point_mass() {
        let cdf = population_cdf_mc(
            |_| (),
            |_| Ok(((), Target::Real(0.0))),
            |_, _| Ok(Target::Real(0.5)),
            &spec(),
            100,
            1,
        )
        .unwrap();
        assert_eq!(cdf.eval(0.5), 0.0);
        assert_eq!(cdf.eval(0.5000001), 1.0);
        assert_eq!(cdf.knots(), vec![0.5]);
    }

    fn uniform_population(n: usize, seed: u64) -> CdfEstimate<f64> {
        population_cdf_mc(
            |_| (),
            |rng| Ok((rng.random::<f64>(), Target::Real(0.0))),
            |_, &x| Ok(Target::Real(x)),
            &spec(),
            n,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn population_uniform_scores() {
        let cdf = uniform_population(100_000, 17);
        assert!((cdf.eval(0.5) - 0.5).abs() < 0.005);
        assert_eq!(cdf, uniform_population(100_000, 17));
    }

    #[test]
    fn population_converges_with_more_samples() {
        // Mean sup-deviation from F(r) = r over 30 seeds, at n and 4n.
        let dev = |n: usize| -> f64 {
            let exact = CdfEstimate::grid(vec![(0.0, 0.0), (1.0, 1.0)], CdfSource::Analytic).unwrap();
            (0..30)
                .map(|s| generalization_gap(&uniform_population(n, 1000 + s), &exact, &[0.0, 1.0]).unwrap())
                .sum::<f64>()
                / 30.0
        };
        let (d1, d4) = (dev(2_000), dev(8_000));
        assert!(d4 < d1, "{d4} !< {d1}");
        assert!(d4 / d1 < 0.7);
    }

    #[test]
    fn gap_examples() {
        let a = CdfEstimate::step(vec![0.5], vec![0.0, 1.0], CdfSource::PopulationMc).unwrap();
        let b = CdfEstimate::step(vec![0.6], vec![0.0, 1.0], CdfSource::TrainingAveraged).unwrap();
        assert_eq!(generalization_gap(&a, &a, &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(generalization_gap(&a, &b, &[0.0, 1.0]).unwrap(), 1.0);
        let pop = CdfEstimate::grid(vec![(0.0, 0.0), (1.0, 1.0)], CdfSource::Analytic).unwrap();
        let train = CdfEstimate::<f64>::grid(vec![(0.0, 0.1), (0.9, 1.0), (1.0, 1.0)], CdfSource::Analytic).unwrap();
        let g = generalization_gap(&pop, &train, &[0.0, 0.5, 1.0]).unwrap();
        assert!((g - 0.1).abs() < 1e-12, "{g}");
        assert!(matches!(generalization_gap(&pop, &train, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn construction_rejects_invalid() {
        assert!(CdfEstimate::<f64>::step(vec![0.5], vec![0.5, 0.2], CdfSource::Analytic).is_err());
        assert!(CdfEstimate::<f64>::step(vec![0.5], vec![0.0, 1.2], CdfSource::Analytic).is_err());
        assert!(CdfEstimate::<f64>::step(vec![0.5, 0.4], vec![0.0, 0.1, 0.2], CdfSource::Analytic).is_err());
        assert!(CdfEstimate::<f64>::grid(vec![], CdfSource::Analytic).is_err());
        assert!(CdfEstimate::<f64>::grid(vec![(0.0, 0.5), (1.0, 0.4)], CdfSource::Analytic).is_err());
    }

    #[test]
    fn segments_follow_the_step_values() {
        let c = CdfEstimate::step(vec![0.2, 0.7], vec![0.0, 0.5, 0.95], CdfSource::Analytic).unwrap();
        let segs = c.segments(0.1, 1.0);
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[0].piece, Piece::Constant(0.0));
        assert_eq!(segs[1].piece, Piece::Constant(0.5));
        assert_eq!(segs[2].piece, Piece::Constant(0.95));
        assert_eq!((segs[1].a, segs[1].b), (0.2, 0.7));
    }

    #[test]
    fn csv_round_trip() {
        let step = CdfEstimate::from_scores(vec![0.3, 0.1, 0.1, 0.9], CdfSource::DoublyEmpirical).unwrap();
        let grid = CdfEstimate::grid(vec![(0.0, 0.0), (0.25, 0.5), (1.0, 1.0)], CdfSource::Analytic).unwrap();
        for c in [step, grid] {
            let mut buf = Vec::new();
            c.write_csv(&mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with("r,value,source\n"));
            assert_eq!(CdfEstimate::<f64>::read_csv(&buf[..]).unwrap(), c);
        }
        assert!(CdfEstimate::<f64>::read_csv("a,b,c\n1,2,3\n".as_bytes()).is_err());
    }

    fn arb_step() -> impl Strategy<Value = CdfEstimate<f64>> {
        prop::collection::vec(0u16..1000, 1..40).prop_map(|raw| {
            CdfEstimate::from_scores(raw.into_iter().map(|v| v as f64 / 1000.0).collect(), CdfSource::PopulationMc).unwrap()
        })
    }

    proptest! {
        #[test]
        fn estimates_are_monotone_and_bounded(c in arb_step(), probes in prop::collection::vec(-0.5f64..1.5, 2..30)) {
            let mut probes = probes;
            probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let vals: Vec<f64> = probes.iter().map(|&r| c.eval(r)).collect();
            for w in vals.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn gap_is_a_metric(a in arb_step(), b in arb_step(), c in arb_step()) {
            let grid = [0.0, 0.5, 1.0];
            let ab = generalization_gap(&a, &b, &grid).unwrap();
            let ba = generalization_gap(&b, &a, &grid).unwrap();
            let ac = generalization_gap(&a, &c, &grid).unwrap();
            let cb = generalization_gap(&c, &b, &grid).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= ac + cb + 1e-12);
            prop_assert!(ab >= 0.0);
        }
    }
}
