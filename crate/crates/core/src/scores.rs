//! Nonconformity scores and the score-size density γ(r).
//!
//! γ(r) is the fraction of (input, candidate-label) mass that a model assigns
//! to score level `r`. It converts tail probabilities of the conformal
//! quantile into expected prediction-set size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Label space of a prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace<T> {
    /// Labels `0..k`.
    Discrete { k: usize },
    /// Real targets in `[lo, hi]`.
    Interval { lo: T, hi: T },
}

impl<T: Scalar> LabelSpace<T> {
    pub fn discrete(k: usize) -> Result<Self> {
        let space = LabelSpace::Discrete { k };
        space.validate()?;
        Ok(space)
    }

    pub fn interval(lo: T, hi: T) -> Result<Self> {
        let space = LabelSpace::Interval { lo, hi };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LabelSpace::Discrete { k } if k < 2 => Err(Error::InvalidLabelSpace(format!(
                "need at least two classes, got {k}"
            ))),
            LabelSpace::Interval { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(Error::InvalidLabelSpace(format!(
                    "interval bounds must satisfy lo < hi, got [{lo}, {hi}]"
                )))
            }
            _ => Ok(()),
        }
    }

    /// |Y|: number of classes, or interval length.
    pub fn size(&self) -> T {
        match *self {
            LabelSpace::Discrete { k } => T::from_count(k),
            LabelSpace::Interval { lo, hi } => hi - lo,
        }
    }

    /// Checks that `target` is an element of this space.
    pub fn check(&self, target: &Target<T>) -> Result<()> {
        match (*self, *target) {
            (LabelSpace::Discrete { k }, Target::Label(l)) => {
                if l < k {
                    Ok(())
                } else {
                    Err(Error::OutOfRange {
                        value: l as f64,
                        lo: 0.0,
                        hi: (k - 1) as f64,
                    })
                }
            }
            (LabelSpace::Interval { lo, hi }, Target::Real(v)) => {
                if v >= lo && v <= hi {
                    Ok(())
                } else {
                    Err(Error::OutOfRange {
                        value: v.as_f64(),
                        lo: lo.as_f64(),
                        hi: hi.as_f64(),
                    })
                }
            }
            (space, target) => Err(Error::TypeMismatch(format!(
                "{target:?} is not an element of {space:?}"
            ))),
        }
    }
}

/// A prediction or ground-truth value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target<T> {
    Label(usize),
    Real(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScoreKind<T> {
    /// 1{prediction ≠ truth}.
    ZeroOne,
    /// |prediction − truth|^p.
    LpPower { p: T },
}

/// A nonconformity score bound to the label space it operates on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSpec<T> {
    pub kind: ScoreKind<T>,
    pub space: LabelSpace<T>,
    pub r_max: T,
}

impl<T: Scalar> ScoreSpec<T> {
    pub fn new(kind: ScoreKind<T>, space: LabelSpace<T>) -> Result<Self> {
        space.validate()?;
        let r_max = match (kind, space) {
            (ScoreKind::ZeroOne, LabelSpace::Discrete { .. }) => T::one(),
            (ScoreKind::LpPower { p }, LabelSpace::Interval { lo, hi }) => {
                if !(p >= T::one()) || !p.is_finite() {
                    return Err(Error::Domain(format!("lp exponent must be >= 1, got {p}")));
                }
                (hi - lo).powf(p)
            }
            (kind, space) => {
                return Err(Error::UnsupportedPairing(format!("{kind:?} over {space:?}")));
            }
        };
        Ok(Self { kind, space, r_max })
    }

    pub fn zero_one(k: usize) -> Result<Self> {
        Self::new(ScoreKind::ZeroOne, LabelSpace::discrete(k)?)
    }

    pub fn lp_power(p: T, lo: T, hi: T) -> Result<Self> {
        Self::new(ScoreKind::LpPower { p }, LabelSpace::interval(lo, hi)?)
    }
}

/// Nonconformity score R(prediction, truth).
pub fn nc_score<T: Scalar>(spec: &ScoreSpec<T>, prediction: &Target<T>, truth: &Target<T>) -> Result<T> {
    spec.space.check(prediction)?;
    spec.space.check(truth)?;
    match (spec.kind, *prediction, *truth) {
        (ScoreKind::ZeroOne, Target::Label(a), Target::Label(b)) => {
            Ok(if a == b { T::zero() } else { T::one() })
        }
        (ScoreKind::LpPower { p }, Target::Real(a), Target::Real(b)) => {
            Ok((a - b).abs().powf(p).min(spec.r_max))
        }
        _ => Err(Error::TypeMismatch(format!(
            "{:?} cannot score {prediction:?} against {truth:?}",
            spec.kind
        ))),
    }
}

/// How γ is represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRepr<T> {
    /// Point masses `(score, mass)` sorted by score.
    Atoms(Vec<(T, T)>),
    /// 2 r^{1/p − 1} / (p · width) on (0, r_max].
    LpPower { p: T, width: T, r_max: T },
    /// Histogram: `density[i]` on `[edges[i], edges[i + 1])`.
    Tabulated { edges: Vec<T>, density: Vec<T> },
}

/// Score-size density together with its computed monotonicity flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaDensity<T> {
    pub repr: GammaRepr<T>,
    /// Whether γ is non-decreasing on its support, established by scanning it.
    pub non_decreasing: bool,
}

const MONOTONE_SCAN_POINTS: usize = 1024;

impl<T: Scalar> GammaDensity<T> {
    pub fn atoms(mut atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("gamma atoms"));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite atom positions"));
        if atoms.iter().any(|&(r, m)| !(m > T::zero()) || !r.is_finite() || r < T::zero()) {
            return Err(Error::Domain("atom masses must be positive at finite scores >= 0".into()));
        }
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain("duplicate atom positions".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1.as_f64()).sum();
        let tol = 1e-9f64.max(16.0 * T::epsilon().as_f64() * atoms.len() as f64);
        if (total - 1.0).abs() > tol {
            return Err(Error::Domain(format!("atom masses sum to {total}, expected 1")));
        }
        let non_decreasing = atoms.windows(2).all(|w| w[0].1 <= w[1].1);
        Ok(Self {
            repr: GammaRepr::Atoms(atoms),
            non_decreasing,
        })
    }

    pub fn lp_power(p: T, width: T) -> Result<Self> {
        if !(p >= T::one()) || !(width > T::zero()) {
            return Err(Error::Domain(format!("lp density needs p >= 1 and width > 0, got p={p}, width={width}")));
        }
        let mut g = Self {
            repr: GammaRepr::LpPower {
                p,
                width,
                r_max: width.powf(p),
            },
            non_decreasing: false,
        };
        g.non_decreasing = g.scan_non_decreasing();
        Ok(g)
    }

    pub fn tabulated(edges: Vec<T>, density: Vec<T>) -> Result<Self> {
        if density.is_empty() {
            return Err(Error::Empty("tabulated gamma bins"));
        }
        if edges.len() != density.len() + 1 {
            return Err(Error::SizeMismatch(format!(
                "{} edges for {} bins",
                edges.len(),
                density.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("histogram edges must be strictly increasing".into()));
        }
        if density.iter().any(|&d| !(d >= T::zero()) || !d.is_finite()) {
            return Err(Error::Domain("tabulated densities must be finite and nonnegative".into()));
        }
        let non_decreasing = density.windows(2).all(|w| w[0] <= w[1]);
        Ok(Self {
            repr: GammaRepr::Tabulated { edges, density },
            non_decreasing,
        })
    }

    fn scan_non_decreasing(&self) -> bool {
        let hi = self.r_max();
        let n = MONOTONE_SCAN_POINTS;
        let mut prev = T::neg_infinity();
        for i in 1..=n {
            let r = hi * T::from_count(i) / T::from_count(n);
            let d = self.density(r);
            if d < prev * (T::one() - T::epsilon() * T::lit(8.0)) {
                return false;
            }
            prev = d;
        }
        true
    }

    pub fn r_max(&self) -> T {
        match &self.repr {
            GammaRepr::Atoms(a) => a.last().map(|x| x.0).unwrap_or_else(T::zero),
            GammaRepr::LpPower { r_max, .. } => *r_max,
            GammaRepr::Tabulated { edges, .. } => *edges.last().expect("nonempty edges"),
        }
    }

    /// Density at `r` (point mass for atoms, zero off the atoms).
    pub fn density(&self, r: T) -> T {
        match &self.repr {
            GammaRepr::Atoms(atoms) => atoms
                .iter()
                .find(|a| a.0 == r)
                .map(|a| a.1)
                .unwrap_or_else(T::zero),
            GammaRepr::LpPower { p, width, r_max } => {
                if r < T::zero() || r > *r_max {
                    T::zero()
                } else {
                    T::lit(2.0) * r.powf(T::one() / *p - T::one()) / (*p * *width)
                }
            }
            GammaRepr::Tabulated { edges, density } => {
                if r < edges[0] || r > *edges.last().unwrap() {
                    return T::zero();
                }
                let i = edges.partition_point(|&e| e <= r);
                density[i.saturating_sub(1).min(density.len() - 1)]
            }
        }
    }

    /// ∫_a^b γ(r) dr for continuous representations; total atom mass in `[a, b)` for atoms.
    pub fn mass_between(&self, a: T, b: T) -> T {
        if !(b > a) {
            return T::zero();
        }
        match &self.repr {
            GammaRepr::Atoms(atoms) => atoms
                .iter()
                .filter(|x| x.0 >= a && x.0 < b)
                .map(|x| x.1)
                .sum(),
            GammaRepr::LpPower { p, width, r_max } => {
                let lo = a.max(T::zero()).min(*r_max);
                let hi = b.max(T::zero()).min(*r_max);
                let inv = T::one() / *p;
                T::lit(2.0) * (hi.powf(inv) - lo.powf(inv)) / *width
            }
            GammaRepr::Tabulated { edges, density } => {
                let mut total = T::zero();
                for (i, &d) in density.iter().enumerate() {
                    let lo = edges[i].max(a);
                    let hi = edges[i + 1].min(b);
                    if hi > lo {
                        total = total + d * (hi - lo);
                    }
                }
                total
            }
        }
    }

    /// Interior breakpoints of a tabulated density.
    pub fn knots(&self) -> Vec<T> {
        match &self.repr {
            GammaRepr::Tabulated { edges, .. } => edges.clone(),
            _ => Vec::new(),
        }
    }
}

/// Closed-form γ for the supported score/space pairings.
pub fn gamma_closed_form<T: Scalar>(kind: ScoreKind<T>, space: LabelSpace<T>) -> Result<GammaDensity<T>> {
    space.validate()?;
    match (kind, space) {
        (ScoreKind::ZeroOne, LabelSpace::Discrete { k }) => {
            let inv = T::one() / T::from_count(k);
            GammaDensity::atoms(vec![(T::zero(), inv), (T::one(), T::one() - inv)])
        }
        (ScoreKind::LpPower { p }, LabelSpace::Interval { lo, hi }) => GammaDensity::lp_power(p, hi - lo),
        (kind, space) => Err(Error::UnsupportedPairing(format!("{kind:?} over {space:?}"))),
    }
}

/// Histogram resolution for empirical densities of continuous scores.
pub const DEFAULT_GAMMA_BINS: usize = 128;

/// Monte Carlo estimate of γ.
///
/// Each input `x` is paired with a freshly drawn model via `predict` and with a
/// uniformly drawn candidate label (uniform class, or uniform point of the
/// interval). Discrete scores give atoms; continuous scores give an
/// equal-width histogram over `[0, r_max]` with `bins` bins.
pub fn gamma_empirical<T, X, R, F>(
    spec: &ScoreSpec<T>,
    inputs: &[X],
    mut predict: F,
    bins: usize,
    rng: &mut R,
) -> Result<GammaDensity<T>>
where
    T: Scalar,
    R: Rng,
    F: FnMut(&X, &mut R) -> Result<Target<T>>,
{
    if inputs.is_empty() {
        return Err(Error::Empty("gamma_empirical inputs"));
    }
    let n = inputs.len();
    match spec.space {
        LabelSpace::Discrete { k } => {
            let mut counts: Vec<usize> = Vec::new();
            let mut levels: Vec<T> = Vec::new();
            for x in inputs {
                let pred = predict(x, rng)?;
                let candidate = Target::Label(rng.random_range(0..k));
                let s = nc_score(spec, &pred, &candidate)?;
                match levels.iter().position(|&l| l == s) {
                    Some(i) => counts[i] += 1,
                    None => {
                        levels.push(s);
                        counts.push(1);
                    }
                }
            }
            let nf = T::from_count(n);
            GammaDensity::atoms(
                levels
                    .into_iter()
                    .zip(counts)
                    .map(|(l, c)| (l, T::from_count(c) / nf))
                    .collect(),
            )
        }
        LabelSpace::Interval { lo, hi } => {
            if bins == 0 {
                return Err(Error::Domain("zero histogram bins".into()));
            }
            let r_max = spec.r_max;
            let width = r_max / T::from_count(bins);
            let mut counts = vec![0usize; bins];
            let (lo64, hi64) = (lo.as_f64(), hi.as_f64());
            for x in inputs {
                let pred = predict(x, rng)?;
                let y = T::lit(rng.random_range(lo64..=hi64)).max(lo).min(hi);
                let s = nc_score(spec, &pred, &Target::Real(y))?;
                let idx = (s / width).floor().to_usize().unwrap_or(0).min(bins - 1);
                counts[idx] += 1;
            }
            let edges = (0..=bins)
                .map(|i| if i == bins { r_max } else { width * T::from_count(i) })
                .collect();
            let scale = T::from_count(n) * width;
            GammaDensity::tabulated(
                edges,
                counts.into_iter().map(|c| T::from_count(c) / scale).collect(),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;

    #[test]
    fn zero_one_examples() {
        let spec = ScoreSpec::<f64>::zero_one(10).unwrap();
        assert_eq!(nc_score(&spec, &Target::Label(3), &Target::Label(3)).unwrap(), 0.0);
        assert_eq!(nc_score(&spec, &Target::Label(3), &Target::Label(5)).unwrap(), 1.0);
    }

    #[test]
    fn lp_power_example() {
        let spec = ScoreSpec::lp_power(2.0, 0.0, 1.0).unwrap();
        let s = nc_score(&spec, &Target::Real(0.5), &Target::Real(0.3)).unwrap();
        assert!((s - 0.04_f64).abs() < 1e-15);
    }

    #[test]
    fn score_errors() {
        let spec = ScoreSpec::lp_power(2.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            nc_score(&spec, &Target::Real(1.5), &Target::Real(0.3)),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            nc_score(&spec, &Target::Label(1), &Target::Real(0.3)),
            Err(Error::TypeMismatch(_))
        ));
        let cls = ScoreSpec::<f64>::zero_one(3).unwrap();
        assert!(nc_score(&cls, &Target::Label(3), &Target::Label(0)).is_err());
        assert!(ScoreSpec::<f64>::zero_one(1).is_err());
        assert!(ScoreSpec::lp_power(0.5, 0.0, 1.0).is_err());
        assert!(matches!(
            ScoreSpec::new(ScoreKind::ZeroOne, LabelSpace::interval(0.0, 1.0).unwrap()),
            Err(Error::UnsupportedPairing(_))
        ));
    }

    #[test]
    fn closed_form_examples() {
        let g = gamma_closed_form::<f64>(ScoreKind::ZeroOne, LabelSpace::discrete(10).unwrap()).unwrap();
        assert_eq!(g.repr, GammaRepr::Atoms(vec![(0.0, 0.1), (1.0, 0.9)]));
        assert!(g.non_decreasing);

        let g = gamma_closed_form(ScoreKind::LpPower { p: 1.0 }, LabelSpace::interval(0.0, 2.0).unwrap()).unwrap();
        for r in [0.01, 0.5, 1.0, 1.99] {
            assert_eq!(g.density(r), 1.0);
        }
        assert!(g.non_decreasing);

        let g = gamma_closed_form(ScoreKind::LpPower { p: 2.0 }, LabelSpace::interval(0.0, 1.0).unwrap()).unwrap();
        assert!((g.density(0.25) - 2.0_f64).abs() < 1e-12);
        assert!(!g.non_decreasing);

        assert!(matches!(
            gamma_closed_form::<f64>(ScoreKind::LpPower { p: 2.0 }, LabelSpace::discrete(3).unwrap()),
            Err(Error::UnsupportedPairing(_))
        ));
    }

    #[test]
    fn zero_one_atoms_monotone_for_all_k() {
        for k in 2..200 {
            let g = gamma_closed_form::<f64>(ScoreKind::ZeroOne, LabelSpace::Discrete { k }).unwrap();
            assert!(g.non_decreasing, "k = {k}");
        }
    }

    #[test]
    fn lp_density_integrates_to_one_over_half_width() {
        for &(p, lo, hi) in &[(1.0, 0.0, 1.0), (2.0, -1.0, 3.0), (3.5, 0.0, 0.5), (1.25, 2.0, 7.0)] {
            let g = GammaDensity::<f64>::lp_power(p, hi - lo).unwrap();
            let upper = ((hi - lo) / 2.0_f64).powf(p);
            // antiderivative 2 r^{1/p} / width
            let by_antiderivative = 2.0 * upper.powf(1.0 / p) / (hi - lo);
            assert!((by_antiderivative - 1.0).abs() < 1e-15);
            assert!((g.mass_between(0.0, upper) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lp_monotonicity_flag() {
        assert!(GammaDensity::<f64>::lp_power(1.0, 1.0).unwrap().non_decreasing);
        for p in [1.01, 1.5, 2.0, 4.0] {
            assert!(!GammaDensity::<f64>::lp_power(p, 1.0).unwrap().non_decreasing);
        }
    }

    #[test]
    fn empirical_zero_one_matches_closed_form() {
        let spec = ScoreSpec::<f64>::zero_one(10).unwrap();
        let inputs: Vec<usize> = (0..100_000).collect();
        let mut rng = rng_from(11, &[]);
        // Any classifier: here a fixed function of the input.
        let g = gamma_empirical(&spec, &inputs, |&x, _| Ok(Target::Label(x % 7)), 0, &mut rng).unwrap();
        match g.repr {
            GammaRepr::Atoms(a) => {
                assert_eq!(a.len(), 2);
                assert!((a[0].1 - 0.1).abs() < 0.01, "mass at 0 = {}", a[0].1);
            }
            _ => panic!("expected atoms"),
        }
    }

    #[test]
    fn empirical_lp_below_envelope() {
        let spec = ScoreSpec::<f64>::lp_power(1.0, 0.0, 1.0).unwrap();
        let inputs: Vec<f64> = (0..100_000).map(|i| (i as f64 + 0.5) / 100_000.0).collect();
        let mut rng = rng_from(5, &[]);
        let g = gamma_empirical(&spec, &inputs, |&x, _| Ok(Target::Real(x)), 128, &mut rng).unwrap();
        let (edges, density) = match &g.repr {
            GammaRepr::Tabulated { edges, density } => (edges.clone(), density.clone()),
            _ => panic!("expected histogram"),
        };
        assert!((g.mass_between(0.0, 1.0) - 1.0).abs() < 1e-12);
        // Direct histogram oracle: with prediction f uniform on [0,1] and y
        // uniform, |f - y| has density 2(1 - r); the envelope is 2.
        let n = 100_000.0;
        for (i, d) in density.iter().enumerate() {
            let w = edges[i + 1] - edges[i];
            let mid = 0.5 * (edges[i] + edges[i + 1]);
            let expected = 2.0 * (1.0 - mid);
            let se = (expected * w / n).sqrt() / w;
            assert!(*d <= 2.0 + 4.0 * se, "bin {i}: {d}");
            assert!((d - expected).abs() < 5.0 * se + 1e-3, "bin {i}: {d} vs {expected}");
        }
    }

    #[test]
    fn empirical_errors() {
        let spec = ScoreSpec::<f64>::lp_power(1.0, 0.0, 1.0).unwrap();
        let mut rng = rng_from(1, &[]);
        let empty: Vec<f64> = vec![];
        assert!(matches!(
            gamma_empirical(&spec, &empty, |&x, _| Ok(Target::Real(x)), 8, &mut rng),
            Err(Error::Empty(_))
        ));
        assert!(gamma_empirical(&spec, &[0.5], |&x, _| Ok(Target::Real(x)), 0, &mut rng).is_err());
    }

    #[test]
    fn empirical_zero_one_deviation_shrinks_with_samples() {
        // Mean absolute deviation of the mass at 0 over 40 seeds at n and 3n.
        let spec = ScoreSpec::<f64>::zero_one(4).unwrap();
        let dev = |n: usize| -> f64 {
            let inputs: Vec<usize> = (0..n).collect();
            (0..40u64)
                .map(|s| {
                    let mut rng = rng_from(s, &[n as u64]);
                    let g = gamma_empirical(&spec, &inputs, |_, _| Ok(Target::Label(0)), 0, &mut rng).unwrap();
                    (g.density(0.0) - 0.25).abs()
                })
                .sum::<f64>()
                / 40.0
        };
        let d1 = dev(2_000);
        let d3 = dev(6_000);
        assert!(d3 < d1, "{d3} !< {d1}");
        // 1/sqrt(3) scaling, with slack for Monte Carlo noise.
        assert!(d3 / d1 < 0.9);
    }

    #[test]
    fn tabulated_validation() {
        assert!(GammaDensity::<f64>::tabulated(vec![0.0, 1.0], vec![-1.0]).is_err());
        assert!(GammaDensity::<f64>::tabulated(vec![0.0, 1.0, 2.0], vec![1.0]).is_err());
        let g = GammaDensity::<f64>::tabulated(vec![0.0, 0.5, 1.0], vec![0.5, 1.5]).unwrap();
        assert!(g.non_decreasing);
        assert_eq!(g.density(0.75), 1.5);
        assert_eq!(g.mass_between(0.25, 0.75), 0.125 + 0.375);
    }

    #[test]
    fn atoms_validation() {
        assert!(GammaDensity::<f64>::atoms(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(GammaDensity::<f64>::atoms(vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
        let g = GammaDensity::<f64>::atoms(vec![(1.0, 0.3), (0.0, 0.7)]).unwrap();
        assert!(!g.non_decreasing);
    }

    #[test]
    fn works_in_single_precision() {
        let spec = ScoreSpec::<f32>::lp_power(2.0, 0.0, 1.0).unwrap();
        let s = nc_score(&spec, &Target::Real(0.5), &Target::Real(0.3)).unwrap();
        assert!((s - 0.04).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn lp_scores_within_range(p in 1.0f64..5.0, lo in -10.0f64..10.0, w in 0.1f64..20.0,
                                  a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let spec = ScoreSpec::lp_power(p, lo, lo + w).unwrap();
            let s = nc_score(&spec, &Target::Real(lo + a * w), &Target::Real(lo + b * w)).unwrap();
            prop_assert!(s >= 0.0 && s <= spec.r_max);
        }

        #[test]
        fn zero_one_scores_within_range(k in 2usize..50, a in 0usize..50, b in 0usize..50) {
            let spec = ScoreSpec::<f64>::zero_one(k).unwrap();
            let s = nc_score(&spec, &Target::Label(a % k), &Target::Label(b % k)).unwrap();
            prop_assert!(s == 0.0 || s == 1.0);
            prop_assert_eq!(s == 0.0, a % k == b % k);
        }
    }
}
