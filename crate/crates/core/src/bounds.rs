//! Upper bounds on the expected size of split-conformal prediction sets.
//!
//! The bound integrates a Chernoff tail `exp(-n_cal · d_KL(n_α/n_cal ‖ F̂(r) − slack))`
//! against the score-size density γ above `R_min`, the first score level at
//! which the slack-corrected training c.d.f. reaches `n_α/n_cal`, and adds a
//! tail term for the scores below `R_min`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calibration::n_alpha;
use crate::cdf_models::{CdfEstimate, CdfKind, Piece};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, SimpsonConfig};
use crate::scalar::Scalar;
use crate::scores::{gamma_closed_form, GammaDensity, GammaRepr, LabelSpace, ScoreKind};

/// Binary KL divergence `a ln(a/b) + (1 − a) ln((1 − a)/(1 − b))` in nats.
///
/// `0 · ln(0/x) = 0`; the result is `+∞` when `b ∈ {0, 1}` and `a ≠ b`.
pub fn binary_kl<T: Scalar>(a: T, b: T) -> Result<T> {
    let unit = |x: T| x >= T::zero() && x <= T::one();
    if !unit(a) || !unit(b) {
        return Err(Error::Domain(format!("binary_kl arguments must lie in [0, 1], got ({a}, {b})")));
    }
    if a == b {
        return Ok(T::zero());
    }
    let one = T::one();
    let first = if a == T::zero() {
        T::zero()
    } else if b == T::zero() {
        T::infinity()
    } else {
        a * (a / b).ln()
    };
    let second = if a == one {
        T::zero()
    } else if b == one {
        T::infinity()
    } else {
        (one - a) * ((one - a) / (one - b)).ln()
    };
    Ok((first + second).max(T::zero()))
}

/// β(δ, n_tr) = √(32 ln 2 · (2c ln(n_tr)/δ + ln(2√n_tr/δ))).
pub fn beta_fn<T: Scalar>(c: T, delta: T, n_tr: usize) -> Result<T> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::Domain(format!("mutual-information constant must be positive, got {c}")));
    }
    check_delta(delta)?;
    if n_tr < 2 {
        return Err(Error::Domain(format!("beta needs n_tr >= 2, got {n_tr}")));
    }
    let n = T::from_count(n_tr);
    let two = T::lit(2.0);
    let inner = two * c * n.ln() / delta + (two * n.sqrt() / delta).ln();
    Ok((T::lit(32.0) * two.ln() * inner).sqrt())
}

/// μ(δ, n_tr) = √(ln(2/δ)/2) + √(4 ln(n_tr e / 2)).
pub fn mu_fn<T: Scalar>(delta: T, n_tr: usize) -> Result<T> {
    check_delta(delta)?;
    if n_tr == 0 {
        return Err(Error::Domain("mu needs n_tr >= 1".into()));
    }
    let two = T::lit(2.0);
    let n = T::from_count(n_tr);
    let first = ((two / delta).ln() / two).sqrt();
    let second = (T::lit(4.0) * (n * T::one().exp() / two).ln()).sqrt();
    Ok(first + second)
}

fn check_delta<T: Scalar>(delta: T) -> Result<()> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SlackMode<T> {
    /// Population and training c.d.f. coincide: no slack.
    OracleZero,
    /// β(δ, n_tr)/√n_tr, valid with probability 1 − δ.
    AssumptionBeta { c: T, delta: T },
    /// (β + μ)/√n_tr for the doubly empirical c.d.f., valid with probability 1 − 2δ.
    CorollaryBetaMu { c: T, delta: T },
    /// Caller-supplied slack and confidence.
    Manual { value: T, confidence: T },
}

/// A slack mode together with its resolved value for a given n_tr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackSpec<T> {
    pub mode: SlackMode<T>,
    pub value: T,
    pub confidence: T,
}

impl<T: Scalar> SlackSpec<T> {
    pub fn resolve(mode: SlackMode<T>, n_tr: usize) -> Result<Self> {
        let (value, confidence) = match mode {
            SlackMode::OracleZero => (T::zero(), T::one()),
            SlackMode::AssumptionBeta { c, delta } => {
                (beta_fn(c, delta, n_tr)? / T::from_count(n_tr).sqrt(), T::one() - delta)
            }
            SlackMode::CorollaryBetaMu { c, delta } => (
                (beta_fn(c, delta, n_tr)? + mu_fn(delta, n_tr)?) / T::from_count(n_tr).sqrt(),
                T::one() - T::lit(2.0) * delta,
            ),
            SlackMode::Manual { value, confidence } => {
                if !(value >= T::zero()) || !value.is_finite() {
                    return Err(Error::Domain(format!("slack must be finite and >= 0, got {value}")));
                }
                (value, confidence)
            }
        };
        Ok(Self {
            mode,
            value,
            confidence,
        })
    }

    pub fn oracle() -> Self {
        Self::resolve(SlackMode::OracleZero, 2).expect("oracle slack always resolves")
    }

    pub fn manual(value: T) -> Result<Self> {
        Self::resolve(
            SlackMode::Manual {
                value,
                confidence: T::one(),
            },
            2,
        )
    }
}

/// How the contribution of scores below `R_min` is accounted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// γ(R_min) · R_min; only an upper bound when γ is non-decreasing.
    PaperLiteral,
    /// ∫_0^{R_min} γ(r) dr; valid for any γ.
    #[default]
    ExactIntegral,
}

impl TailMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TailMode::PaperLiteral => "paper_literal",
            TailMode::ExactIntegral => "exact_integral",
        }
    }
}

impl fmt::Display for TailMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery<T> {
    pub n_tr: usize,
    pub n_cal: usize,
    pub alpha: T,
    pub cdf: CdfEstimate<T>,
    pub gamma: GammaDensity<T>,
    pub slack: SlackSpec<T>,
    pub r_max: T,
    #[serde(default)]
    pub tail_mode: TailMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult<T> {
    pub normalized_bound: T,
    pub r_min: T,
    pub integral_term: T,
    pub tail_term: T,
    pub clamped: bool,
    pub confidence: T,
    /// Monotonicity flag of the γ used; a `PaperLiteral` tail is only a bound when set.
    #[serde(skip, default = "default_true")]
    pub gamma_non_decreasing: bool,
}

fn default_true() -> bool {
    true
}

impl<T: Scalar> BoundResult<T> {
    pub const CSV_HEADER: [&'static str; 6] = [
        "normalized_bound",
        "r_min",
        "integral_term",
        "tail_term",
        "clamped",
        "confidence",
    ];

    pub fn csv_row(&self) -> [String; 6] {
        [
            self.normalized_bound.to_string(),
            self.r_min.to_string(),
            self.integral_term.to_string(),
            self.tail_term.to_string(),
            self.clamped.to_string(),
            self.confidence.to_string(),
        ]
    }

    fn assemble(integral_term: T, tail_term: T, r_min: T, confidence: T, gamma_non_decreasing: bool) -> Self {
        let total = integral_term + tail_term;
        Self {
            normalized_bound: total.min(T::one()),
            r_min,
            integral_term,
            tail_term,
            clamped: total > T::one(),
            confidence,
            gamma_non_decreasing,
        }
    }
}

/// inf{r ∈ [0, r_max] : F̂(r) ≥ threshold}, or `r_max` if no level qualifies.
pub fn r_min<T: Scalar>(cdf: &CdfEstimate<T>, threshold: T, r_max: T) -> T {
    if cdf.eval(T::zero()) >= threshold {
        return T::zero();
    }
    let found = match &cdf.kind {
        CdfKind::StrictStep { knots, levels } => {
            // F̂ = levels[j] on (knots[j-1], knots[j]].
            levels
                .iter()
                .position(|&v| v >= threshold)
                .filter(|&j| j > 0)
                .map(|j| knots[j - 1])
        }
        CdfKind::Grid { points } => points.windows(2).find_map(|w| {
            let ((r0, v0), (r1, v1)) = (w[0], w[1]);
            if v1 >= threshold && r1 > T::zero() {
                let r = if v1 > v0 {
                    r0 + (threshold - v0) * (r1 - r0) / (v1 - v0)
                } else {
                    r0
                };
                Some(r.max(r0))
            } else {
                None
            }
        }),
    };
    match found {
        Some(r) if r < r_max => r.max(T::zero()),
        _ => r_max,
    }
}

struct Chernoff<T> {
    n_cal: T,
    level: T,
    slack: T,
}

impl<T: Scalar> Chernoff<T> {
    /// Bound on Pr[quantile ≥ r] given the training c.d.f. value at r; the
    /// trivial bound 1 wherever the corrected value does not exceed the level.
    fn factor(&self, cdf_value: T) -> T {
        // Values above 1 only arise from rounding.
        let b = cdf_value.min(T::one()) - self.slack;
        if !(b > self.level) || b <= T::zero() {
            return T::one();
        }
        match binary_kl(self.level, b) {
            Ok(kl) => (-self.n_cal * kl).exp(),
            Err(_) => T::one(),
        }
    }
}

/// Evaluates the expected-set-size bound for an arbitrary training c.d.f. and γ.
///
/// Atom densities are summed exactly. Continuous densities are integrated
/// with adaptive Simpson on each interval where the c.d.f. has a single
/// closed-form piece; the `ℓp` density is integrated in `u = r^{1/p}` so its
/// singularity at zero disappears.
pub fn bound_theorem1<T: Scalar>(q: &BoundQuery<T>) -> Result<BoundResult<T>> {
    bound_theorem1_with(q, SimpsonConfig::default())
}

pub fn bound_theorem1_with<T: Scalar>(q: &BoundQuery<T>, cfg: SimpsonConfig) -> Result<BoundResult<T>> {
    if !(q.r_max > T::zero()) || !q.r_max.is_finite() {
        return Err(Error::Domain(format!("r_max must be positive, got {}", q.r_max)));
    }
    let g_max = q.gamma.r_max();
    if (g_max - q.r_max).abs() > q.r_max * T::lit(1e-9) {
        return Err(Error::SizeMismatch(format!(
            "gamma support ends at {g_max}, query r_max is {}",
            q.r_max
        )));
    }
    let n_a = n_alpha(q.n_cal, q.alpha)?;
    let level = T::from_count(n_a) / T::from_count(q.n_cal);
    let threshold = level + q.slack.value;
    let chernoff = Chernoff {
        n_cal: T::from_count(q.n_cal),
        level,
        slack: q.slack.value,
    };
    let rmin = r_min(&q.cdf, threshold, q.r_max);

    match &q.gamma.repr {
        GammaRepr::Atoms(atoms) => {
            // Only atoms carry mass, so R_min moves up to the first atom where
            // the threshold is met.
            let rmin = atoms
                .iter()
                .map(|a| a.0)
                .find(|&r| r >= rmin && q.cdf.eval(r) >= threshold)
                .unwrap_or(q.r_max);
            let mut integral = T::zero();
            let mut tail = T::zero();
            for &(r, mass) in atoms {
                if r < rmin {
                    tail = tail + mass;
                } else {
                    integral = integral + mass * chernoff.factor(q.cdf.eval(r));
                }
            }
            Ok(BoundResult::assemble(integral, tail, rmin, q.slack.confidence, q.gamma.non_decreasing))
        }
        GammaRepr::LpPower { p, width, .. } => {
            let (p, width) = (*p, *width);
            let inv = T::one() / p;
            let scale = T::lit(2.0) / width;
            let mut integral = T::zero();
            for seg in q.cdf.segments(rmin, q.r_max) {
                let (piece, lo, hi) = (seg.piece, seg.a, seg.b);
                let f = |u: T| chernoff.factor(piece.eval(u.powf(p).max(lo).min(hi))) * scale;
                integral = integral + adaptive_simpson(f, seg.a.powf(inv), seg.b.powf(inv), cfg)?.value;
            }
            let tail = match q.tail_mode {
                TailMode::PaperLiteral => T::lit(2.0) * rmin.powf(inv) / (p * width),
                TailMode::ExactIntegral => q.gamma.mass_between(T::zero(), rmin),
            };
            Ok(BoundResult::assemble(integral, tail, rmin, q.slack.confidence, q.gamma.non_decreasing))
        }
        GammaRepr::Tabulated { .. } => {
            let mut cuts: Vec<T> = q.gamma.knots().into_iter().filter(|&k| k > rmin && k < q.r_max).collect();
            cuts.insert(0, rmin);
            cuts.push(q.r_max);
            let mut integral = T::zero();
            for w in cuts.windows(2) {
                for seg in q.cdf.segments(w[0], w[1]) {
                    let piece: Piece<T> = seg.piece;
                    // γ is constant on (w[0], w[1]).
                    let mid = seg.a + (seg.b - seg.a) / T::lit(2.0);
                    let density = q.gamma.density(mid);
                    if density == T::zero() {
                        continue;
                    }
                    let f = |r: T| chernoff.factor(piece.eval(r)) * density;
                    integral = integral + adaptive_simpson(f, seg.a, seg.b, cfg)?.value;
                }
            }
            let tail = match q.tail_mode {
                TailMode::PaperLiteral => q.gamma.density(rmin) * rmin,
                TailMode::ExactIntegral => q.gamma.mass_between(T::zero(), rmin),
            };
            Ok(BoundResult::assemble(integral, tail, rmin, q.slack.confidence, q.gamma.non_decreasing))
        }
    }
}

/// Bound for the doubly empirical training c.d.f.; requires the `(β + μ)` slack.
pub fn bound_corollary1<T: Scalar>(q: &BoundQuery<T>) -> Result<BoundResult<T>> {
    if !matches!(q.slack.mode, SlackMode::CorollaryBetaMu { .. } | SlackMode::Manual { .. }) {
        return Err(Error::Domain(format!(
            "corollary bound needs (beta + mu) slack, got {:?}",
            q.slack.mode
        )));
    }
    bound_theorem1(q)
}

/// Closed-form bound for 0-1 classification with average training accuracy `p_tr_hat`.
pub fn bound_classification<T: Scalar>(
    p_tr_hat: T,
    k: usize,
    n_cal: usize,
    alpha: T,
    slack: &SlackSpec<T>,
) -> Result<BoundResult<T>> {
    if !(p_tr_hat >= T::zero() && p_tr_hat <= T::one()) {
        return Err(Error::Domain(format!("training accuracy must lie in [0, 1], got {p_tr_hat}")));
    }
    LabelSpace::<T>::discrete(k)?;
    let level = T::from_count(n_alpha(n_cal, alpha)?) / T::from_count(n_cal);
    let inv_k = T::one() / T::from_count(k);
    let corrected = p_tr_hat - slack.value;
    let integral = if corrected >= level {
        let kl = binary_kl(level, corrected.max(T::zero()))?;
        (T::one() - inv_k) * (-T::from_count(n_cal) * kl).exp()
    } else {
        T::one() - inv_k
    };
    let mut res = BoundResult::assemble(integral, inv_k, T::one(), slack.confidence, true);
    if corrected < level {
        // The vacuous branch is exactly 1.
        res.normalized_bound = T::one();
    }
    Ok(res)
}

/// Bound for the ℓp score on `[b_l, b_u]`.
#[allow(clippy::too_many_arguments)]
pub fn bound_regression<T: Scalar>(
    cdf: &CdfEstimate<T>,
    p: T,
    b_l: T,
    b_u: T,
    n_cal: usize,
    alpha: T,
    slack: &SlackSpec<T>,
    n_tr: usize,
    tail_mode: TailMode,
) -> Result<BoundResult<T>> {
    let gamma = gamma_closed_form(ScoreKind::LpPower { p }, LabelSpace::interval(b_l, b_u)?)?;
    let q = BoundQuery {
        n_tr,
        n_cal,
        alpha,
        cdf: cdf.clone(),
        r_max: gamma.r_max(),
        gamma,
        slack: *slack,
        tail_mode,
    };
    bound_theorem1(&q)
}

/// Pr[Bin(n, prob) ≤ k], summed in log space from the lower tail upward.
pub fn binomial_tail_exact<T: Scalar>(n: usize, prob: T, k: usize) -> Result<T> {
    if !(prob >= T::zero() && prob <= T::one()) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {prob}")));
    }
    if k > n {
        return Err(Error::Domain(format!("k = {k} exceeds n = {n}")));
    }
    if k == n || prob == T::zero() {
        return Ok(T::one());
    }
    if prob == T::one() {
        return Ok(T::zero());
    }
    let (lp, lq) = (prob.ln(), (-prob).ln_1p());
    let mut log_choose = T::zero();
    let mut total = T::zero();
    for j in 0..=k {
        if j > 0 {
            log_choose = log_choose + T::from_count(n - j + 1).ln() - T::from_count(j).ln();
        }
        total = total + (log_choose + T::from_count(j) * lp + T::from_count(n - j) * lq).exp();
    }
    Ok(total.min(T::one()))
}
