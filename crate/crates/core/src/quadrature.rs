//! Adaptive Simpson quadrature with an explicit refinement cap.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpsonConfig {
    /// Absolute tolerance on the whole interval.
    pub tolerance: f64,
    /// Levels of unconditional bisection before error control starts, so
    /// narrow features are not missed by the first five samples.
    pub min_depth: u32,
    pub max_depth: u32,
}

impl Default for SimpsonConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            min_depth: 2,
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error_estimate: T,
    pub evaluations: usize,
}

struct Simpson<'a, T, F> {
    f: &'a F,
    cfg: SimpsonConfig,
    evaluations: usize,
    error: T,
}

impl<T: Scalar, F: Fn(T) -> T> Simpson<'_, T, F> {
    fn eval(&mut self, x: T) -> T {
        self.evaluations += 1;
        (self.f)(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(&mut self, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> Result<T> {
        let two = T::lit(2.0);
        let m = (a + b) / two;
        let lm = (a + m) / two;
        let rm = (m + b) / two;
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        let h = (b - a) / T::lit(12.0);
        let left = h * (fa + T::lit(4.0) * flm + fm);
        let right = h * (fm + T::lit(4.0) * frm + fb);
        let delta = left + right - whole;
        // Below this the difference is rounding noise, not truncation error.
        let floor = T::epsilon() * T::lit(64.0) * (left.abs() + right.abs());
        if depth >= self.cfg.min_depth && delta.abs() <= T::lit(15.0) * tol.max(floor) {
            self.error = self.error + delta.abs() / T::lit(15.0);
            return Ok(left + right + delta / T::lit(15.0));
        }
        if depth >= self.cfg.max_depth {
            return Err(Error::QuadratureNotConverged {
                a: a.as_f64(),
                b: b.as_f64(),
                error: (delta.abs() / T::lit(15.0)).as_f64(),
            });
        }
        let half = tol / two;
        let l = self.recurse(a, m, fa, flm, fm, left, half, depth + 1)?;
        let r = self.recurse(m, b, fm, frm, fb, right, half, depth + 1)?;
        Ok(l + r)
    }
}

/// ∫_a^b f with local error control; fails rather than truncating when the
/// depth cap is hit before the tolerance is met.
pub fn adaptive_simpson<T, F>(f: F, a: T, b: T, cfg: SimpsonConfig) -> Result<Integral<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    if a == b {
        return Ok(Integral {
            value: T::zero(),
            error_estimate: T::zero(),
            evaluations: 0,
        });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    let mut s = Simpson {
        f: &f,
        cfg,
        evaluations: 0,
        error: T::zero(),
    };
    let fa = s.eval(a);
    let fb = s.eval(b);
    let m = (a + b) / T::lit(2.0);
    let fm = s.eval(m);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    let value = s.recurse(a, b, fa, fm, fb, whole, T::lit(cfg.tolerance), 0)?;
    if !value.is_finite() {
        return Err(Error::Domain(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(Integral {
        value,
        error_estimate: s.error,
        evaluations: s.evaluations,
    })
}
