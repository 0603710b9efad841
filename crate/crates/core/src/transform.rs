//! The dual change of variable `u = f(w)`.
//!
//! `f` is the odd solution of `f'(t) = (1 + 2 f(t)^2)^{-1/2}`, `f(0) = 0`.
//! Its inverse has the closed form
//!
//! ```text
//! f^{-1}(y) = y * sqrt(1 + 2y^2) / 2 + asinh(sqrt(2) y) / (2 sqrt(2))
//! ```
//!
//! so `f` itself is evaluated by a safeguarded Newton iteration on that
//! antiderivative instead of integrating the ODE.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fourth root of two, the limit of `f(t) / sqrt(t)` as `t -> inf`.
pub const FOURTH_ROOT_TWO: f64 = 1.189_207_115_002_721;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualTransform {
    /// Newton stops once `|f^{-1}(y) - t| <= newton_tolerance * max(1, |t|)`.
    pub newton_tolerance: f64,
    pub max_newton_iterations: usize,
    /// Above this `|t|` the Newton start comes from the large-argument expansion.
    pub large_argument_threshold: f64,
}

impl Default for DualTransform {
    fn default() -> Self {
        Self {
            newton_tolerance: 1e-12,
            max_newton_iterations: 64,
            large_argument_threshold: 1e8,
        }
    }
}

impl DualTransform {
    pub fn new(
        newton_tolerance: f64,
        max_newton_iterations: usize,
        large_argument_threshold: f64,
    ) -> Result<Self> {
        if !(newton_tolerance > 0.0 && newton_tolerance.is_finite()) {
            return Err(Error::invalid("newton_tolerance must be positive"));
        }
        if max_newton_iterations < 8 {
            return Err(Error::invalid("max_newton_iterations must be at least 8"));
        }
        if !(large_argument_threshold > 0.0) {
            return Err(Error::invalid("large_argument_threshold must be positive"));
        }
        Ok(Self {
            newton_tolerance,
            max_newton_iterations,
            large_argument_threshold,
        })
    }

    /// Inverse transform `f^{-1}(y)`, exact up to rounding.
    pub fn t_of_f(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::Domain(y));
        }
        Ok(inverse_closed_form(y))
    }

    pub fn f(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::Domain(t));
        }
        let target = t.abs();
        if target == 0.0 {
            return Ok(0.0);
        }
        let y = self.solve_positive(target)?;
        Ok(y.copysign(t))
    }

    pub fn f_prime(&self, t: f64) -> Result<f64> {
        let y = self.f(t)?;
        Ok(derivative_from_value(y))
    }

    /// `f''(t) = -2 f(t) f'(t)^4`.
    pub fn f_second(&self, t: f64) -> Result<f64> {
        let y = self.f(t)?;
        let d = derivative_from_value(y);
        Ok(-2.0 * y * d.powi(4))
    }

    /// `(f, f', f'')` from a single inversion.
    pub fn eval(&self, t: f64) -> Result<Evaluated> {
        let value = self.f(t)?;
        let prime = derivative_from_value(value);
        Ok(Evaluated {
            value,
            prime,
            second: -2.0 * value * prime.powi(4),
        })
    }

    // Newton on the convex increasing map y -> f^{-1}(y) - target, y >= 0.
    fn solve_positive(&self, target: f64) -> Result<f64> {
        let tol = self.newton_tolerance * target.max(1.0);
        // Both |t| and 2^{1/4} sqrt|t| bound f from above.
        let upper = target.min(FOURTH_ROOT_TWO * target.sqrt());
        let mut y = if target > self.large_argument_threshold {
            asymptotic_seed(target).min(upper)
        } else {
            upper
        };
        let mut lo = 0.0_f64;
        let mut hi = upper;

        for _ in 0..self.max_newton_iterations {
            let residual = inverse_closed_form(y) - target;
            if residual.abs() <= tol {
                return Ok(y);
            }
            if residual > 0.0 {
                hi = hi.min(y);
            } else {
                lo = lo.max(y);
            }
            let mut next = y - residual / (1.0 + 2.0 * y * y).sqrt();
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == y {
                return Ok(y);
            }
            y = next;
        }

        // Bisection fallback on the maintained bracket.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let residual = inverse_closed_form(mid) - target;
            if residual.abs() <= tol || mid == lo || mid == hi {
                return Ok(mid);
            }
            if residual > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Err(Error::NoConvergence {
            what: "dual transform inversion",
            iterations: self.max_newton_iterations + 200,
        })
    }
}

/// Value of `f` together with its first two derivatives at the same point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluated {
    pub value: f64,
    pub prime: f64,
    pub second: f64,
}

fn inverse_closed_form(y: f64) -> f64 {
    let a = y.abs();
    let t = 0.5 * a * (1.0 + 2.0 * a * a).sqrt() + (SQRT_2 * a).asinh() / (2.0 * SQRT_2);
    t.copysign(y)
}

fn derivative_from_value(y: f64) -> f64 {
    1.0 / (1.0 + 2.0 * y * y).sqrt()
}

// Leading terms of f^{-1}(y) for large y:
//   y^2 / sqrt(2) + 1 / (4 sqrt(2)) + ln(2 sqrt(2) y) / (2 sqrt(2)).
fn asymptotic_seed(target: f64) -> f64 {
    let y0 = FOURTH_ROOT_TWO * target.sqrt();
    let correction = 0.25 / SQRT_2 + (2.0 * SQRT_2 * y0).ln() / (2.0 * SQRT_2);
    let inner = SQRT_2 * (target - correction);
    if inner > 0.0 {
        inner.sqrt()
    } else {
        y0
    }
}
