//! p-homogeneous coupling nonlinearity
//!
//! ```text
//! Q(u, v) = a u^p + sum_i b_i u^{alpha_i} v^{beta_i} + c v^p,   alpha_i + beta_i = p
//! ```
//!
//! truncated to zero off the open positive quadrant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedTerm {
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QSpec", into = "QSpec")]
pub struct HomogeneousQ {
    p: f64,
    a: f64,
    c: f64,
    mixed: Vec<MixedTerm>,
}

/// Config-file shape of the nonlinearity: `{p, a, c, mixed: [{b, alpha, beta}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QSpec {
    pub p: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub mixed: Vec<MixedTerm>,
}

impl TryFrom<QSpec> for HomogeneousQ {
    type Error = Error;

    fn try_from(spec: QSpec) -> Result<Self> {
        HomogeneousQ::new(spec.p, spec.a, spec.c, spec.mixed)
    }
}

impl From<HomogeneousQ> for QSpec {
    fn from(q: HomogeneousQ) -> Self {
        QSpec {
            p: q.p,
            a: q.a,
            c: q.c,
            mixed: q.mixed,
        }
    }
}

const EXPONENT_SLACK: f64 = 1e-12;

impl HomogeneousQ {
    pub fn new(p: f64, a: f64, c: f64, mixed: Vec<MixedTerm>) -> Result<Self> {
        if !(p.is_finite() && p > 2.0) {
            return Err(Error::invalid(format!("homogeneity degree p = {p} must exceed 2")));
        }
        if !a.is_finite() || !c.is_finite() {
            return Err(Error::invalid("pure-power coefficients must be finite"));
        }
        for term in &mixed {
            if !(term.b.is_finite() && term.alpha.is_finite() && term.beta.is_finite()) {
                return Err(Error::invalid("mixed term entries must be finite"));
            }
            if term.alpha < 1.0 || term.beta < 1.0 {
                return Err(Error::invalid(format!(
                    "mixed exponents must be >= 1, got ({}, {})",
                    term.alpha, term.beta
                )));
            }
            if (term.alpha + term.beta - p).abs() > EXPONENT_SLACK * p {
                return Err(Error::invalid(format!(
                    "mixed exponents ({}, {}) do not sum to p = {p}",
                    term.alpha, term.beta
                )));
            }
        }
        if a == 0.0 && c == 0.0 && mixed.iter().all(|t| t.b == 0.0) {
            return Err(Error::invalid("at least one coefficient must be nonzero"));
        }
        Ok(Self { p, a, c, mixed })
    }

    /// The shipped default `Q(u, v) = u^3 v^3`.
    pub fn cubic_product() -> Self {
        Self::new(
            6.0,
            0.0,
            0.0,
            vec![MixedTerm {
                b: 1.0,
                alpha: 3.0,
                beta: 3.0,
            }],
        )
        .expect("valid default nonlinearity")
    }

    /// Identically zero nonlinearity of nominal degree `p`.
    ///
    /// Bypasses the nonzero-coefficient invariant; only useful for probing the
    /// degenerate geometry where no negative-energy endpoint exists.
    pub fn zero(p: f64) -> Self {
        Self {
            p,
            a: 0.0,
            c: 0.0,
            mixed: Vec::new(),
        }
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: self.p,
            a: self.a * factor,
            c: self.c * factor,
            mixed: self
                .mixed
                .iter()
                .map(|t| MixedTerm { b: t.b * factor, ..*t })
                .collect(),
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn pure_u_coeff(&self) -> f64 {
        self.a
    }

    pub fn pure_v_coeff(&self) -> f64 {
        self.c
    }

    pub fn mixed_terms(&self) -> &[MixedTerm] {
        &self.mixed
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.c == 0.0 && self.mixed.iter().all(|t| t.b == 0.0)
    }

    /// Pure powers make the truncated `Q` jump across the quadrant axes.
    pub fn has_continuity_warning(&self) -> bool {
        self.a != 0.0 || self.c != 0.0
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        if !(u > 0.0 && v > 0.0) {
            return 0.0;
        }
        let (lu, lv) = (u.ln(), v.ln());
        let mut q = self.a * (self.p * lu).exp() + self.c * (self.p * lv).exp();
        for t in &self.mixed {
            q += t.b * (t.alpha * lu + t.beta * lv).exp();
        }
        q
    }

    /// `(Q_u, Q_v)` on the open quadrant, `(0, 0)` elsewhere.
    pub fn grad(&self, u: f64, v: f64) -> (f64, f64) {
        if !(u > 0.0 && v > 0.0) {
            return (0.0, 0.0);
        }
        let (lu, lv) = (u.ln(), v.ln());
        let pm1 = self.p - 1.0;
        let mut qu = self.a * self.p * (pm1 * lu).exp();
        let mut qv = self.c * self.p * (pm1 * lv).exp();
        for t in &self.mixed {
            qu += t.b * t.alpha * ((t.alpha - 1.0) * lu + t.beta * lv).exp();
            qv += t.b * t.beta * (t.alpha * lu + (t.beta - 1.0) * lv).exp();
        }
        (qu, qv)
    }

    /// Untruncated analytic value on the closed quadrant `u, v >= 0`.
    pub fn value_closed(&self, u: f64, v: f64) -> f64 {
        let mut q = self.a * pow0(u, self.p) + self.c * pow0(v, self.p);
        for t in &self.mixed {
            q += t.b * pow0(u, t.alpha) * pow0(v, t.beta);
        }
        q
    }

    /// Untruncated analytic gradient on the closed quadrant, with `0^0 = 1`.
    pub fn grad_closed(&self, u: f64, v: f64) -> (f64, f64) {
        let pm1 = self.p - 1.0;
        let mut qu = self.a * self.p * pow0(u, pm1);
        let mut qv = self.c * self.p * pow0(v, pm1);
        for t in &self.mixed {
            qu += t.b * t.alpha * pow0(u, t.alpha - 1.0) * pow0(v, t.beta);
            qv += t.b * t.beta * pow0(u, t.alpha) * pow0(v, t.beta - 1.0);
        }
        (qu, qv)
    }

    /// Maximum of `Q(cos phi, sin phi)` over the quarter circle, refined by
    /// golden-section search around the best sample of a uniform grid.
    pub fn angular_max(&self) -> f64 {
        let g = |phi: f64| self.value(phi.cos(), phi.sin());
        let samples = 4096;
        let step = std::f64::consts::FRAC_PI_2 / samples as f64;
        let mut best = (0.0_f64, f64::NEG_INFINITY);
        for i in 1..samples {
            let phi = i as f64 * step;
            let val = g(phi);
            if val > best.1 {
                best = (phi, val);
            }
        }
        let (mut lo, mut hi) = (best.0 - step, best.0 + step);
        let ratio = 0.5 * (5.0_f64.sqrt() - 1.0);
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (g(x1), g(x2));
        for _ in 0..80 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = g(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = g(x1);
            }
        }
        best.1.max(f1).max(f2)
    }
}

fn pow0(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if x == 0.0 {
        0.0
    } else {
        x.powf(e)
    }
}

/// Sobolev critical exponent `2N / (N - 2)`.
pub fn critical_exponent(dimension: usize) -> f64 {
    let n = dimension as f64;
    2.0 * n / (n - 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub passed: bool,
    pub detail: String,
}

impl HypothesisCheck {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Pass/fail record for each structural hypothesis on `Q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub q0_range: HypothesisCheck,
    pub q0_homogeneity: HypothesisCheck,
    pub q1_growth: HypothesisCheck,
    pub q2_axis_derivatives: HypothesisCheck,
    pub q3_axis_derivatives: HypothesisCheck,
    pub q4_positivity: HypothesisCheck,
    pub q5_monotonicity: HypothesisCheck,
    pub euler_identity: HypothesisCheck,
    pub gradient_homogeneity: HypothesisCheck,
    pub continuity_warning: bool,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, &HypothesisCheck); 9] {
        [
            ("Q0 range", &self.q0_range),
            ("Q0 homogeneity", &self.q0_homogeneity),
            ("Q1 growth", &self.q1_growth),
            ("Q2 axis derivatives", &self.q2_axis_derivatives),
            ("Q3 axis derivatives", &self.q3_axis_derivatives),
            ("Q4 positivity", &self.q4_positivity),
            ("Q5 monotonicity", &self.q5_monotonicity),
            ("Euler identity", &self.euler_identity),
            ("gradient homogeneity", &self.gradient_homogeneity),
        ]
    }
}

/// Samples the open positive quadrant and random scalings `t in (0, 1e3]` to
/// test each hypothesis. Violations are recorded in the report, never raised.
pub fn check_hypotheses(
    q: &HomogeneousQ,
    dimension: usize,
    sample_count: usize,
    seed: u64,
) -> Result<HypothesisReport> {
    if sample_count < 100 {
        return Err(Error::invalid("check_hypotheses needs at least 100 samples"));
    }
    if dimension < 3 {
        return Err(Error::invalid("dimension must be at least 3"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = q.p;
    let upper = 2.0 * critical_exponent(dimension);
    let q0_range = HypothesisCheck::new(
        p > 4.0 && p < upper,
        format!("p = {p}, admissible interval (4, {upper})"),
    );

    let mut homog_worst = 0.0_f64;
    let mut grad_homog_worst = 0.0_f64;
    let mut euler_worst = 0.0_f64;
    let mut growth_sup = 0.0_f64;
    let mut min_q = f64::INFINITY;
    let mut min_grad = f64::INFINITY;

    for _ in 0..sample_count {
        // log-uniform amplitudes spread over several decades
        let u = 10f64.powf(rng.gen_range(-3.0..2.0));
        let v = 10f64.powf(rng.gen_range(-3.0..2.0));
        let t: f64 = 1e3 * (1.0 - rng.gen::<f64>());

        let base = q.value(u, v);
        let scaled = q.value(t * u, t * v);
        let expected = t.powf(p) * base;
        homog_worst = homog_worst.max((scaled - expected).abs() / (expected.abs().max(f64::MIN_POSITIVE)));

        let (qu, qv) = q.grad(u, v);
        let (squ, sqv) = q.grad(t * u, t * v);
        let tp1 = t.powf(p - 1.0);
        let gscale = tp1 * (qu.abs() + qv.abs());
        if gscale > 0.0 {
            grad_homog_worst = grad_homog_worst
                .max(((squ - tp1 * qu).abs() + (sqv - tp1 * qv).abs()) / gscale);
        }

        let euler = (p * base - u * qu - v * qv).abs() / (1.0 + (p * base).abs());
        euler_worst = euler_worst.max(euler);

        let growth = (qu.abs() + qv.abs()) / (u.powf(p - 1.0) + v.powf(p - 1.0));
        growth_sup = growth_sup.max(growth);

        min_q = min_q.min(base);
        min_grad = min_grad.min(qu.min(qv));
    }

    // closed-quadrant growth on the unit quarter circle (homogeneity covers the rest)
    for i in 0..=256 {
        let phi = std::f64::consts::FRAC_PI_2 * i as f64 / 256.0;
        let (u, v) = (phi.cos().max(0.0), phi.sin().max(0.0));
        let (qu, qv) = q.grad_closed(u, v);
        growth_sup = growth_sup.max((qu.abs() + qv.abs()) / (u.powf(p - 1.0) + v.powf(p - 1.0)));
        if u > 0.0 && v > 0.0 {
            min_grad = min_grad.min(qu.min(qv));
        }
    }

    let (qu01, qv01) = q.grad_closed(0.0, 1.0);
    let (qu10, qv10) = q.grad_closed(1.0, 0.0);

    Ok(HypothesisReport {
        q0_range,
        q0_homogeneity: HypothesisCheck::new(
            homog_worst <= 1e-10,
            format!("max relative defect {homog_worst:.3e}"),
        ),
        q1_growth: HypothesisCheck::new(
            growth_sup.is_finite(),
            format!("sampled growth constant C = {growth_sup:.6e}"),
        ),
        q2_axis_derivatives: HypothesisCheck::new(
            qu01 == 0.0 && qv10 == 0.0,
            format!("Q_u(0,1) = {qu01}, Q_v(1,0) = {qv10}"),
        ),
        q3_axis_derivatives: HypothesisCheck::new(
            qu10 == 0.0 && qv01 == 0.0,
            format!("Q_u(1,0) = {qu10}, Q_v(0,1) = {qv01}"),
        ),
        q4_positivity: HypothesisCheck::new(min_q > 0.0, format!("min sampled Q = {min_q:.6e}")),
        q5_monotonicity: HypothesisCheck::new(
            min_grad >= 0.0,
            format!("min sampled partial derivative = {min_grad:.6e}"),
        ),
        euler_identity: HypothesisCheck::new(
            euler_worst <= 1e-10,
            format!("max normalized residual {euler_worst:.3e}"),
        ),
        gradient_homogeneity: HypothesisCheck::new(
            grad_homog_worst <= 1e-10,
            format!("max relative defect {grad_homog_worst:.3e}"),
        ),
        continuity_warning: q.has_continuity_warning(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn term(b: f64, alpha: f64, beta: f64) -> MixedTerm {
        MixedTerm { b, alpha, beta }
    }

    #[test]
    fn cubic_product_values() {
        let q = HomogeneousQ::cubic_product();
        assert_relative_eq!(q.value(1.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(q.value(2.0, 2.0), 64.0, epsilon = 1e-13);
        assert_eq!(q.value(-1.0, 1.0), 0.0);
        assert_eq!(q.value(1.0, 0.0), 0.0);
    }

    #[test]
    fn cubic_product_gradient() {
        let q = HomogeneousQ::cubic_product();
        // Q_u = 3 u^2 v^3, Q_v = 3 u^3 v^2
        let (qu, qv) = q.grad(1.0, 2.0);
        assert_relative_eq!(qu, 24.0, epsilon = 1e-13);
        assert_relative_eq!(qv, 12.0, epsilon = 1e-13);
        assert_relative_eq!(qu + 2.0 * qv, 6.0 * q.value(1.0, 2.0), epsilon = 1e-13);
        assert_eq!(q.grad(0.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let q = HomogeneousQ::new(5.5, 0.3, 0.7, vec![term(1.2, 2.5, 3.0), term(0.4, 1.0, 4.5)]).unwrap();
        for &(u, v) in &[(0.3, 1.7), (1.1, 0.2), (2.0, 2.5)] {
            let (qu, qv) = q.grad(u, v);
            let h = 1e-6;
            let fu = (q.value(u + h, v) - q.value(u - h, v)) / (2.0 * h);
            let fv = (q.value(u, v + h) - q.value(u, v - h)) / (2.0 * h);
            assert_relative_eq!(qu, fu, max_relative = 1e-6);
            assert_relative_eq!(qv, fv, max_relative = 1e-6);
        }
    }

    #[test]
    fn constructor_rejects_bad_terms() {
        assert!(HomogeneousQ::new(6.0, 0.0, 0.0, vec![term(1.0, 0.5, 5.5)]).is_err());
        assert!(HomogeneousQ::new(6.0, 0.0, 0.0, vec![term(1.0, 3.0, 2.0)]).is_err());
        assert!(HomogeneousQ::new(6.0, 0.0, 0.0, vec![]).is_err());
        assert!(HomogeneousQ::new(6.0, f64::NAN, 0.0, vec![]).is_err());
    }

    #[test]
    fn cubic_product_passes_all_hypotheses() {
        let report = check_hypotheses(&HomogeneousQ::cubic_product(), 3, 500, 1).unwrap();
        assert!(report.all_pass(), "{report:#?}");
        assert!(!report.continuity_warning);
    }

    #[test]
    fn negative_coefficient_flags_sign_conditions() {
        let q = HomogeneousQ::new(6.0, 0.0, 0.0, vec![term(-1.0, 3.0, 3.0)]).unwrap();
        let report = check_hypotheses(&q, 3, 200, 1).unwrap();
        assert!(!report.q4_positivity.passed);
        assert!(!report.q5_monotonicity.passed);
        assert!(report.euler_identity.passed);
    }

    #[test]
    fn range_and_axis_conditions() {
        let low = HomogeneousQ::new(3.0, 0.0, 0.0, vec![term(1.0, 1.5, 1.5)]).unwrap();
        assert!(!check_hypotheses(&low, 3, 100, 0).unwrap().q0_range.passed);
        // p = 12 is the endpoint 2 * 2^* for N = 3
        let high = HomogeneousQ::new(12.0, 0.0, 0.0, vec![term(1.0, 6.0, 6.0)]).unwrap();
        assert!(!check_hypotheses(&high, 3, 100, 0).unwrap().q0_range.passed);

        // a linear factor in u makes Q_u(0, 1) nonzero
        let lin = HomogeneousQ::new(6.0, 0.0, 0.0, vec![term(1.0, 1.0, 5.0)]).unwrap();
        let r = check_hypotheses(&lin, 3, 100, 0).unwrap();
        assert!(!r.q2_axis_derivatives.passed);
        assert!(r.q3_axis_derivatives.passed);

        let pure = HomogeneousQ::new(6.0, 1.0, 1.0, vec![term(1.0, 3.0, 3.0)]).unwrap();
        let r = check_hypotheses(&pure, 3, 100, 0).unwrap();
        assert!(!r.q3_axis_derivatives.passed);
        assert!(r.continuity_warning);
    }

    #[test]
    fn angular_max_of_cubic_product() {
        // cos^3 sin^3 peaks at pi/4 with value 1/8
        assert_relative_eq!(HomogeneousQ::cubic_product().angular_max(), 0.125, max_relative = 1e-12);
    }
}
