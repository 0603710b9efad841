//! Penalized nonlinearity `H(x, s, t)`.
//!
//! Inside the region `Omega` the coupling is the original `Q`. Outside it the
//! coupling is blended, through a cutoff `eta(|(s, t)|)`, into the quadratic
//! surrogate `A (s^2 + t^2)`, where `A` is the largest ratio `Q / (s^2 + t^2)`
//! on the annulus `a <= |(s, t)| <= 5a`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::HomogeneousQ;

/// C^1 cutoff equal to one up to `a` and zero from `5a`, with a cubic
/// smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffEta {
    a: f64,
}

impl CutoffEta {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("cutoff radius a = {a} must be positive")));
        }
        Ok(Self { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn eta(&self, s: f64) -> f64 {
        if s <= self.a {
            1.0
        } else if s >= 5.0 * self.a {
            0.0
        } else {
            let tau = (s - self.a) / (4.0 * self.a);
            1.0 - 3.0 * tau * tau + 2.0 * tau * tau * tau
        }
    }

    pub fn eta_prime(&self, s: f64) -> f64 {
        if s <= self.a || s >= 5.0 * self.a {
            0.0
        } else {
            let tau = (s - self.a) / (4.0 * self.a);
            6.0 * tau * (tau - 1.0) / (4.0 * self.a)
        }
    }

    /// Sup of `|eta'|`, attained at the midpoint `s = 3a`.
    pub fn slope_bound(&self) -> f64 {
        3.0 / (8.0 * self.a)
    }
}

/// Region `Omega` in the slow variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball { radius: f64 },
    /// Axis-aligned cube `[-h, h]^N`.
    Box { half_width: f64 },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            Region::Ball { radius } => x.iter().map(|c| c * c).sum::<f64>() < radius * radius,
            Region::Box { half_width } => x.iter().all(|c| c.abs() < half_width),
        }
    }

    /// Radius of the largest origin-centred ball inside the region.
    pub fn inner_radius(&self) -> f64 {
        match *self {
            Region::Ball { radius } => radius,
            Region::Box { half_width } => half_width,
        }
    }

    /// Radius of the smallest origin-centred ball containing the region.
    pub fn outer_radius(&self, dimension: usize) -> f64 {
        match *self {
            Region::Ball { radius } => radius,
            Region::Box { half_width } => half_width * (dimension as f64).sqrt(),
        }
    }
}

/// `A = max { Q(s, t) / (s^2 + t^2) : a <= |(s, t)| <= 5a }`.
///
/// The truncated `Q` vanishes off the positive quadrant, so the maximum over
/// the full annulus is never negative. Homogeneity reduces the search to the
/// angle: the radial factor `r^{p-2}` peaks at `r = 5a`.
pub fn compute_a_constant(q: &HomogeneousQ, a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("cutoff radius a = {a} must be positive")));
    }
    if q.is_zero() {
        return Ok(0.0);
    }
    let peak = q.angular_max();
    if peak <= 0.0 {
        return Ok(0.0);
    }
    Ok((5.0 * a).powf(q.p() - 2.0) * peak)
}

/// Penalization ratio `k = 4p / (p - 2)`.
pub fn penalization_ratio(p: f64) -> f64 {
    4.0 * p / (p - 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedH {
    q: HomogeneousQ,
    eta: CutoffEta,
    big_a: f64,
    omega: Region,
    k: f64,
    w0: f64,
    v0: f64,
}

impl PenalizedH {
    /// Builds `H` and enforces `A < min(W0, V0) / 4`.
    pub fn new(q: HomogeneousQ, a: f64, omega: Region, w0: f64, v0: f64) -> Result<Self> {
        let h = Self::new_unchecked(q, a, omega, w0, v0)?;
        if !h.smallness_holds() {
            return Err(Error::invalid(format!(
                "A = {:.6e} violates A < min(W0, V0)/4 = {:.6e}; reduce a",
                h.big_a,
                0.25 * w0.min(v0)
            )));
        }
        Ok(h)
    }

    /// Builds `H` without the smallness condition, for diagnostics.
    pub fn new_unchecked(q: HomogeneousQ, a: f64, omega: Region, w0: f64, v0: f64) -> Result<Self> {
        if !(w0 > 0.0 && v0 > 0.0) {
            return Err(Error::invalid("potential floors W0, V0 must be positive"));
        }
        let eta = CutoffEta::new(a)?;
        let big_a = compute_a_constant(&q, a)?;
        let k = penalization_ratio(q.p());
        Ok(Self {
            q,
            eta,
            big_a,
            omega,
            k,
            w0,
            v0,
        })
    }

    pub fn q(&self) -> &HomogeneousQ {
        &self.q
    }

    pub fn eta(&self) -> &CutoffEta {
        &self.eta
    }

    pub fn a(&self) -> f64 {
        self.eta.a()
    }

    /// The penalization coefficient `A`.
    pub fn big_a(&self) -> f64 {
        self.big_a
    }

    pub fn omega(&self) -> &Region {
        &self.omega
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn floors(&self) -> (f64, f64) {
        (self.w0, self.v0)
    }

    pub fn smallness_holds(&self) -> bool {
        self.big_a < 0.25 * self.w0.min(self.v0)
    }

    /// Exterior coupling `eta Q + (1 - eta) A (s^2 + t^2)`.
    pub fn q_hat(&self, s: f64, t: f64) -> f64 {
        let r = s.hypot(t);
        let e = self.eta.eta(r);
        let mut val = self.big_a * (s * s + t * t) * (1.0 - e);
        if e > 0.0 {
            val += e * self.q.value(s, t);
        }
        val
    }

    pub fn q_hat_grad(&self, s: f64, t: f64) -> (f64, f64) {
        let r = s.hypot(t);
        let e = self.eta.eta(r);
        let de = self.eta.eta_prime(r);
        let mut gs = 2.0 * self.big_a * s * (1.0 - e);
        let mut gt = 2.0 * self.big_a * t * (1.0 - e);
        if e > 0.0 {
            let (qs, qt) = self.q.grad(s, t);
            gs += e * qs;
            gt += e * qt;
        }
        if de != 0.0 {
            let gap = self.q.value(s, t) - self.big_a * r * r;
            gs += de * (s / r) * gap;
            gt += de * (t / r) * gap;
        }
        (gs, gt)
    }

    pub fn value_at(&self, inside: bool, s: f64, t: f64) -> f64 {
        if inside {
            self.q.value(s, t)
        } else {
            self.q_hat(s, t)
        }
    }

    pub fn grad_at(&self, inside: bool, s: f64, t: f64) -> (f64, f64) {
        if inside {
            self.q.grad(s, t)
        } else {
            self.q_hat_grad(s, t)
        }
    }

    pub fn h_value(&self, x: &[f64], s: f64, t: f64) -> f64 {
        self.value_at(self.omega.contains(x), s, t)
    }

    pub fn h_grad(&self, x: &[f64], s: f64, t: f64) -> (f64, f64) {
        self.grad_at(self.omega.contains(x), s, t)
    }

    /// Slacks of the exterior bounds at `(s, t)`, floors standing in for `W, V`.
    fn exterior_slacks(&self, s: f64, t: f64) -> ExteriorSlack {
        let h = self.q_hat(s, t);
        let (hs, ht) = self.q_hat_grad(s, t);
        let radial = s * hs + t * ht;
        let scale = 1.0 + (2.0 * h).abs() + radial.abs();
        let bound = self.w0.min(self.v0) / 4.0;
        let derivative = if s.hypot(t) <= 5.0 * self.a() {
            Some(hs.abs().max(ht.abs()) / self.a())
        } else {
            None
        };
        ExteriorSlack {
            monotone: radial - 2.0 * h + 1e-12 * scale,
            growth: (self.w0 * s * s + self.v0 * t * t) / self.k - radial,
            derivative_ratio: derivative,
            derivative_bound: bound,
        }
    }
}

struct ExteriorSlack {
    monotone: f64,
    growth: f64,
    derivative_ratio: Option<f64>,
    derivative_bound: f64,
}

impl ExteriorSlack {
    fn ok(&self) -> bool {
        self.monotone >= 0.0
            && self.growth >= 0.0
            && self.derivative_ratio.map_or(true, |d| d <= self.derivative_bound)
    }
}

// Deterministic polar sweep of |(s, t)| in (0, 10a] used while choosing a.
fn exterior_bounds_hold(h: &PenalizedH) -> bool {
    let a = h.a();
    let radial = 400;
    let angular = 256;
    for i in 1..=radial {
        let r = 10.0 * a * i as f64 / radial as f64;
        for j in 0..angular {
            let phi = std::f64::consts::TAU * j as f64 / angular as f64;
            if !h.exterior_slacks(r * phi.cos(), r * phi.sin()).ok() {
                return false;
            }
        }
    }
    true
}

/// Largest `a = 2^{-j}` meeting `A < min(W0, V0)/4` and the sampled exterior
/// bounds, halved once more for margin.
pub fn choose_a(q: &HomogeneousQ, w0: f64, v0: f64) -> Result<f64> {
    if !(w0 > 0.0 && v0 > 0.0) {
        return Err(Error::invalid("potential floors W0, V0 must be positive"));
    }
    let omega = Region::Ball { radius: 1.0 };
    for j in 0..=60 {
        let a = 0.5_f64.powi(j);
        let h = PenalizedH::new_unchecked(q.clone(), a, omega, w0, v0)?;
        if h.smallness_holds() && exterior_bounds_hold(&h) {
            return Ok(0.5 * a);
        }
    }
    Err(Error::invalid("no admissible cutoff radius on the grid 2^-j, j <= 60"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub bound: &'static str,
    pub x_norm: f64,
    pub s: f64,
    pub t: f64,
    pub slack: f64,
}

/// Outcome of the sampled checks of the three structural bounds on `H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub a: f64,
    pub big_a: f64,
    pub k: f64,
    pub smallness_ok: bool,
    pub samples_inside: usize,
    pub samples_outside: usize,
    /// Max of `|pH - s H_s - t H_t|` relative to the size of its terms, inside `Omega`.
    pub h1_max_relative_defect: f64,
    pub h1_ok: bool,
    pub h2_min_slack: f64,
    pub h2_violations: usize,
    pub h3_growth_min_slack: f64,
    pub h3_growth_violations: usize,
    /// Max of `|H_s|/a, |H_t|/a` over exterior samples with `|(s, t)| <= 5a`.
    pub h3_derivative_max: f64,
    pub h3_derivative_bound: f64,
    pub h3_derivative_violations: usize,
    pub violating_samples: Vec<BoundViolation>,
    pub pass: bool,
}

const MAX_LISTED_VIOLATIONS: usize = 32;

/// Random samples of `x` in the ball of twice the outer radius of `Omega`
/// (dimension `dimension`) and of `(s, t)` on the whole plane, concentrated
/// around the seam annulus.
pub fn verify_h_bounds(
    h: &PenalizedH,
    dimension: usize,
    sample_count: usize,
    seed: u64,
) -> Result<BoundReport> {
    if sample_count < 1000 {
        return Err(Error::invalid("verify_h_bounds needs at least 1000 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = h.a();
    let p = h.q.p();
    let reach = 2.0 * h.omega.outer_radius(dimension);
    let mut x = vec![0.0; dimension];

    let mut report = BoundReport {
        a,
        big_a: h.big_a,
        k: h.k,
        smallness_ok: h.smallness_holds(),
        samples_inside: 0,
        samples_outside: 0,
        h1_max_relative_defect: 0.0,
        h1_ok: true,
        h2_min_slack: f64::INFINITY,
        h2_violations: 0,
        h3_growth_min_slack: f64::INFINITY,
        h3_growth_violations: 0,
        h3_derivative_max: 0.0,
        h3_derivative_bound: 0.25 * h.w0.min(h.v0),
        h3_derivative_violations: 0,
        violating_samples: Vec::new(),
        pass: false,
    };

    let record = |report: &mut BoundReport, v: BoundViolation| {
        if report.violating_samples.len() < MAX_LISTED_VIOLATIONS {
            report.violating_samples.push(v);
        }
    };

    for i in 0..sample_count {
        for c in x.iter_mut() {
            *c = rng.gen_range(-reach..reach);
        }
        let x_norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let r = match i % 4 {
            0 => rng.gen_range(0.0..a),
            1 | 2 => rng.gen_range(0.5 * a..6.0 * a),
            _ => a * 10f64.powf(rng.gen_range(-2.0..2.0)),
        };
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, t) = if i == 0 { (0.0, 0.0) } else { (r * phi.cos(), r * phi.sin()) };

        if h.omega.contains(&x) {
            report.samples_inside += 1;
            let val = h.q.value(s, t);
            let (qs, qt) = h.q.grad(s, t);
            let scale = (p * val).abs() + (s * qs).abs() + (t * qt).abs();
            let defect = if scale > 0.0 {
                (p * val - s * qs - t * qt).abs() / scale
            } else {
                0.0
            };
            report.h1_max_relative_defect = report.h1_max_relative_defect.max(defect);
            if defect > 1e-9 {
                report.h1_ok = false;
                record(&mut report, BoundViolation { bound: "H1", x_norm, s, t, slack: -defect });
            }
        } else {
            report.samples_outside += 1;
            let slack = h.exterior_slacks(s, t);
            report.h2_min_slack = report.h2_min_slack.min(slack.monotone);
            report.h3_growth_min_slack = report.h3_growth_min_slack.min(slack.growth);
            if slack.monotone < 0.0 {
                report.h2_violations += 1;
                record(&mut report, BoundViolation { bound: "H2", x_norm, s, t, slack: slack.monotone });
            }
            if slack.growth < 0.0 {
                report.h3_growth_violations += 1;
                record(&mut report, BoundViolation { bound: "H3 growth", x_norm, s, t, slack: slack.growth });
            }
            if let Some(d) = slack.derivative_ratio {
                report.h3_derivative_max = report.h3_derivative_max.max(d);
                if d > slack.derivative_bound {
                    report.h3_derivative_violations += 1;
                    record(&mut report, BoundViolation {
                        bound: "H3 derivative",
                        x_norm,
                        s,
                        t,
                        slack: slack.derivative_bound - d,
                    });
                }
            }
        }
    }

    report.pass = report.smallness_ok
        && report.h1_ok
        && report.h2_violations == 0
        && report.h3_growth_violations == 0
        && report.h3_derivative_violations == 0;
    Ok(report)
}
