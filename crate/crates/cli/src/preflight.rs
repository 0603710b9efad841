//! Hypothesis and bound checks run before any solve.

use anyhow::Result;
use quasisol_core::functional::geometry_exponent;
use quasisol_core::nonlinearity::{check_hypotheses, HypothesisReport};
use quasisol_core::penalization::{choose_a, verify_h_bounds, BoundReport};
use quasisol_core::PenalizedH;
use serde::Serialize;

use crate::config::{CutoffChoice, RunConfig};

const HYPOTHESIS_SAMPLES: usize = 2000;
const BOUND_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct PreflightReport {
    pub a: f64,
    pub a_source: &'static str,
    pub hypotheses: HypothesisReport,
    pub bounds: BoundReport,
    pub geometry_exponent: f64,
    pub geometry_exponent_ok: bool,
    /// Failures that block a solve: the exponent range and `A < min(W0, V0)/4`.
    pub hard_failures: Vec<String>,
    pub soft_failures: Vec<String>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

impl PreflightReport {
    pub fn blocks_solve(&self) -> bool {
        !self.hard_failures.is_empty()
    }

    /// Penalized coupling for the checked `a`.
    pub fn coupling(&self, config: &RunConfig) -> Result<PenalizedH> {
        let (w0, v0) = config.floors();
        Ok(PenalizedH::new(
            config.nonlinearity.clone(),
            self.a,
            config.penalization.region(),
            w0,
            v0,
        )?)
    }
}

pub fn preflight(config: &RunConfig) -> Result<PreflightReport> {
    let q = &config.nonlinearity;
    let (w0, v0) = config.floors();
    let (a, a_source) = match config.penalization.a {
        CutoffChoice::Fixed(a) => (a, "config"),
        CutoffChoice::Keyword(_) => (choose_a(q, w0, v0)?, "auto"),
    };
    let hypotheses = check_hypotheses(q, config.dimension, HYPOTHESIS_SAMPLES, config.seed)?;
    let h = PenalizedH::new_unchecked(q.clone(), a, config.penalization.region(), w0, v0)?;
    let bounds = verify_h_bounds(&h, config.dimension, BOUND_SAMPLES, config.seed)?;
    let exponent = geometry_exponent(config.dimension, q.p());

    let mut hard = Vec::new();
    let mut soft = Vec::new();
    let mut warnings = Vec::new();
    if !hypotheses.q0_range.passed {
        hard.push(format!("Q0 range: {}", hypotheses.q0_range.detail));
    }
    if !bounds.smallness_ok {
        hard.push(format!(
            "smallness A < min(W0, V0)/4 fails: A = {:.6e}, min/4 = {:.6e} (a = {a})",
            bounds.big_a,
            0.25 * w0.min(v0)
        ));
    }
    for (name, check) in hypotheses.checks().into_iter().skip(1) {
        if !check.passed {
            soft.push(format!("{name}: {}", check.detail));
        }
    }
    if !bounds.pass {
        soft.push(format!(
            "H bounds: {} H2, {} H3 growth, {} H3 derivative violations",
            bounds.h2_violations, bounds.h3_growth_violations, bounds.h3_derivative_violations
        ));
    }
    let exponent_ok = exponent > 2.0;
    if !exponent_ok {
        soft.push(format!("geometry exponent {exponent} <= 2"));
    }
    if hypotheses.continuity_warning {
        warnings.push("a mixed exponent is below 2; Q is only continuous on the axes".to_string());
    }
    if config.is_extrapolation() {
        warnings.push("extrapolation: dimension 2 lies outside the N >= 3 theory".to_string());
    }
    let pass = hard.is_empty() && soft.is_empty();
    Ok(PreflightReport {
        a,
        a_source,
        hypotheses,
        bounds,
        geometry_exponent: exponent,
        geometry_exponent_ok: exponent_ok,
        hard_failures: hard,
        soft_failures: soft,
        warnings,
        pass,
    })
}
