//! Solve and sweep orchestration plus artifact emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use quasisol_core::mountain_pass::{solve, Stage};
use quasisol_core::verify::{self, map_back, SweepTrend};
use quasisol_core::{
    Coupling, FunctionalContext, Grid, MPResult, PenalizedH, StatePair, VerificationReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, RunConfig};
use crate::preflight::{preflight, PreflightReport};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub epsilon: Option<f64>,
    pub output_dir: Option<PathBuf>,
    /// Solve the epsilon values concurrently.
    pub parallel: bool,
}

#[derive(Debug, Clone)]
pub struct EpsOutcome {
    pub epsilon: f64,
    pub grid: Grid,
    pub state: StatePair,
    pub result: MPResult,
    pub report: VerificationReport,
}

impl EpsOutcome {
    pub fn ok(&self) -> bool {
        self.result.converged() && self.report.all_ok()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub trend: SweepTrend,
    pub norm_ratios: Vec<f64>,
    pub norm_ratio_bounded: Option<bool>,
    pub ok: bool,
}

#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub preflight: PreflightReport,
    pub outcomes: Vec<EpsOutcome>,
    /// `(epsilon, message)` for solves that raised an error.
    pub failures: Vec<(f64, String)>,
    pub sweep: Option<SweepSummary>,
}

impl RunSummary {
    /// Every epsilon converged, every verification flag is ok and, for
    /// sweeps, both trends hold.
    pub fn success(&self) -> bool {
        self.failures.is_empty()
            && self.outcomes.iter().all(EpsOutcome::ok)
            && self.sweep.as_ref().map_or(true, |s| s.ok)
    }
}

pub fn epsilon_dir(root: &Path, epsilon: f64) -> PathBuf {
    root.join(format!("eps_{epsilon}"))
}

/// Functional for one epsilon of a run.
pub fn context(config: &RunConfig, h: &PenalizedH, epsilon: f64) -> Result<FunctionalContext> {
    Ok(FunctionalContext::new(
        config.build_grid()?,
        &config.potentials.w,
        &config.potentials.v,
        Coupling::Penalized(h.clone()),
        epsilon,
        Default::default(),
    )?)
}

/// Solves and verifies a single epsilon.
pub fn solve_epsilon(config: &RunConfig, h: &PenalizedH, epsilon: f64) -> Result<EpsOutcome> {
    let ctx = context(config, h, epsilon)?;
    let result = solve(&ctx, &config.solver)?;
    let report = verify::verify_solution(&ctx, &result.state, &config.verify)?;
    Ok(EpsOutcome {
        epsilon,
        grid: ctx.grid().clone(),
        state: result.state.clone(),
        result,
        report,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn fields_csv(outcome: &EpsOutcome) -> Result<String> {
    let grid = &outcome.grid;
    let (u, v) = map_back(&Default::default(), &outcome.state)?;
    let mut out = String::new();
    let d = grid.dimension();
    match grid {
        Grid::Radial(_) => out.push_str("r,w,z,u,v\n"),
        Grid::Box(_) => {
            for k in 0..d {
                let _ = write!(out, "x{k},");
            }
            out.push_str("w,z,u,v\n");
        }
    }
    let mut x = vec![0.0; d];
    for i in 0..grid.len() {
        match grid {
            Grid::Radial(_) => {
                let _ = write!(out, "{},", grid.node_radius(i));
            }
            Grid::Box(_) => {
                grid.node_position(i, &mut x);
                for c in &x {
                    let _ = write!(out, "{c},");
                }
            }
        }
        let _ = writeln!(out, "{},{},{},{}", outcome.state.w[i], outcome.state.z[i], u[i], v[i]);
    }
    Ok(out)
}

fn trace_csv(result: &MPResult) -> String {
    let mut out = String::from("iteration,stage,max_energy,grad_norm\n");
    for t in &result.trace {
        let stage = match t.stage {
            Stage::Path => "path",
            Stage::Polish => "polish",
        };
        let _ = writeln!(out, "{},{},{},{}", t.iteration, stage, t.max_energy, t.grad_norm);
    }
    out
}

#[derive(Serialize)]
struct ResultFile<'a> {
    epsilon: f64,
    converged: bool,
    #[serde(flatten)]
    result: &'a MPResult,
}

fn write_outcome(root: &Path, outcome: &EpsOutcome) -> Result<()> {
    let dir = epsilon_dir(root, outcome.epsilon);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let result = ResultFile {
        epsilon: outcome.epsilon,
        converged: outcome.result.converged(),
        result: &outcome.result,
    };
    write(&dir.join("result.json"), &serde_json::to_string_pretty(&result)?)?;
    write(&dir.join("report.json"), &serde_json::to_string_pretty(&outcome.report)?)?;
    write(&dir.join("fields.csv"), &fields_csv(outcome)?)?;
    write(&dir.join("trace.csv"), &trace_csv(&outcome.result))?;
    Ok(())
}

fn manifest(loaded: &LoadedConfig, pre: &PreflightReport, epsilons: &[f64]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "quasisol {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "config_path: {}", loaded.path.display());
    let _ = writeln!(out, "seed: {}", loaded.config.seed);
    let _ = writeln!(out, "a: {} ({})", pre.a, pre.a_source);
    let eps: Vec<String> = epsilons.iter().map(|e| e.to_string()).collect();
    let _ = writeln!(out, "epsilon: {}", eps.join(", "));
    out.push_str("--- config ---\n");
    out.push_str(&loaded.source);
    if !loaded.source.ends_with('\n') {
        out.push('\n');
    }
    out
}

fn sweep_summary(config: &RunConfig, outcomes: &[EpsOutcome]) -> SweepSummary {
    let entries: Vec<(f64, &Grid, &StatePair)> =
        outcomes.iter().map(|o| (o.epsilon, &o.grid, &o.state)).collect();
    let trend = verify::boundary_max_sweep(&entries, &config.penalization.region());
    let norm_ratios: Vec<f64> = outcomes
        .iter()
        .map(|o| verify::norm_ratio(o.report.norm_sq, o.result.energy, config.dimension))
        .collect();
    let norm_ratio_bounded = verify::ratio_bounded(&norm_ratios);
    let ok = trend.non_increasing == Some(true) && norm_ratio_bounded == Some(true);
    SweepSummary {
        trend,
        norm_ratios,
        norm_ratio_bounded,
        ok,
    }
}

fn trend_csv(outcomes: &[EpsOutcome], sweep: &SweepSummary) -> String {
    let mut out = String::from("epsilon,m_eps,m_eps_unit,energy,norm_sq,norm_ratio\n");
    for ((o, m), ratio) in outcomes.iter().zip(&sweep.trend.series).zip(&sweep.norm_ratios) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            o.epsilon, m.m_eps, m.m_eps_unit, o.result.energy, o.report.norm_sq, ratio
        );
    }
    out
}

/// Preflight, solve every requested epsilon and write all artifacts.
/// Refuses to solve when preflight reports a hard failure.
pub fn execute(loaded: &LoadedConfig, options: &RunOptions) -> Result<RunSummary> {
    let config = &loaded.config;
    let root = options.output_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    let epsilons = match options.epsilon {
        Some(eps) => {
            if !(eps > 0.0 && eps <= 1.0) {
                bail!("epsilon {eps} outside (0, 1]");
            }
            vec![eps]
        }
        None => config.epsilon_list.clone(),
    };
    fs::create_dir_all(&root).with_context(|| format!("creating output directory {}", root.display()))?;
    let pre = preflight(config)?;
    write(&root.join("preflight.json"), &serde_json::to_string_pretty(&pre)?)?;
    write(&root.join("manifest.txt"), &manifest(loaded, &pre, &epsilons))?;
    if pre.blocks_solve() {
        bail!("preflight refused the run: {}", pre.hard_failures.join("; "));
    }
    let h = pre.coupling(config)?;

    let solve_one = |eps: &f64| (*eps, solve_epsilon(config, &h, *eps));
    let raw: Vec<(f64, Result<EpsOutcome>)> = if options.parallel {
        epsilons.par_iter().map(solve_one).collect()
    } else {
        epsilons.iter().map(solve_one).collect()
    };

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (eps, res) in raw {
        match res {
            Ok(outcome) => {
                write_outcome(&root, &outcome)?;
                outcomes.push(outcome);
            }
            Err(e) => {
                let dir = epsilon_dir(&root, eps);
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write(&dir.join("error.txt"), &format!("{e:#}\n"))?;
                failures.push((eps, format!("{e:#}")));
            }
        }
    }
    let sweep = if epsilons.len() > 1 {
        let summary = sweep_summary(config, &outcomes);
        write(&root.join("m_eps.csv"), &trend_csv(&outcomes, &summary))?;
        write(&root.join("sweep.json"), &serde_json::to_string_pretty(&summary)?)?;
        Some(summary)
    } else {
        None
    };
    Ok(RunSummary {
        output_dir: root,
        preflight: pre,
        outcomes,
        failures,
        sweep,
    })
}

/// `t, f(t), f'(t), f''(t)` rows from `min` to `max` inclusive.
pub fn transform_table(min: f64, max: f64, step: f64) -> Result<String> {
    if !(step > 0.0) || !min.is_finite() || !max.is_finite() || max < min {
        bail!("need finite min <= max and step > 0");
    }
    let count = ((max - min) / step).floor() as u64 + 1;
    if count > 10_000_000 {
        bail!("table of {count} rows is too large");
    }
    let tr = quasisol_core::DualTransform::default();
    let mut out = String::from("t,f,f_prime,f_second\n");
    for k in 0..count {
        let t = min + k as f64 * step;
        let e = tr.eval(t)?;
        let _ = writeln!(out, "{t},{},{},{}", e.value, e.prime, e.second);
    }
    Ok(out)
}
