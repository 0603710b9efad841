//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use quasisol_cli::config::{GridConfig, RunConfig};
use quasisol_cli::preflight::preflight;
use quasisol_cli::run::{context, epsilon_dir, execute, solve_epsilon, RunOptions};
use quasisol_core::mountain_pass::{check_geometry, construct_endpoint};
use quasisol_core::penalization::{choose_a, verify_h_bounds};
use quasisol_core::verify::map_back;
use quasisol_core::{
    Coupling, DualTransform, FunctionalContext, Grid, HomogeneousQ, PenalizedH, PotentialSpec, Region,
    StatePair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn criterion(id: u32, name: &'static str, limit: Duration, body: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (ok, detail) = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let detail = if in_time {
        detail
    } else {
        format!("{detail}; over time limit {limit:?}")
    };
    Outcome { id, name, pass: ok && in_time, detail, elapsed }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> quasisol_cli::config::LoadedConfig {
    RunConfig::load(&configs_dir().join(name)).expect("shipped config loads")
}

// ---------------------------------------------------------------- 1

fn transform_suite() -> (bool, String) {
    const SLACK: f64 = 1e-10;
    let tr = DualTransform::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ts: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1e6..1e6)).collect();
    let mut violations = 0usize;
    let mut worst_round_trip: f64 = 0.0;
    for &t in &ts {
        let e = tr.eval(t).unwrap();
        let (f, fp) = (e.value, e.prime);
        let checks = [
            fp.abs() <= 1.0 + SLACK,
            f.abs() <= t.abs() * (1.0 + SLACK),
            0.5 * f.abs() <= t.abs() * fp * (1.0 + SLACK),
            t.abs() * fp <= f.abs() * (1.0 + SLACK),
            f.abs() <= 2f64.powf(0.25) * t.abs().sqrt() * (1.0 + SLACK),
            0.5 * f * f <= t * f * fp * (1.0 + SLACK),
            t * f * fp <= f * f * (1.0 + SLACK),
            (f * fp).abs() <= std::f64::consts::FRAC_1_SQRT_2 + SLACK,
        ];
        violations += checks.iter().filter(|ok| !**ok).count();
        let back = tr.t_of_f(f).unwrap();
        worst_round_trip = worst_round_trip.max((back - t).abs() / t.abs().max(1.0));
    }
    let mut sorted: Vec<f64> = ts.iter().map(|t| t.abs()).filter(|t| *t > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    for q in [1.5, 2.0, 3.0, 5.0] {
        let g: Vec<f64> = sorted
            .iter()
            .map(|&s| tr.f(s).unwrap().powf(q) * tr.f_prime(s).unwrap())
            .collect();
        violations += g.windows(2).filter(|w| w[0] > w[1] * (1.0 + SLACK)).count();
    }
    let fourth = 2f64.powf(0.25);
    let limit = (tr.f(1e6).unwrap() / 1e3 - fourth).abs() / fourth;
    let ok = violations == 0 && limit <= 1e-2 && worst_round_trip <= 1e-11;
    (
        ok,
        format!("violations={violations} limit_err={limit:.3e} round_trip={worst_round_trip:.2e}"),
    )
}

// ---------------------------------------------------------------- 2

fn benchmark_ctx(n: usize) -> FunctionalContext {
    let q = HomogeneousQ::cubic_product();
    let a = choose_a(&q, 1.0, 1.0).unwrap();
    let h = PenalizedH::new(q, a, Region::Ball { radius: 8.0 }, 1.0, 1.0).unwrap();
    let pot = PotentialSpec::constant(1.0);
    FunctionalContext::new(
        Grid::radial(3, 20.0, n).unwrap(),
        &pot,
        &pot,
        Coupling::Penalized(h),
        1.0,
        DualTransform::default(),
    )
    .unwrap()
}

fn random_smooth(grid: &Grid, rng: &mut ChaCha8Rng) -> StatePair {
    let mut field = || {
        let amp = rng.gen_range(0.1..3.0);
        let width = rng.gen_range(1.0..6.0);
        let shift = rng.gen_range(0.0..5.0);
        (0..grid.len())
            .map(|i| {
                if grid.is_boundary(i) {
                    0.0
                } else {
                    amp * (-((grid.node_radius(i) - shift) / width).powi(2)).exp()
                }
            })
            .collect::<Vec<f64>>()
    };
    let w = field();
    let z = field();
    StatePair { w, z }
}

fn gradient_consistency() -> (bool, String) {
    let ctx = benchmark_ctx(400);
    let grid = ctx.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let state = random_smooth(grid, &mut rng);
        let dir = random_smooth(grid, &mut rng);
        let h = 1e-6;
        let fd = (ctx.phi(&state.add_scaled(h, &dir)).unwrap() - ctx.phi(&state.add_scaled(-h, &dir)).unwrap())
            / (2.0 * h);
        let analytic = ctx.phi_grad(&state).unwrap().dot(grid, &dir);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-8));
    }
    (worst <= 1e-5, format!("worst relative error {worst:.3e}"))
}

// ---------------------------------------------------------------- 3

fn penalization_bounds() -> (bool, String) {
    let q = HomogeneousQ::cubic_product();
    let a = choose_a(&q, 1.0, 1.0).unwrap();
    let h = PenalizedH::new(q, a, Region::Ball { radius: 8.0 }, 1.0, 1.0).unwrap();
    let report = verify_h_bounds(&h, 3, 10_000, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seam_worst: f64 = 0.0;
    for _ in 0..1000 {
        let phi = rng.gen_range(0.05..1.5f64);
        for radius in [a, 5.0 * a] {
            let (c, s) = (phi.cos(), phi.sin());
            let d = 1e-9 * radius;
            let lo = h.q_hat_grad((radius - d) * c, (radius - d) * s);
            let hi = h.q_hat_grad((radius + d) * c, (radius + d) * s);
            let mid = h.q_hat_grad(radius * c, radius * s);
            let scale = mid.0.abs().max(mid.1.abs()).max(2.0 * h.big_a() * radius);
            seam_worst = seam_worst.max((lo.0 - hi.0).abs().max((lo.1 - hi.1).abs()) / scale);
        }
    }
    let ok = report.h1_max_relative_defect <= 1e-9
        && report.h2_violations == 0
        && report.h3_growth_violations == 0
        && report.h3_derivative_violations == 0
        && report.smallness_ok
        && seam_worst <= 1e-4;
    (
        ok,
        format!(
            "a={a} h1={:.2e} h2_viol={} h3_viol={}+{} seam={seam_worst:.2e}",
            report.h1_max_relative_defect,
            report.h2_violations,
            report.h3_growth_violations,
            report.h3_derivative_violations
        ),
    )
}

// ---------------------------------------------------------------- 5 oracle

/// Scalar reduction `u = v` of the benchmark in the original variable:
/// `(1 + 2u^2)(u'' + 2u'/r) = u - 3u^5 - 2u u'^2`, shot from `u(0) = u0`.
/// Returns `(overshoot, energy up to the departure radius)`.
fn shoot(u0: f64) -> (bool, f64) {
    let rhs = |r: f64, u: f64, p: f64| (u - 3.0 * u.powi(5) - 2.0 * u * p * p) / (1.0 + 2.0 * u * u) - 2.0 * p / r;
    let density = |r: f64, u: f64, p: f64| r * r * ((1.0 + 2.0 * u * u) * p * p + u * u - u.powi(6));
    let h = 1e-3;
    let c = (u0 - 3.0 * u0.powi(5)) / (3.0 * (1.0 + 2.0 * u0 * u0));
    let mut r = h;
    let (mut u, mut p) = (u0 + 0.5 * c * h * h, c * h);
    let mut energy = 0.5 * h * (density(0.0, u0, 0.0) + density(r, u, p));
    while r < 40.0 {
        let k1 = (p, rhs(r, u, p));
        let k2 = (p + 0.5 * h * k1.1, rhs(r + 0.5 * h, u + 0.5 * h * k1.0, p + 0.5 * h * k1.1));
        let k3 = (p + 0.5 * h * k2.1, rhs(r + 0.5 * h, u + 0.5 * h * k2.0, p + 0.5 * h * k2.1));
        let k4 = (p + h * k3.1, rhs(r + h, u + h * k3.0, p + h * k3.1));
        let un = u + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let pn = p + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if un < 0.0 {
            return (true, 4.0 * std::f64::consts::PI * energy);
        }
        if pn > 0.0 {
            return (false, 4.0 * std::f64::consts::PI * energy);
        }
        energy += 0.5 * h * (density(r, u, p) + density(r + h, un, pn));
        r += h;
        u = un;
        p = pn;
    }
    (false, 4.0 * std::f64::consts::PI * energy)
}

fn shooting_oracle() -> (f64, f64) {
    let (mut lo, mut hi) = (1.0, 3.0);
    assert!(!shoot(lo).0 && shoot(hi).0, "oracle bracket");
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid).0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, shoot(lo).1)
}

// ---------------------------------------------------------------- driver

fn main() {
    let mut outcomes = Vec::new();

    outcomes.push(criterion(1, "transform suite", Duration::from_secs(5), transform_suite));
    outcomes.push(criterion(2, "gradient consistency", Duration::from_secs(30), gradient_consistency));
    outcomes.push(criterion(3, "penalization bounds", Duration::from_secs(10), penalization_bounds));

    let bench = load("benchmark.json");
    let run_a = tempfile::tempdir().unwrap();
    let run_b = tempfile::tempdir().unwrap();
    let solve_start = Instant::now();
    let summary = execute(
        &bench,
        &RunOptions { output_dir: Some(run_a.path().to_path_buf()), ..Default::default() },
    )
    .expect("benchmark run");
    let solve_time = solve_start.elapsed();
    let eps1 = summary.outcomes.first().expect("benchmark outcome");

    outcomes.push(criterion(4, "mountain-pass geometry", Duration::from_secs(60), || {
        let h = summary.preflight.coupling(&bench.config).unwrap();
        let ctx = context(&bench.config, &h, 1.0).unwrap();
        let alpha = check_geometry(&ctx, bench.config.solver.rho, 64, 4).unwrap();
        let endpoint = construct_endpoint(&ctx).unwrap();
        let ok = alpha > 0.0 && endpoint.energy <= 0.0 && eps1.result.energy >= alpha;
        (
            ok,
            format!("alpha={alpha:.4} endpoint_phi={:.3e} energy={:.4}", endpoint.energy, eps1.result.energy),
        )
    }));

    outcomes.push(criterion(5, "benchmark solve", Duration::from_secs(300), || {
        let (u0_ref, e_ref) = shooting_oracle();
        let (u, _) = map_back(&DualTransform::default(), &eps1.state).unwrap();
        let amp = u.iter().cloned().fold(0.0, f64::max);
        let scale = eps1.state.w.iter().cloned().fold(0.0, f64::max);
        let sym = eps1
            .state
            .w
            .iter()
            .zip(&eps1.state.z)
            .map(|(w, z)| (w - z).abs())
            .fold(0.0, f64::max)
            / scale;
        let amp_err = (amp - u0_ref).abs() / u0_ref;
        let e_err = (eps1.result.energy - e_ref).abs() / e_ref;
        let ok = eps1.result.converged()
            && eps1.result.grad_norm <= 1e-8
            && eps1.report.positivity_ok
            && eps1.report.both_nontrivial
            && sym <= 1e-6
            && amp_err <= 1e-2
            && e_err <= 1e-2
            && solve_time <= Duration::from_secs(300);
        (
            ok,
            format!(
                "grad={:.2e} w~z={sym:.1e} u(0)={amp:.5} vs {u0_ref:.5} energy={:.4} vs {e_ref:.4} solve={solve_time:.2?}",
                eps1.result.grad_norm, eps1.result.energy
            ),
        )
    }));

    outcomes.push(criterion(6, "recovery of the original system", Duration::from_secs(60), || {
        let r = &eps1.report;
        let ok = r.penalization_ok && r.weak_residual_max <= 1e-3 && bench.config.verify.test_functions == 16;
        (
            ok,
            format!("outside_sup={:.3e} < a={} weak_defect={:.3e}", r.outside_sup, r.a_used, r.weak_residual_max),
        )
    }));

    outcomes.push(criterion(7, "decay", Duration::from_secs(60), || {
        let r = &eps1.report;
        let mut fine = bench.config.clone();
        fine.grid = match fine.grid {
            GridConfig::Radial { radius, .. } => GridConfig::Radial { radius, nodes: 800 },
            other => other,
        };
        let pre = preflight(&fine).unwrap();
        let h = pre.coupling(&fine).unwrap();
        let f = solve_epsilon(&fine, &h, 1.0).unwrap().report;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        let drift = [
            rel(r.decay_c1, f.decay_c1),
            rel(r.decay_c2, f.decay_c2),
            rel(r.decay_c3, f.decay_c3),
            rel(r.decay_c4, f.decay_c4),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let ok = r.decay_fit_r2 >= 0.99 && r.decay_c2 > 0.0 && r.decay_c4 > 0.0 && drift <= 0.05;
        (
            ok,
            format!(
                "r2={:.5} C1={:.4} C2={:.4} C3={:.4} C4={:.4} drift(n=800)={drift:.2e}",
                r.decay_fit_r2, r.decay_c1, r.decay_c2, r.decay_c3, r.decay_c4
            ),
        )
    }));

    outcomes.push(criterion(8, "epsilon-sweep trend", Duration::from_secs(1800), || {
        let dir = tempfile::tempdir().unwrap();
        let sweep = load("sweep.json");
        let s = execute(
            &sweep,
            &RunOptions { output_dir: Some(dir.path().to_path_buf()), parallel: true, ..Default::default() },
        )
        .expect("sweep run");
        let t = s.sweep.as_ref().expect("trend");
        let m: Vec<String> = t.trend.series.iter().map(|m| format!("{:.2e}", m.m_eps)).collect();
        let ratios: Vec<String> = t.norm_ratios.iter().map(|r| format!("{r:.5}")).collect();
        let ok = s.success() && t.trend.non_increasing == Some(true) && t.norm_ratio_bounded == Some(true);
        (ok, format!("m_eps=[{}] ratios=[{}]", m.join(", "), ratios.join(", ")))
    }));

    outcomes.push(criterion(9, "determinism", Duration::from_secs(300), || {
        execute(
            &bench,
            &RunOptions { output_dir: Some(run_b.path().to_path_buf()), ..Default::default() },
        )
        .expect("second benchmark run");
        let mut compared = 0;
        let mut identical = true;
        for name in ["fields.csv", "trace.csv"] {
            let a = fs::read(epsilon_dir(run_a.path(), 1.0).join(name)).unwrap();
            let b = fs::read(epsilon_dir(run_b.path(), 1.0).join(name)).unwrap();
            identical &= a == b;
            compared += 1;
        }
        (identical, format!("{compared} CSV files compared byte for byte"))
    }));

    for o in &outcomes {
        println!(
            "[{}] {}. {} ({:.2?}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.elapsed,
            o.detail
        );
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", outcomes.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
