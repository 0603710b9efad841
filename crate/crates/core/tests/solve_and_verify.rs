mod common;

use quasisol_core::mountain_pass::solve;
use quasisol_core::penalization::choose_a;
use quasisol_core::verify::{map_back, test_bank, verify_solution, weak_residual_original};
use quasisol_core::{
    Coupling, DualTransform, FunctionalContext, Grid, HomogeneousQ, PenalizedH, PotentialSpec, Region,
    SolverConfig, VerifyConfig,
};

fn context_with_omega(radius: f64, n: usize) -> FunctionalContext {
    let q = HomogeneousQ::cubic_product();
    let a = choose_a(&q, 1.0, 1.0).unwrap();
    let h = PenalizedH::new(q, a, Region::Ball { radius }, 1.0, 1.0).unwrap();
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

#[test]
fn benchmark_solution_verifies() {
    // the weak-form defect is an O(h^2) quadrature mismatch; n = 400 keeps it below 1e-3
    let ctx = common::benchmark(400);
    let out = solve(&ctx, &SolverConfig::default()).unwrap();
    assert!(out.converged(), "{:?}", out.flags);
    let report = verify_solution(&ctx, &out.state, &VerifyConfig::default()).unwrap();
    assert!(report.all_ok(), "{report:?}");
    assert!(report.decay_c2 > 0.0 && report.decay_c4 > 0.0);

    // strong residual of the converged state, relative to the field scale
    let (rw, rz) = ctx.residual_aux(&out.state).unwrap();
    let scale = out.state.max_abs();
    let worst = rw.iter().chain(&rz).map(|x| x.abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-4 * scale);
}

#[test]
fn undersized_region_is_caught() {
    // Omega = B_1 leaves the bump well above a outside Omega
    let small = context_with_omega(1.0, 200);
    let fine = context_with_omega(8.0, 200);
    let config = SolverConfig::default();
    let bad = solve(&small, &config).unwrap();
    let good = solve(&fine, &config).unwrap();
    assert!(bad.converged() && good.converged());

    let bad_report = verify_solution(&small, &bad.state, &VerifyConfig::default()).unwrap();
    let good_report = verify_solution(&fine, &good.state, &VerifyConfig::default()).unwrap();
    assert!(!bad_report.penalization_ok);
    assert!(!bad_report.all_ok());
    assert!(bad_report.weak_residual_max > good_report.weak_residual_max);

    let tr = DualTransform::default();
    let (u, v) = map_back(&tr, &bad.state).unwrap();
    let bank = test_bank(small.grid(), &tr, &bad.state, 16, 0).unwrap();
    let defect = weak_residual_original(&small, &u, &v, &bank).unwrap();
    assert!(defect > 1e-3, "defect {defect}");
}
