//! Fixtures shared by the criterion benches in `benches/`.

use quasisol_core::penalization::choose_a;
use quasisol_core::{
    Coupling, DualTransform, FunctionalContext, Grid, HomogeneousQ, PenalizedH, PotentialSpec, Region,
    StatePair,
};

/// Cubic-product problem on a radial grid of `n` nodes, `W = V = 1`.
pub fn benchmark_context(n: usize) -> FunctionalContext {
    let q = HomogeneousQ::cubic_product();
    let a = choose_a(&q, 1.0, 1.0).expect("cutoff");
    let h = PenalizedH::new(q, a, Region::Ball { radius: 8.0 }, 1.0, 1.0).expect("coupling");
    let pot = PotentialSpec::constant(1.0);
    FunctionalContext::new(
        Grid::radial(3, 20.0, n).expect("grid"),
        &pot,
        &pot,
        Coupling::Penalized(h),
        1.0,
        DualTransform::default(),
    )
    .expect("context")
}

/// Gaussian bump of height `amp` in both components.
pub fn bump(grid: &Grid, amp: f64) -> StatePair {
    let w: Vec<f64> = (0..grid.len())
        .map(|i| if grid.is_boundary(i) { 0.0 } else { amp * (-grid.node_radius(i).powi(2) / 4.0).exp() })
        .collect();
    StatePair { z: w.clone(), w }
}
