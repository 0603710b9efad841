#![allow(dead_code)]

use quasisol_core::penalization::choose_a;
use quasisol_core::{
    Coupling, DualTransform, FunctionalContext, Grid, HomogeneousQ, PenalizedH, PotentialSpec, Region,
    StatePair,
};

/// Cubic-product benchmark on `B_R`, `W = V = 1`, `Omega = B_8`.
pub fn benchmark(n: usize) -> FunctionalContext {
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

/// Smooth state `(amp_w g(r / width), amp_z g(r / width))`, `g = exp(-s^2)`,
/// zeroed on Dirichlet nodes.
pub fn gaussian_state(grid: &Grid, amp_w: f64, amp_z: f64, width: f64) -> StatePair {
    let profile: Vec<f64> = (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                0.0
            } else {
                (-(grid.node_radius(i) / width).powi(2)).exp()
            }
        })
        .collect();
    StatePair {
        w: profile.iter().map(|g| amp_w * g).collect(),
        z: profile.iter().map(|g| amp_z * g).collect(),
    }
}
