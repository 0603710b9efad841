use quasisol_core::Grid;

fn richardson(values: [f64; 3]) -> f64 {
    (values[0] - values[1]) / (values[1] - values[2])
}

#[test]
fn quadrature_converges_at_second_order() {
    let integral = |n: usize| {
        let g = Grid::radial(3, 8.0, n).unwrap();
        let field: Vec<f64> = g.radii().iter().map(|r| (-r * r).exp() * (1.0 + r)).collect();
        g.integrate(&field).unwrap()
    };
    let ratio = richardson([integral(101), integral(201), integral(401)]);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn laplacian_converges_at_second_order() {
    let radius = 10.0;
    let k = std::f64::consts::PI / radius;
    // max interior error of the radial Laplacian of cos(k r) on r <= R/2
    let error = |n: usize| {
        let g = Grid::radial(3, radius, n).unwrap();
        let field: Vec<f64> = g.radii().iter().map(|r| (k * r).cos()).collect();
        let lap = g.laplacian(&field).unwrap();
        g.radii()
            .iter()
            .zip(&lap)
            .filter(|(r, _)| **r <= 0.5 * radius)
            .map(|(&r, &l)| {
                let exact = if r == 0.0 {
                    -3.0 * k * k
                } else {
                    -k * k * (k * r).cos() - 2.0 * k * (k * r).sin() / r
                };
                (l - exact).abs()
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (error(101), error(201));
    let ratio = e1 / e2;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn gaussian_x_norm_matches_closed_form() {
    // int |grad g|^2 + g^2 = 4 (pi/2)^{3/2} for g = exp(-r^2) in R^3
    let g = Grid::radial(3, 10.0, 1000).unwrap();
    let field: Vec<f64> = g.radii().iter().map(|r| (-r * r).exp()).collect();
    let state = quasisol_core::StatePair { w: field.clone(), z: vec![0.0; field.len()] };
    let ones = vec![1.0; field.len()];
    let norm = quasisol_core::discretization::x_norm_sq(&g, &state, &ones, &ones).unwrap();
    let exact = 4.0 * (std::f64::consts::PI / 2.0).powf(1.5);
    assert!((norm - exact).abs() <= 1e-3 * exact);
}

#[test]
fn psi_tracks_norm_for_small_states() {
    let g = Grid::radial(3, 10.0, 200).unwrap();
    let tr = quasisol_core::DualTransform::default();
    let ones = vec![1.0; g.len()];
    let profile: Vec<f64> = g.radii().iter().map(|r| 1e-3 * (-r * r).exp()).collect();
    let state = quasisol_core::StatePair { w: profile.clone(), z: profile };
    let psi = quasisol_core::discretization::psi(&g, &tr, &state, &ones, &ones).unwrap();
    let norm = quasisol_core::discretization::x_norm_sq(&g, &state, &ones, &ones).unwrap();
    assert!(psi <= norm);
    assert!((norm - psi) <= 1e-3 * norm);
}

#[test]
fn class_two_gradient_on_unit_sphere() {
    let v = quasisol_core::PotentialSpec::class2_bump(1.0).unwrap();
    let min = (0..64)
        .map(|k| v.gradient_norm(1.0 + 1e-9 * k as f64))
        .fold(f64::INFINITY, f64::min);
    assert!(min >= 2.0 * (-1.0f64).exp() - 1e-6);
}
