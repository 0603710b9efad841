//! Post-solve checks in the original variables `u = f(w)`, `v = f(z)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{Grid, StatePair};
use crate::error::{Error, Result};
use crate::functional::{Coupling, FunctionalContext};
use crate::penalization::Region;
use crate::transform::DualTransform;

/// Node-wise `(f(w), f(z))`.
pub fn map_back(transform: &DualTransform, state: &StatePair) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = state.w.iter().map(|&w| transform.f(w)).collect::<Result<Vec<_>>>()?;
    let v = state.z.iter().map(|&z| transform.f(z)).collect::<Result<Vec<_>>>()?;
    Ok((u, v))
}

/// Smooth bump of half-width `width` centred on `center`, zero on the boundary.
fn bump(grid: &Grid, center: &[f64], width: f64, shell: bool) -> Vec<f64> {
    let d = grid.dimension();
    let mut x = vec![0.0; d];
    (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                return 0.0;
            }
            let dist = if shell {
                (grid.node_radius(i) - center[0]).abs()
            } else {
                grid.node_position(i, &mut x);
                x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            };
            let s = dist / width;
            if s >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - s * s)).exp()
            }
        })
        .collect()
}

/// Test functions for the weak form: seeded compact bumps (shells on
/// radial grids) plus the cut-off composites `f(w)/f'(w)` and `f(z)/f'(z)`.
pub fn test_bank(
    grid: &Grid,
    transform: &DualTransform,
    state: &StatePair,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shell = matches!(grid, Grid::Radial(_));
    let extent = grid.extent();
    let d = grid.dimension();
    let composites = if count >= 8 { 4 } else { 0 };
    let mut bank = Vec::with_capacity(count);
    for _ in 0..count - composites {
        let width = rng.gen_range(0.05..0.35) * extent;
        let mut center = vec![0.0; d];
        if shell {
            center[0] = rng.gen_range(0.0..(extent - width).max(0.0));
        } else {
            let reach = (extent - width).max(0.0) / (d as f64).sqrt();
            for c in center.iter_mut() {
                *c = rng.gen_range(-reach..=reach);
            }
        }
        bank.push(bump(grid, &center, width, shell));
    }
    for k in 0..composites {
        let cutoff = bump(grid, &vec![0.0; d], extent * [0.5, 0.9][k % 2], false);
        let field = if k < 2 { &state.w } else { &state.z };
        let comp = field
            .iter()
            .zip(&cutoff)
            .map(|(&t, &c)| {
                let y = transform.f(t)?;
                Ok(c * y * (1.0 + 2.0 * y * y).sqrt())
            })
            .collect::<Result<Vec<_>>>()?;
        bank.push(comp);
    }
    Ok(bank)
}

/// Largest relative defect of the two weak identities
///
/// ```text
/// int (1 + 2u^2) grad u . grad phi + 2 |grad u|^2 u phi + W(eps x) u phi - Q_u(u, v) phi = 0
/// ```
///
/// (and the analogue for `v`) over `bank`. Each defect is divided by the sum
/// of the absolute values of its four terms. Face differences give the
/// gradient products; nodal quadrature gives the rest.
pub fn weak_residual_original(
    ctx: &FunctionalContext,
    u: &[f64],
    v: &[f64],
    bank: &[Vec<f64>],
) -> Result<f64> {
    let grid = ctx.grid();
    grid.check(u)?;
    grid.check(v)?;
    let q = ctx.coupling().q();
    let weights = grid.weights();
    let n = grid.len();
    let mut qu = vec![0.0; n];
    let mut qv = vec![0.0; n];
    for i in 0..n {
        let (a, b) = q.grad(u[i], v[i]);
        qu[i] = a;
        qv[i] = b;
    }
    let mut worst = 0.0_f64;
    for phi in bank {
        grid.check(phi)?;
        for (field, pot, force) in [(u, ctx.w_field(), &qu), (v, ctx.v_field(), &qv)] {
            let mut diffusion = 0.0;
            let mut gradient_sq = 0.0;
            for face in grid.faces() {
                let (i, j) = (face.i, face.j);
                let du = field[j] - field[i];
                let mean_sq = 0.5 * (field[i] * field[i] + field[j] * field[j]);
                diffusion += face.coeff * (1.0 + 2.0 * mean_sq) * du * (phi[j] - phi[i]);
                let up = 0.5 * (field[i] * phi[i] + field[j] * phi[j]);
                gradient_sq += face.coeff * du * du * up;
            }
            let gradient_sq = 2.0 * gradient_sq;
            let mut mass = 0.0;
            let mut source = 0.0;
            for i in 0..n {
                mass += weights[i] * pot[i] * field[i] * phi[i];
                source += weights[i] * force[i] * phi[i];
            }
            let scale = diffusion.abs() + gradient_sq.abs() + mass.abs() + source.abs();
            if scale > 0.0 {
                worst = worst.max((diffusion + gradient_sq + mass - source).abs() / scale);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCheck {
    /// `sup |(f(w), f(z))|` over nodes outside `Omega_eps`.
    pub outside_sup: f64,
    pub a: f64,
    pub ok: bool,
    /// Every outside node has `w, z < f^{-1}(a/2)`.
    pub strict_ok: bool,
}

/// Smallness of the solution off `Omega_eps = Omega / eps`.
pub fn penalization_consistency(
    grid: &Grid,
    state: &StatePair,
    transform: &DualTransform,
    omega: &Region,
    epsilon: f64,
    a: f64,
) -> Result<PenaltyCheck> {
    state.check(grid)?;
    let d = grid.dimension();
    if omega.outer_radius(d) / epsilon > grid.extent() {
        return Err(Error::invalid(format!(
            "Omega_eps (radius {:.4}) exceeds the truncation radius {:.4}",
            omega.outer_radius(d) / epsilon,
            grid.extent()
        )));
    }
    let threshold = transform.t_of_f(0.5 * a)?;
    let mut x = vec![0.0; d];
    let mut sup = 0.0_f64;
    let mut strict_ok = true;
    for i in 0..grid.len() {
        grid.node_position(i, &mut x);
        x.iter_mut().for_each(|c| *c *= epsilon);
        if omega.contains(&x) {
            continue;
        }
        let u = transform.f(state.w[i])?;
        let v = transform.f(state.z[i])?;
        sup = sup.max(u.hypot(v));
        if state.w[i].abs() >= threshold || state.z[i].abs() >= threshold {
            strict_ok = false;
        }
    }
    Ok(PenaltyCheck {
        outside_sup: sup,
        a,
        ok: sup < a,
        strict_ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// `exp(intercept)`.
    pub amplitude: f64,
    /// `-slope * eps`, with the slope taken against `|x| = eps * r`.
    pub rate: f64,
    pub r2: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub r2_u: f64,
    pub r2_v: f64,
}

impl DecayFit {
    pub fn r2(&self) -> f64 {
        self.r2_u.min(self.r2_v)
    }
}

/// Fraction of outermost nodes skipped by the fit: the homogeneous
/// Dirichlet condition at the truncation radius bends `log u` there.
pub const DIRICHLET_LAYER: f64 = 0.1;

fn fit_tail(radii: &[f64], field: &[f64], epsilon: f64, tail_fraction: f64) -> Result<LineFit> {
    let end = ((1.0 - DIRICHLET_LAYER) * radii.len() as f64).floor() as usize;
    let usable: Vec<usize> = (0..end).filter(|&i| field[i] > 1e-14).collect();
    let skip = ((1.0 - tail_fraction) * usable.len() as f64).floor() as usize;
    let pts: Vec<(f64, f64)> = usable[skip..]
        .iter()
        .map(|&i| (epsilon * radii[i], field[i].ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Fit(format!("only {} usable tail nodes (need 8)", pts.len())));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate tail abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit {
        amplitude: intercept.exp(),
        rate: -slope * epsilon,
        r2,
        nodes: pts.len(),
    })
}

/// Log-linear least squares on the outer `tail_fraction` of the radially
/// ordered nodes where the field exceeds `1e-14`, short of the
/// [`DIRICHLET_LAYER`]. `radii` are grid radii
/// `|x/eps|`.
pub fn decay_fit(radii: &[f64], u: &[f64], v: &[f64], epsilon: f64, tail_fraction: f64) -> Result<DecayFit> {
    if !(tail_fraction > 0.0 && tail_fraction < 0.5) {
        return Err(Error::invalid("tail_fraction must lie in (0, 0.5)"));
    }
    if u.len() != radii.len() || v.len() != radii.len() {
        return Err(Error::GridMismatch {
            expected: radii.len(),
            found: u.len().min(v.len()),
        });
    }
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("radii must be sorted"));
    }
    let fu = fit_tail(radii, u, epsilon, tail_fraction)?;
    let fv = fit_tail(radii, v, epsilon, tail_fraction)?;
    Ok(DecayFit {
        c1: fu.amplitude,
        c2: fu.rate,
        c3: fv.amplitude,
        c4: fv.rate,
        r2_u: fu.r2,
        r2_v: fv.r2,
    })
}

/// Boundary maximum of one sweep entry on both conventions for `Omega_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MEps {
    pub epsilon: f64,
    /// Ring at `|x| = R_Omega / eps`.
    pub m_eps: f64,
    /// Ring at `|x| = 1 / eps`.
    pub m_eps_unit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrend {
    pub series: Vec<MEps>,
    /// `None` for fewer than two entries.
    pub non_increasing: Option<bool>,
    pub non_increasing_unit: Option<bool>,
    pub flags: Vec<String>,
}

/// Largest `|(w, z)|` over nodes within one spacing of the sphere of `radius`.
/// `NaN` when the sphere leaves the grid.
pub fn ring_max(grid: &Grid, state: &StatePair, radius: f64) -> f64 {
    if radius > grid.extent() {
        return f64::NAN;
    }
    let h = grid.spacing();
    (0..grid.len())
        .filter(|&i| (grid.node_radius(i) - radius).abs() <= h)
        .map(|i| state.w[i].hypot(state.z[i]))
        .fold(0.0, f64::max)
}

fn within_tolerance(values: &[f64], slack: f64) -> Option<bool> {
    if values.len() < 2 {
        return None;
    }
    Some(
        values
            .windows(2)
            .all(|w| w[0].is_finite() && w[1].is_finite() && w[1] <= (1.0 + slack) * w[0]),
    )
}

/// `m_eps` across a decreasing list of `eps` and its trend (10% slack).
pub fn boundary_max_sweep(results: &[(f64, &Grid, &StatePair)], omega: &Region) -> SweepTrend {
    let mut flags = Vec::new();
    if results.windows(2).any(|w| w[1].0 >= w[0].0) {
        flags.push("epsilon values are not strictly decreasing".to_string());
    }
    let series: Vec<MEps> = results
        .iter()
        .map(|(eps, grid, state)| MEps {
            epsilon: *eps,
            m_eps: ring_max(grid, state, omega.inner_radius() / eps),
            m_eps_unit: ring_max(grid, state, 1.0 / eps),
        })
        .collect();
    if series.iter().any(|m| !m.m_eps.is_finite() || !m.m_eps_unit.is_finite()) {
        flags.push("boundary ring outside the grid for some epsilon".to_string());
    }
    let main: Vec<f64> = series.iter().map(|m| m.m_eps).collect();
    let unit: Vec<f64> = series.iter().map(|m| m.m_eps_unit).collect();
    let non_increasing = within_tolerance(&main, 0.1);
    if non_increasing.is_none() {
        flags.push("trend undefined for fewer than two epsilon values".to_string());
    }
    SweepTrend {
        series,
        non_increasing,
        non_increasing_unit: within_tolerance(&unit, 0.1),
        flags,
    }
}

/// `||(w, z)||^2 / (c + c^{2*/2})`, with `2*/2 = N/(N-2)`.
pub fn norm_ratio(norm_sq: f64, energy: f64, dimension: usize) -> f64 {
    let n = dimension as f64;
    norm_sq / (energy + energy.powf(n / (n - 2.0)))
}

/// No growth trend in a sequence of norm ratios: either every ratio is at
/// most 10% above its predecessor, or the successive increments shrink
/// (each at most 110% of the previous), so the sequence saturates.
/// `None` for fewer than two ratios.
pub fn ratio_bounded(ratios: &[f64]) -> Option<bool> {
    let flat = within_tolerance(ratios, 0.1)?;
    if flat || ratios.len() < 3 {
        return Some(flat);
    }
    let steps: Vec<f64> = ratios.windows(2).map(|w| w[1] - w[0]).collect();
    Some(steps.windows(2).all(|d| d[1] <= 0.0 || d[1] <= 1.1 * d[0].max(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub epsilon: f64,
    pub weak_residual_max: f64,
    pub weak_residual_ok: bool,
    pub outside_sup: f64,
    pub a_used: f64,
    pub penalization_ok: bool,
    pub strict_threshold_ok: bool,
    pub decay_c1: f64,
    pub decay_c2: f64,
    pub decay_c3: f64,
    pub decay_c4: f64,
    pub decay_fit_r2: f64,
    pub decay_ok: bool,
    pub m_eps: f64,
    pub m_eps_unit: f64,
    pub positivity_ok: bool,
    pub both_nontrivial: bool,
    pub norm_sq: f64,
    pub flags: Vec<String>,
}

impl VerificationReport {
    pub fn all_ok(&self) -> bool {
        self.weak_residual_ok
            && self.penalization_ok
            && self.decay_ok
            && self.positivity_ok
            && self.both_nontrivial
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub test_functions: usize,
    pub weak_tolerance: f64,
    pub tail_fraction: f64,
    pub min_r2: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            test_functions: 16,
            weak_tolerance: 1e-3,
            tail_fraction: 0.3,
            min_r2: 0.99,
            seed: 0,
        }
    }
}

/// Runs every single-solution check on a converged state.
pub fn verify_solution(
    ctx: &FunctionalContext,
    state: &StatePair,
    config: &VerifyConfig,
) -> Result<VerificationReport> {
    let grid = ctx.grid();
    state.check(grid)?;
    let transform = ctx.transform();
    let (u, v) = map_back(transform, state)?;
    let mut flags = Vec::new();

    let bank = test_bank(grid, transform, state, config.test_functions, config.seed)?;
    let weak = weak_residual_original(ctx, &u, &v, &bank)?;

    let (penalty, omega_radius) = match ctx.coupling() {
        Coupling::Penalized(h) => (
            penalization_consistency(grid, state, transform, h.omega(), ctx.epsilon(), h.a())?,
            h.omega().inner_radius(),
        ),
        Coupling::Raw(_) => (
            PenaltyCheck {
                outside_sup: 0.0,
                a: f64::NAN,
                ok: true,
                strict_ok: true,
            },
            f64::NAN,
        ),
    };
    if !penalty.ok {
        flags.push(format!(
            "solution exceeds a = {} outside Omega_eps (sup {:.3e})",
            penalty.a, penalty.outside_sup
        ));
    }

    let (decay, decay_ok) = match grid {
        Grid::Radial(_) => match decay_fit(&grid.radii(), &u, &v, ctx.epsilon(), config.tail_fraction) {
            Ok(fit) => {
                let ok = fit.r2() >= config.min_r2 && fit.c2 > 0.0 && fit.c4 > 0.0;
                if !ok {
                    flags.push(format!("tail not exponential (r2 = {:.5})", fit.r2()));
                }
                (Some(fit), ok)
            }
            Err(e) => {
                flags.push(format!("decay fit failed: {e}"));
                (None, false)
            }
        },
        Grid::Box(_) => {
            flags.push("decay fit needs radially ordered nodes; skipped on box grids".to_string());
            (None, true)
        }
    };

    let scale = state.max_abs();
    let positivity_ok = u.iter().chain(&v).all(|&x| x >= 0.0);
    let max_u = u.iter().cloned().fold(0.0, f64::max);
    let max_v = v.iter().cloned().fold(0.0, f64::max);
    let both_nontrivial = max_u > 1e-8 * scale.max(1e-300) && max_v > 1e-8 * scale.max(1e-300);
    if !both_nontrivial {
        flags.push("a component is trivial".to_string());
    }
    let weak_ok = weak <= config.weak_tolerance;
    if !weak_ok {
        flags.push(format!("weak defect {weak:.3e} above {:.1e}", config.weak_tolerance));
    }
    let nan = f64::NAN;
    Ok(VerificationReport {
        epsilon: ctx.epsilon(),
        weak_residual_max: weak,
        weak_residual_ok: weak_ok,
        outside_sup: penalty.outside_sup,
        a_used: penalty.a,
        penalization_ok: penalty.ok,
        strict_threshold_ok: penalty.strict_ok,
        decay_c1: decay.map_or(nan, |d| d.c1),
        decay_c2: decay.map_or(nan, |d| d.c2),
        decay_c3: decay.map_or(nan, |d| d.c3),
        decay_c4: decay.map_or(nan, |d| d.c4),
        decay_fit_r2: decay.map_or(nan, |d| d.r2()),
        decay_ok,
        m_eps: ring_max(grid, state, omega_radius / ctx.epsilon()),
        m_eps_unit: ring_max(grid, state, 1.0 / ctx.epsilon()),
        positivity_ok,
        both_nontrivial,
        norm_sq: ctx.x_norm_sq(state)?,
        flags,
    })
}
