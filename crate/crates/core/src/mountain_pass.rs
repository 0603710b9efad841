//! Mountain-pass saddle search.
//!
//! A discrete path joins `0` to a negative-energy endpoint. Each outer
//! iteration takes the highest path node (refined along the neighbouring
//! polyline), moves it down the `X`-gradient with an Armijo line search and
//! re-tensions its neighbours by linear interpolation. The path maximum
//! converges to a critical point at the minimax level, which is then
//! sharpened by a damped Newton-Krylov (or nonlinear CG) polish.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::StatePair;
use crate::error::{Error, Result};
use crate::functional::{Coupling, FunctionalContext};
use crate::krylov::gmres;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolishMethod {
    None,
    DampedNewton,
    NonlinearCg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of path nodes, odd and at least 9.
    pub path_nodes: usize,
    /// Initial step along the `X`-gradient; adapted by the line search.
    pub descent_step: f64,
    /// Target gradient norm (weighted L2) of the returned state.
    pub grad_tolerance: f64,
    /// Path deformation hands over to the polish below this gradient norm.
    pub handoff_tolerance: f64,
    pub max_outer_iterations: usize,
    pub max_polish_iterations: usize,
    pub polish: PolishMethod,
    /// Radius of the sphere `Psi = rho^2` probed for the energy barrier.
    pub rho: f64,
    pub geometry_samples: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            path_nodes: 17,
            descent_step: 1.0,
            grad_tolerance: 1e-9,
            handoff_tolerance: 1e-2,
            max_outer_iterations: 20_000,
            max_polish_iterations: 60,
            polish: PolishMethod::DampedNewton,
            rho: 1.0,
            geometry_samples: 64,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.path_nodes < 9 || self.path_nodes % 2 == 0 {
            return Err(Error::invalid("path_nodes must be odd and at least 9"));
        }
        if !(self.descent_step > 0.0) {
            return Err(Error::invalid("descent_step must be positive"));
        }
        if !(self.grad_tolerance > 0.0) || !(self.handoff_tolerance > 0.0) {
            return Err(Error::invalid("gradient tolerances must be positive"));
        }
        if !(self.rho > 0.0) {
            return Err(Error::invalid("rho must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Path,
    Polish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub stage: Stage,
    pub max_energy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Iteration cap hit; the state is the best candidate seen.
    NotConverged,
    /// Polish could not reduce the gradient further.
    Stagnated,
    /// The candidate collapsed onto the trivial critical point.
    Trivial,
}

/// Critical-point candidate at the mountain-pass level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MPResult {
    #[serde(skip)]
    pub state: StatePair,
    /// Estimate of the minimax level `c_eps`.
    pub energy: f64,
    pub grad_norm: f64,
    pub alpha_estimate: f64,
    pub rho: f64,
    pub iterations: usize,
    pub polish_iterations: usize,
    pub status: SolveStatus,
    pub flags: Vec<String>,
    pub endpoint_scale: f64,
    pub endpoint_energy: f64,
    pub endpoint_psi: f64,
    pub clamped_nodes: usize,
    pub path_energies: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl MPResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Negative-energy end of the mountain-pass paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub state: StatePair,
    /// Multiplier `t*` of the bump pair `(phi, phi)`.
    pub scale: f64,
    pub energy: f64,
    pub psi: f64,
}

/// Smooth bump `exp(1 - 1/(1 - (|x|/r)^2))` supported in the ball `B_r(0)`.
fn compact_bump(ctx: &FunctionalContext, r: f64) -> Vec<f64> {
    let g = ctx.grid();
    (0..g.len())
        .map(|i| {
            let s = g.node_radius(i) / r;
            if g.is_boundary(i) || s >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - s * s)).exp()
            }
        })
        .collect()
}

/// Cap on the endpoint bump radius. Much wider bumps put the energy hump
/// between the first two path nodes.
pub const MAX_BUMP_RADIUS: f64 = 6.0;

/// Doubles `t` until `Phi(t (phi, phi)) < -1` for a bump `phi` inside `Omega_eps`.
pub fn construct_endpoint(ctx: &FunctionalContext) -> Result<Endpoint> {
    let grid = ctx.grid();
    let reach = 0.5 * grid.extent();
    let omega_eps = match ctx.coupling() {
        Coupling::Penalized(h) => h.omega().inner_radius() / ctx.epsilon(),
        Coupling::Raw(_) => f64::INFINITY,
    };
    let r = (0.9 * omega_eps).min(reach).min(MAX_BUMP_RADIUS);
    if r < 8.0 * grid.spacing() {
        return Err(Error::Geometry(format!(
            "ball of radius {r:.4} inside Omega_eps spans fewer than 8 grid spacings"
        )));
    }
    let bump = compact_bump(ctx, r);
    let base = StatePair::new(bump.clone(), bump)?;
    let mut t = 1.0_f64;
    while t <= 2f64.powi(60) {
        let state = base.scaled(t);
        let energy = ctx.phi(&state)?;
        if energy < -1.0 {
            let psi = ctx.psi(&state)?;
            return Ok(Endpoint { state, scale: t, energy, psi });
        }
        t *= 2.0;
    }
    Err(Error::Geometry(
        "no negative-energy endpoint up to t = 2^60; check Q and the grid".into(),
    ))
}

// Random smooth, non-negative pair vanishing on the Dirichlet boundary.
fn random_state(ctx: &FunctionalContext, rng: &mut ChaCha8Rng) -> StatePair {
    let g = ctx.grid();
    let d = g.dimension();
    let extent = g.extent();
    let make = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let amp = rng.gen_range(0.1..1.0);
        let width = rng.gen_range(0.05..0.3) * extent;
        let mut center = vec![0.0; d];
        match g {
            crate::discretization::Grid::Radial(_) => center[0] = rng.gen_range(0.0..0.4) * extent,
            crate::discretization::Grid::Box(_) => {
                for c in center.iter_mut() {
                    *c = rng.gen_range(-0.3..0.3) * extent;
                }
            }
        }
        let radial_shell = matches!(g, crate::discretization::Grid::Radial(_));
        let mut x = vec![0.0; d];
        (0..g.len())
            .map(|i| {
                if g.is_boundary(i) {
                    return 0.0;
                }
                let dist = if radial_shell {
                    g.node_radius(i) - center[0]
                } else {
                    g.node_position(i, &mut x);
                    x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                };
                let taper = 1.0 - (g.node_radius(i) / (extent * (d as f64).sqrt())).powi(2);
                amp * (-(dist / width).powi(2)).exp() * taper.max(0.0)
            })
            .collect()
    };
    let w = make(rng);
    let z = make(rng);
    StatePair { w, z }
}

/// Multiplier `t` with `Psi(t * state) = rho^2`, by bisection.
pub fn rescale_to_sphere(ctx: &FunctionalContext, state: &StatePair, rho: f64) -> Result<f64> {
    let target = rho * rho;
    let psi = |t: f64| ctx.psi(&state.scaled(t));
    if state.max_abs() == 0.0 {
        return Err(Error::invalid("cannot rescale the zero state onto a sphere"));
    }
    let mut hi = 1.0;
    while psi(hi)? < target {
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::invalid("Psi does not reach rho^2"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if psi(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimum of `Phi` over random states rescaled onto `Psi = rho^2`.
pub fn check_geometry(ctx: &FunctionalContext, rho: f64, sample_count: usize, seed: u64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid("rho must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = f64::INFINITY;
    for _ in 0..sample_count.max(1) {
        let state = random_state(ctx, &mut rng);
        let t = rescale_to_sphere(ctx, &state, rho)?;
        alpha = alpha.min(ctx.phi(&state.scaled(t))?);
    }
    Ok(alpha)
}

/// Support half-width, in nodes, of the local path deformation.
const HAT_WIDTH: usize = 2;

struct Path<'a> {
    ctx: &'a FunctionalContext,
    nodes: Vec<StatePair>,
    energies: Vec<f64>,
}

impl<'a> Path<'a> {
    fn new(ctx: &'a FunctionalContext, nodes: Vec<StatePair>) -> Result<Self> {
        let energies = nodes.iter().map(|s| ctx.phi(s)).collect::<Result<Vec<_>>>()?;
        Ok(Self { ctx, nodes, energies })
    }

    fn argmax(&self) -> usize {
        let mut k = 0;
        for (i, e) in self.energies.iter().enumerate() {
            if *e > self.energies[k] {
                k = i;
            }
        }
        k
    }

    fn set(&mut self, k: usize, state: StatePair) -> Result<()> {
        self.energies[k] = self.ctx.phi(&state)?;
        self.nodes[k] = state;
        Ok(())
    }

    // Point on the polyline k-1 -> k -> k+1 at parameter s in [-1, 1].
    fn polyline(&self, k: usize, s: f64) -> StatePair {
        if s < 0.0 {
            self.nodes[k].lerp(&self.nodes[k - 1], -s)
        } else {
            self.nodes[k].lerp(&self.nodes[k + 1], s)
        }
    }

    /// Golden-section search for the local maximum of the polyline through `k`.
    fn refine_max(&mut self, k: usize) -> Result<()> {
        let ratio = 0.5 * (5.0_f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let mut f1 = self.ctx.phi(&self.polyline(k, x1))?;
        let mut f2 = self.ctx.phi(&self.polyline(k, x2))?;
        for _ in 0..24 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = self.ctx.phi(&self.polyline(k, x2))?;
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = self.ctx.phi(&self.polyline(k, x1))?;
            }
        }
        let (s, best) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
        if best > self.energies[k] {
            let state = self.polyline(k, s);
            self.energies[k] = best;
            self.nodes[k] = state;
        }
        Ok(())
    }

    /// X-norm distance from node `k` to its nearer neighbour.
    fn gap(&self, k: usize) -> Result<f64> {
        let left = self.ctx.x_norm_sq(&self.nodes[k].add_scaled(-1.0, &self.nodes[k - 1]))?;
        let right = self.ctx.x_norm_sq(&self.nodes[k].add_scaled(-1.0, &self.nodes[k + 1]))?;
        Ok(left.min(right).sqrt())
    }

    /// Redistributes the interior nodes at equal `X`-arclength along the
    /// current polyline.
    fn reparametrize(&mut self) -> Result<()> {
        let m = self.nodes.len();
        let mut arc = vec![0.0; m];
        for j in 1..m {
            let seg = self.ctx.x_norm_sq(&self.nodes[j].add_scaled(-1.0, &self.nodes[j - 1]))?;
            arc[j] = arc[j - 1] + seg.sqrt();
        }
        let total = arc[m - 1];
        if !(total > 0.0) {
            return Ok(());
        }
        let mut fresh = Vec::with_capacity(m);
        fresh.push(self.nodes[0].clone());
        let mut seg = 1;
        for j in 1..m - 1 {
            let target = total * j as f64 / (m - 1) as f64;
            while arc[seg] < target && seg < m - 1 {
                seg += 1;
            }
            let len = arc[seg] - arc[seg - 1];
            let theta = if len > 0.0 { (target - arc[seg - 1]) / len } else { 0.0 };
            fresh.push(self.nodes[seg - 1].lerp(&self.nodes[seg], theta.clamp(0.0, 1.0)));
        }
        fresh.push(self.nodes[m - 1].clone());
        for (j, node) in fresh.into_iter().enumerate().take(m - 1).skip(1) {
            self.set(j, node)?;
        }
        Ok(())
    }

    /// Moves node `k` by `delta` and its neighbours by the linear hat
    /// interpolation `(1 - |j - k| / HAT_WIDTH) * delta`; the endpoints stay fixed.
    fn deform(&mut self, k: usize, delta: &StatePair) -> Result<()> {
        let m = self.nodes.len();
        let lo = k.saturating_sub(HAT_WIDTH - 1).max(1);
        let hi = (k + HAT_WIDTH - 1).min(m - 2);
        for j in lo..=hi {
            let weight = 1.0 - (j as f64 - k as f64).abs() / HAT_WIDTH as f64;
            let moved = self.nodes[j].add_scaled(weight, delta);
            self.set(j, moved)?;
        }
        Ok(())
    }
}

/// Straight path `j/(m-1) * endpoint`, `j = 0..m`.
pub fn straight_path(endpoint: &StatePair, nodes: usize) -> Vec<StatePair> {
    (0..nodes)
        .map(|j| endpoint.scaled(j as f64 / (nodes - 1) as f64))
        .collect()
}

/// Path-deformation stage. Stops at `grad_tolerance` when no polish is
/// configured and at the hand-off tolerance otherwise.
pub fn run_mountain_pass(
    ctx: &FunctionalContext,
    endpoint: &Endpoint,
    config: &SolverConfig,
) -> Result<MPResult> {
    config.validate()?;
    run_from_path(ctx, straight_path(&endpoint.state, config.path_nodes), endpoint, config)
}

/// Path-deformation stage starting from an explicit path whose first node is
/// zero and last node is the endpoint.
pub fn run_from_path(
    ctx: &FunctionalContext,
    nodes: Vec<StatePair>,
    endpoint: &Endpoint,
    config: &SolverConfig,
) -> Result<MPResult> {
    config.validate()?;
    if nodes.len() < 3 {
        return Err(Error::invalid("a path needs at least three nodes"));
    }
    let tolerance = match config.polish {
        PolishMethod::None => config.grad_tolerance,
        _ => config.handoff_tolerance.max(config.grad_tolerance),
    };
    let grid = ctx.grid();
    let mut path = Path::new(ctx, nodes)?;
    let mut trace = Vec::new();
    let mut step = config.descent_step;
    let mut best: Option<(f64, StatePair, f64)> = None;
    let mut status = SolveStatus::NotConverged;
    let mut iterations = 0;
    let mut flags = Vec::new();
    let m = path.nodes.len();

    for iter in 0..=config.max_outer_iterations {
        let k = path.argmax();
        if k == 0 || k == m - 1 {
            return Err(Error::Geometry(format!(
                "path maximum escaped to endpoint node {k} (energy {:.6e})",
                path.energies[k]
            )));
        }
        let grad = ctx.phi_grad(&path.nodes[k])?;
        let mut gn = grad.norm(grid);
        if gn > tolerance && iter > 0 {
            path.refine_max(k)?;
        }
        let grad = if gn > tolerance && iter > 0 {
            let g = ctx.phi_grad(&path.nodes[k])?;
            gn = g.norm(grid);
            g
        } else {
            grad
        };
        trace.push(TraceRecord {
            iteration: iter,
            stage: Stage::Path,
            max_energy: path.energies[k],
            grad_norm: gn,
        });
        if best.as_ref().map_or(true, |b| gn < b.0) {
            best = Some((gn, path.nodes[k].clone(), path.energies[k]));
        }
        if gn <= tolerance {
            status = SolveStatus::Converged;
            break;
        }
        if iter == config.max_outer_iterations {
            break;
        }
        iterations = iter + 1;

        // X-gradient with its component along the path tangent removed; the
        // along-path direction is handled by `refine_max`.
        let mut dir = ctx.sobolev_gradient(&grad);
        let tangent = path.nodes[k + 1].add_scaled(-1.0, &path.nodes[k - 1]);
        let tangent_sq = ctx.x_norm_sq(&tangent)?;
        if tangent_sq > 0.0 {
            dir = dir.add_scaled(-grad.dot(grid, &tangent) / tangent_sq, &tangent);
        }
        let slope = grad.dot(grid, &dir);
        if !(slope > 0.0) {
            flags.push(format!("transverse gradient vanished at iteration {iter}"));
            status = SolveStatus::Stagnated;
            break;
        }
        let current = path.energies[k];
        // keep the path continuous: move at most half the gap to the nearer neighbour
        let gap = path.gap(k)?;
        let mut trial = step.min(0.5 * gap / slope.max(f64::MIN_POSITIVE).sqrt());
        let mut accepted = None;
        for attempt in 0..40 {
            let cand = path.nodes[k].add_scaled(-trial, &dir);
            let e = ctx.phi(&cand)?;
            if e <= current - 1e-4 * trial * slope {
                accepted = Some(attempt);
                break;
            }
            trial *= 0.5;
        }
        match accepted {
            Some(attempt) => {
                path.deform(k, &dir.scaled(-trial))?;
                path.reparametrize()?;
                step = if attempt == 0 { (trial * 1.5).min(1e3) } else { trial };
            }
            None => {
                flags.push(format!("line search failed at iteration {iter}"));
                status = SolveStatus::Stagnated;
                break;
            }
        }
    }

    let (grad_norm, state, energy) = match status {
        SolveStatus::Converged => {
            let k = path.argmax();
            (trace.last().map(|t| t.grad_norm).unwrap_or(0.0), path.nodes[k].clone(), path.energies[k])
        }
        _ => best.expect("at least one iteration recorded"),
    };
    Ok(MPResult {
        state,
        energy,
        grad_norm,
        alpha_estimate: f64::NAN,
        rho: config.rho,
        iterations,
        polish_iterations: 0,
        status,
        flags,
        endpoint_scale: endpoint.scale,
        endpoint_energy: endpoint.energy,
        endpoint_psi: endpoint.psi,
        clamped_nodes: 0,
        path_energies: path.energies.clone(),
        trace,
    })
}

/// Result of sharpening a candidate to a root of the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolishOutcome {
    pub state: StatePair,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub flags: Vec<String>,
    pub trace: Vec<TraceRecord>,
}

/// Damped Newton-Krylov (or nonlinear CG) on `phi_grad = 0`.
///
/// Steps are accepted when they decrease the gradient norm and keep `Phi`
/// above `energy_floor`, which keeps the iteration away from the trivial
/// critical point.
pub fn polish(
    ctx: &FunctionalContext,
    state: &StatePair,
    config: &SolverConfig,
    energy_floor: f64,
) -> Result<PolishOutcome> {
    let grid = ctx.grid();
    let mut x = state.clone();
    let mut grad = ctx.phi_grad(&x)?;
    let mut gn = grad.norm(grid);
    let mut energy = ctx.phi(&x)?;
    let mut flags = Vec::new();
    let mut trace = vec![TraceRecord {
        iteration: 0,
        stage: Stage::Polish,
        max_energy: energy,
        grad_norm: gn,
    }];
    if x.max_abs() == 0.0 {
        flags.push("trivial state rejected".to_string());
        return Ok(PolishOutcome {
            state: x,
            energy,
            grad_norm: gn,
            iterations: 0,
            status: SolveStatus::Trivial,
            flags,
            trace,
        });
    }
    let start = gn;
    let mut status = if gn <= config.grad_tolerance {
        SolveStatus::Converged
    } else {
        SolveStatus::NotConverged
    };
    let mut iterations = 0;
    let mut cg_dir: Option<StatePair> = None;
    let mut cg_prev: Option<(StatePair, f64)> = None;

    while status == SolveStatus::NotConverged && iterations < config.max_polish_iterations {
        iterations += 1;
        let local = ctx.local_jacobians(&x)?;
        let dir = match config.polish {
            PolishMethod::NonlinearCg => {
                // Merit 0.5 |g|^2 has gradient J g; precondition with the X Riesz map twice.
                let jg = ctx.jacobian_apply(&local, &grad);
                let pg = ctx.sobolev_gradient(&ctx.sobolev_gradient(&jg));
                let rz = jg.dot(grid, &pg);
                let d = match (&cg_dir, &cg_prev) {
                    (Some(d_old), Some((pg_old, rz_old))) => {
                        let beta = ((rz - jg.dot(grid, pg_old)) / rz_old).max(0.0);
                        pg.scaled(-1.0).add_scaled(beta, d_old)
                    }
                    _ => pg.scaled(-1.0),
                };
                cg_prev = Some((pg, rz));
                d
            }
            _ => newton_direction(ctx, &local, &grad, &mut flags)?,
        };
        cg_dir = Some(dir.clone());

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = x.add_scaled(lambda, &dir);
            if let Ok(cg) = ctx.phi_grad(&cand) {
                let cn = cg.norm(grid);
                let ce = ctx.phi(&cand)?;
                if cn < (1.0 - 1e-4 * lambda) * gn && ce > energy_floor {
                    accepted = Some((cand, cg, cn, ce));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((cand, cg, cn, ce)) => {
                x = cand;
                grad = cg;
                gn = cn;
                energy = ce;
            }
            None => {
                flags.push(format!("polish stagnated at gradient norm {gn:.3e}"));
                status = SolveStatus::Stagnated;
            }
        }
        trace.push(TraceRecord {
            iteration: iterations,
            stage: Stage::Polish,
            max_energy: energy,
            grad_norm: gn,
        });
        if gn <= config.grad_tolerance {
            status = SolveStatus::Converged;
        }
    }
    if status == SolveStatus::NotConverged && gn > 1e-2 * start {
        status = SolveStatus::Stagnated;
        flags.push("polish reduced the gradient norm by less than 1e2".to_string());
    }
    Ok(PolishOutcome {
        state: x,
        energy,
        grad_norm: gn,
        iterations,
        status,
        flags,
        trace,
    })
}

fn newton_direction(
    ctx: &FunctionalContext,
    local: &[crate::functional::LocalJacobian],
    grad: &StatePair,
    flags: &mut Vec<String>,
) -> Result<StatePair> {
    let grid = ctx.grid();
    let n = grid.len();
    let split = |v: &[f64]| StatePair {
        w: v[..n].to_vec(),
        z: v[n..].to_vec(),
    };
    let join = |s: StatePair| {
        let mut v = s.w;
        v.extend(s.z);
        v
    };
    let weights = grid.weights();
    let rhs: Vec<f64> = grad.w.iter().chain(&grad.z).map(|v| -v).collect();
    let out = gmres(
        |v| join(ctx.jacobian_apply(local, &split(v))),
        |v| join(ctx.sobolev_gradient(&split(v))),
        |a, b| {
            let mut acc = 0.0;
            for i in 0..n {
                acc += weights[i] * (a[i] * b[i] + a[n + i] * b[n + i]);
            }
            acc
        },
        &rhs,
        1e-11,
        80,
        800,
    );
    if out.relative_residual > 1e-3 {
        flags.push(format!(
            "Jacobian solve breakdown (relative residual {:.3e} after {} iterations); gradient step used",
            out.relative_residual, out.iterations
        ));
        return Ok(ctx.sobolev_gradient(grad).scaled(-1.0));
    }
    Ok(split(&out.solution))
}

/// Full solve: geometry probe, endpoint, path deformation, polish and the
/// positivity clean-up of the returned state.
pub fn solve(ctx: &FunctionalContext, config: &SolverConfig) -> Result<MPResult> {
    config.validate()?;
    let alpha = check_geometry(ctx, config.rho, config.geometry_samples, config.seed)?;
    let endpoint = construct_endpoint(ctx)?;
    let mut result = run_mountain_pass(ctx, &endpoint, config)?;
    result.alpha_estimate = alpha;
    if alpha <= 0.0 {
        result.flags.push(format!("non-positive barrier estimate alpha = {alpha:.3e} at rho = {}", config.rho));
    }

    if config.polish != PolishMethod::None && result.status != SolveStatus::Trivial {
        let floor = if alpha > 0.0 { 0.5 * alpha } else { 0.0 };
        let out = polish(ctx, &result.state, config, floor)?;
        let offset = result.trace.len();
        result.trace.extend(out.trace.into_iter().map(|mut t| {
            t.iteration += offset;
            t
        }));
        result.state = out.state;
        result.energy = out.energy;
        result.grad_norm = out.grad_norm;
        result.polish_iterations = out.iterations;
        result.flags.extend(out.flags);
        result.status = out.status;
    }

    // positivity: clamp negative overshoots
    let scale = result.state.max_abs();
    let mut significant = 0;
    let mut touched = false;
    for v in result.state.w.iter_mut().chain(result.state.z.iter_mut()) {
        if *v < 0.0 {
            if *v < -1e-10 * scale {
                significant += 1;
            }
            *v = 0.0;
            touched = true;
        }
    }
    result.clamped_nodes = significant;
    if significant > 0 {
        result.flags.push(format!("{significant} nodes clamped from negative values"));
    }
    if touched {
        result.energy = ctx.phi(&result.state)?;
        result.grad_norm = ctx.grad_norm(&result.state)?;
    }

    let ok = result.grad_norm <= config.grad_tolerance && result.energy >= alpha && alpha > 0.0;
    if result.status == SolveStatus::Converged && !ok {
        result.status = SolveStatus::NotConverged;
    }
    if result.status == SolveStatus::NotConverged && ok {
        result.status = SolveStatus::Converged;
    }
    if result.state.max_abs() == 0.0 {
        result.status = SolveStatus::Trivial;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Grid, PotentialSpec};
    use crate::nonlinearity::HomogeneousQ;
    use crate::penalization::{choose_a, PenalizedH, Region};
    use crate::transform::DualTransform;

    fn context(q: HomogeneousQ, n: usize) -> FunctionalContext {
        let grid = Grid::radial(3, 20.0, n).unwrap();
        let pot = PotentialSpec::constant(1.0);
        let a = choose_a(&HomogeneousQ::cubic_product(), 1.0, 1.0).unwrap();
        let h = PenalizedH::new_unchecked(q, a, Region::Ball { radius: 8.0 }, 1.0, 1.0).unwrap();
        FunctionalContext::new(grid, &pot, &pot, Coupling::Penalized(h), 1.0, DualTransform::default()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let even = SolverConfig { path_nodes: 10, ..Default::default() };
        assert!(even.validate().is_err());
        let short = SolverConfig { path_nodes: 7, ..Default::default() };
        assert!(short.validate().is_err());
        let step = SolverConfig { descent_step: 0.0, ..Default::default() };
        assert!(step.validate().is_err());
    }

    #[test]
    fn zero_coupling_has_no_endpoint() {
        let ctx = context(HomogeneousQ::zero(6.0), 120);
        assert!(matches!(construct_endpoint(&ctx), Err(Error::Geometry(_))));
    }

    #[test]
    fn endpoint_scale_weakly_decreases_with_coefficient() {
        let q = HomogeneousQ::cubic_product();
        let base = construct_endpoint(&context(q.clone(), 120)).unwrap();
        let strong = construct_endpoint(&context(q.scaled(10.0), 120)).unwrap();
        assert!(base.energy < -1.0 && strong.energy < -1.0);
        assert!(strong.scale <= base.scale);
    }

    #[test]
    fn barrier_shrinks_with_rho() {
        let ctx = context(HomogeneousQ::cubic_product(), 120);
        let big = check_geometry(&ctx, 1.0, 8, 3).unwrap();
        let small = check_geometry(&ctx, 1e-3, 8, 3).unwrap();
        assert!(big > 0.0);
        assert!(small > 0.0 && small < 1e-5);
        assert!(check_geometry(&ctx, 0.0, 8, 3).is_err());
    }

    #[test]
    fn polish_leaves_zero_and_converged_states_alone() {
        let ctx = context(HomogeneousQ::cubic_product(), 120);
        let zero = StatePair::zeros(ctx.grid().len());
        let out = polish(&ctx, &zero, &SolverConfig::default(), 0.0).unwrap();
        assert_eq!(out.status, SolveStatus::Trivial);
        assert!(!out.flags.is_empty());

        let solved = solve(&ctx, &SolverConfig::default()).unwrap();
        assert!(solved.converged());
        let again = polish(&ctx, &solved.state, &SolverConfig::default(), 0.0).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.state, solved.state);
    }

    #[test]
    fn coarse_benchmark_solve() {
        let ctx = context(HomogeneousQ::cubic_product(), 160);
        let config = SolverConfig::default();
        let out = solve(&ctx, &config).unwrap();
        assert!(out.converged(), "{:?}", out.flags);
        assert!(out.grad_norm <= config.grad_tolerance);
        assert!(out.energy >= out.alpha_estimate && out.alpha_estimate > 0.0);
        assert!(out.state.w.iter().chain(&out.state.z).all(|&x| x >= 0.0));
        for (w, z) in out.state.w.iter().zip(&out.state.z) {
            assert!((w - z).abs() <= 1e-6 * out.state.max_abs());
        }
        let repeat = solve(&ctx, &config).unwrap();
        assert_eq!(repeat.state, out.state);
        assert_eq!(repeat.energy.to_bits(), out.energy.to_bits());
    }

    #[test]
    fn critical_point_on_path_needs_no_moves() {
        let ctx = context(HomogeneousQ::cubic_product(), 120);
        let config = SolverConfig::default();
        let solved = solve(&ctx, &config).unwrap();
        assert!(solved.converged());
        // the fibre map t -> Phi(t S) peaks at t = 1 for a critical point S
        let top = 4.0;
        let nodes: Vec<StatePair> = (0..9).map(|j| solved.state.scaled(top * j as f64 / 8.0)).collect();
        let endpoint = Endpoint {
            state: nodes[8].clone(),
            scale: top,
            energy: ctx.phi(&nodes[8]).unwrap(),
            psi: ctx.psi(&nodes[8]).unwrap(),
        };
        assert!(endpoint.energy < 0.0);
        let loose = SolverConfig { polish: PolishMethod::None, grad_tolerance: 1e-8, ..config };
        let out = run_from_path(&ctx, nodes, &endpoint, &loose).unwrap();
        assert!(out.converged());
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn polish_sharpens_a_rough_candidate() {
        let ctx = context(HomogeneousQ::cubic_product(), 160);
        let endpoint = construct_endpoint(&ctx).unwrap();
        let rough = SolverConfig {
            polish: PolishMethod::None,
            grad_tolerance: 1e-3,
            ..Default::default()
        };
        let candidate = run_mountain_pass(&ctx, &endpoint, &rough).unwrap();
        assert!(candidate.converged());
        for method in [PolishMethod::DampedNewton, PolishMethod::NonlinearCg] {
            let config = SolverConfig { polish: method, ..Default::default() };
            let out = polish(&ctx, &candidate.state, &config, 0.0).unwrap();
            assert!(
                out.grad_norm <= 1e-2 * candidate.grad_norm || out.status == SolveStatus::Stagnated,
                "{method:?}: {}",
                out.grad_norm
            );
            if method == PolishMethod::DampedNewton {
                assert!(out.grad_norm <= 1e-8);
            }
        }
    }

    #[test]
    fn energy_insensitive_to_path_resolution() {
        let ctx = context(HomogeneousQ::cubic_product(), 120);
        let coarse = solve(&ctx, &SolverConfig { path_nodes: 17, ..Default::default() }).unwrap();
        let fine = solve(&ctx, &SolverConfig { path_nodes: 33, ..Default::default() }).unwrap();
        assert!(coarse.converged() && fine.converged());
        assert!((coarse.energy - fine.energy).abs() <= 1e-3 * coarse.energy);
    }
}
