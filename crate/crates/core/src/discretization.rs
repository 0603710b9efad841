//! Finite-difference grids, quadrature and the quadratic forms built on them.
//!
//! Both grid kinds are described by node measures (quadrature weights) and a
//! list of faces joining neighbouring nodes. For a face `(i, j)` with
//! coefficient `c`, the Dirichlet integral is `int |grad w|^2 = sum c (w_j - w_i)^2`,
//! and the discrete Laplacian is the node-wise derivative of that sum divided
//! by the node measure. The strong-form operators and the discrete energies
//! therefore share one stencil, so gradients assembled from the strong form
//! are the exact derivatives of the discrete energy under the weighted
//! pairing `<a, b> = sum weight_i a_i b_i`.
//!
//! Radial grids use finite-volume cells `[r_i - h/2, r_i + h/2]` (clipped to
//! `[0, R]`), which reproduces `w'' + (N-1)/r w'` to second order and builds
//! the symmetry condition `w'(0) = 0` into the first cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::DualTransform;

/// Surface area of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => std::f64::consts::TAU,
        _ => std::f64::consts::TAU / (n as f64 - 2.0) * unit_sphere_area(n - 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub i: usize,
    pub j: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dimension: usize,
    radius: f64,
    spacing: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    faces: Vec<Face>,
}

impl RadialGrid {
    pub fn new(dimension: usize, radius: f64, node_count: usize) -> Result<Self> {
        if dimension < 3 {
            return Err(Error::invalid("radial grids need dimension N >= 3"));
        }
        if node_count < 64 {
            return Err(Error::invalid("radial grids need at least 64 nodes"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("truncation radius must be positive"));
        }
        let n = node_count;
        let h = radius / (n - 1) as f64;
        let omega = unit_sphere_area(dimension);
        let dim = dimension as f64;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let edge = |i: usize| -> f64 {
            // r_{i - 1/2}, clipped to [0, R]
            if i == 0 {
                0.0
            } else if i == n {
                radius
            } else {
                (i as f64 - 0.5) * h
            }
        };
        let weights = (0..n)
            .map(|i| omega * (edge(i + 1).powf(dim) - edge(i).powf(dim)) / dim)
            .collect();
        let faces = (0..n - 1)
            .map(|i| Face {
                i,
                j: i + 1,
                coeff: omega * ((i as f64 + 0.5) * h).powf(dim - 1.0) / h,
            })
            .collect();
        Ok(Self {
            dimension,
            radius,
            spacing: h,
            nodes,
            weights,
            faces,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    dimension: usize,
    half_width: f64,
    resolution: usize,
    spacing: f64,
    weights: Vec<f64>,
    faces: Vec<Face>,
    boundary: Vec<bool>,
}

impl BoxGrid {
    pub fn new(dimension: usize, half_width: f64, resolution: usize) -> Result<Self> {
        if !(dimension == 2 || dimension == 3) {
            return Err(Error::invalid("box grids support d = 2 or 3"));
        }
        if resolution < 24 {
            return Err(Error::invalid("box grids need at least 24 nodes per axis"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("box half width must be positive"));
        }
        let m = resolution;
        let h = 2.0 * half_width / (m - 1) as f64;
        let total = m.pow(dimension as u32);
        let coeff = h.powi(dimension as i32 - 2);
        let mut weights = Vec::with_capacity(total);
        let mut boundary = Vec::with_capacity(total);
        let mut faces = Vec::with_capacity(total * dimension);
        let mut idx = vec![0usize; dimension];
        for node in 0..total {
            decompose(node, m, &mut idx);
            let mut w = h.powi(dimension as i32);
            let mut on_edge = false;
            for &k in &idx {
                if k == 0 || k == m - 1 {
                    w *= 0.5;
                    on_edge = true;
                }
            }
            weights.push(w);
            boundary.push(on_edge);
            let mut stride = 1;
            for &k in idx.iter().rev() {
                if k + 1 < m {
                    faces.push(Face {
                        i: node,
                        j: node + stride,
                        coeff,
                    });
                }
                stride *= m;
            }
        }
        Ok(Self {
            dimension,
            half_width,
            resolution,
            spacing: h,
            weights,
            faces,
            boundary,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }
}

// row-major multi-index, last axis fastest
fn decompose(mut node: usize, m: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = node % m;
        node /= m;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Radial(RadialGrid),
    Box(BoxGrid),
}

impl Grid {
    pub fn radial(dimension: usize, radius: f64, node_count: usize) -> Result<Self> {
        RadialGrid::new(dimension, radius, node_count).map(Grid::Radial)
    }

    pub fn cube(dimension: usize, half_width: f64, resolution: usize) -> Result<Self> {
        BoxGrid::new(dimension, half_width, resolution).map(Grid::Box)
    }

    pub fn len(&self) -> usize {
        self.weights().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> usize {
        match self {
            Grid::Radial(g) => g.dimension,
            Grid::Box(g) => g.dimension,
        }
    }

    pub fn spacing(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.spacing,
            Grid::Box(g) => g.spacing,
        }
    }

    /// Largest `|x|` guaranteed to be covered in every direction.
    pub fn extent(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.radius,
            Grid::Box(g) => g.half_width,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Grid::Radial(g) => &g.weights,
            Grid::Box(g) => &g.weights,
        }
    }

    pub fn faces(&self) -> &[Face] {
        match self {
            Grid::Radial(g) => &g.faces,
            Grid::Box(g) => &g.faces,
        }
    }

    /// Nodes carrying the homogeneous Dirichlet condition.
    pub fn is_boundary(&self, i: usize) -> bool {
        match self {
            Grid::Radial(g) => i == g.nodes.len() - 1,
            Grid::Box(g) => g.boundary[i],
        }
    }

    pub fn node_radius(&self, i: usize) -> f64 {
        match self {
            Grid::Radial(g) => g.nodes[i],
            Grid::Box(_) => {
                let mut x = [0.0; 3];
                let d = self.dimension();
                self.node_position(i, &mut x[..d]);
                x[..d].iter().map(|c| c * c).sum::<f64>().sqrt()
            }
        }
    }

    /// Coordinates of node `i`; radial nodes sit on the first axis.
    pub fn node_position(&self, i: usize, out: &mut [f64]) {
        match self {
            Grid::Radial(g) => {
                out.iter_mut().for_each(|c| *c = 0.0);
                out[0] = g.nodes[i];
            }
            Grid::Box(g) => {
                let mut idx = [0usize; 3];
                decompose(i, g.resolution, &mut idx[..g.dimension]);
                for (c, &k) in out.iter_mut().zip(idx.iter()) {
                    *c = -g.half_width + k as f64 * g.spacing;
                }
            }
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node_radius(i)).collect()
    }

    pub fn check(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                found: field.len(),
            });
        }
        Ok(())
    }

    pub fn integrate(&self, field: &[f64]) -> Result<f64> {
        self.check(field)?;
        Ok(self.weights().iter().zip(field).map(|(w, v)| w * v).sum())
    }

    /// Weighted pairing `sum weight_i a_i b_i`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights()
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// `int grad a . grad b` from face differences.
    pub fn gradient_pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        self.faces()
            .iter()
            .map(|f| f.coeff * (a[f.j] - a[f.i]) * (b[f.j] - b[f.i]))
            .sum()
    }

    pub fn dirichlet_energy(&self, field: &[f64]) -> f64 {
        self.gradient_pairing(field, field)
    }

    /// Adds the stiffness product `K w` (derivative of half the Dirichlet integral) into `out`.
    pub fn add_stiffness(&self, field: &[f64], out: &mut [f64]) {
        for f in self.faces() {
            let flux = f.coeff * (field[f.j] - field[f.i]);
            out[f.i] -= flux;
            out[f.j] += flux;
        }
    }

    /// Discrete Laplacian; boundary nodes report zero.
    pub fn laplacian(&self, field: &[f64]) -> Result<Vec<f64>> {
        self.check(field)?;
        let mut out = vec![0.0; self.len()];
        self.add_stiffness(field, &mut out);
        for (i, (o, w)) in out.iter_mut().zip(self.weights()).enumerate() {
            *o = if self.is_boundary(i) { 0.0 } else { -*o / w };
        }
        Ok(out)
    }

    /// Solves `-Delta d + shift d = rhs` with `d = 0` on the boundary.
    ///
    /// `shift` must be positive. Radial grids use a tridiagonal sweep, box
    /// grids Jacobi-preconditioned conjugate gradients.
    pub fn solve_shifted(&self, shift: &[f64], rhs: &[f64]) -> Vec<f64> {
        match self {
            Grid::Radial(g) => solve_radial_shifted(g, shift, rhs),
            Grid::Box(_) => self.solve_shifted_cg(shift, rhs),
        }
    }

    fn solve_shifted_cg(&self, shift: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let weights = self.weights();
        let mut diag = vec![0.0; n];
        for f in self.faces() {
            diag[f.i] += f.coeff;
            diag[f.j] += f.coeff;
        }
        let interior: Vec<bool> = (0..n).map(|i| !self.is_boundary(i)).collect();
        for i in 0..n {
            diag[i] += weights[i] * shift[i];
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0);
            self.add_stiffness(x, out);
            for i in 0..n {
                out[i] = if interior[i] { out[i] + weights[i] * shift[i] * x[i] } else { 0.0 };
            }
        };
        let b: Vec<f64> = (0..n)
            .map(|i| if interior[i] { weights[i] * rhs[i] } else { 0.0 })
            .collect();
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return x;
        }
        for _ in 0..10 * n {
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r_norm <= 1e-14 * b_norm {
                break;
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

// Thomas algorithm on the symmetric tridiagonal system K + diag(weight * shift).
fn solve_radial_shifted(g: &RadialGrid, shift: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = g.nodes.len();
    let m = n - 1; // unknowns 0..m, node m is pinned
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m];
    for (i, d) in diag.iter_mut().enumerate() {
        *d = g.weights[i] * shift[i];
    }
    for f in &g.faces {
        if f.i < m {
            diag[f.i] += f.coeff;
        }
        if f.j < m {
            diag[f.j] += f.coeff;
            off[f.i] = -f.coeff; // couples i and i + 1
        }
    }
    let mut c = vec![0.0; m];
    let mut d: Vec<f64> = (0..m).map(|i| g.weights[i] * rhs[i]).collect();
    c[0] = off[0] / diag[0];
    d[0] /= diag[0];
    for i in 1..m {
        let denom = diag[i] - off[i - 1] * c[i - 1];
        c[i] = if i + 1 < m { off[i] / denom } else { 0.0 };
        d[i] = (d[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Pair of dual-variable fields sharing one grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

impl StatePair {
    pub fn new(w: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if w.len() != z.len() {
            return Err(Error::GridMismatch {
                expected: w.len(),
                found: z.len(),
            });
        }
        Ok(Self { w, z })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            w: vec![0.0; n],
            z: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w: self.w.iter().map(|v| v * factor).collect(),
            z: self.z.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &StatePair) -> Self {
        Self {
            w: self.w.iter().zip(&other.w).map(|(a, b)| a + factor * b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a + factor * b).collect(),
        }
    }

    /// `(1 - theta) self + theta other`.
    pub fn lerp(&self, other: &StatePair, theta: f64) -> Self {
        Self {
            w: self.w.iter().zip(&other.w).map(|(a, b)| a + theta * (b - a)).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a + theta * (b - a)).collect(),
        }
    }

    pub fn dot(&self, grid: &Grid, other: &StatePair) -> f64 {
        grid.dot(&self.w, &other.w) + grid.dot(&self.z, &other.z)
    }

    /// Weighted L2 norm.
    pub fn norm(&self, grid: &Grid) -> f64 {
        self.dot(grid, self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().chain(&self.z).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        grid.check(&self.w)?;
        grid.check(&self.z)?;
        for (i, (a, b)) in self.w.iter().zip(&self.z).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::NonFinite(i));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Constant { value: f64 },
    /// `floor + 1 - exp(-|x|^2)`, non-degenerate on the sphere `|x| = lambda_radius`.
    Class2Bump { lambda_radius: f64 },
    /// Piecewise-linear profile in `|x|`, constant beyond the last radius.
    CustomTable { radii: Vec<f64>, values: Vec<f64> },
}

/// Radially symmetric potential `V(x)` bounded between `floor` and `ceiling`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialSpecRaw")]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub kind: PotentialKind,
    pub floor: f64,
    pub ceiling: f64,
}

#[derive(Deserialize)]
struct PotentialSpecRaw {
    #[serde(flatten)]
    kind: PotentialKind,
    floor: f64,
    ceiling: f64,
}

impl TryFrom<PotentialSpecRaw> for PotentialSpec {
    type Error = Error;

    fn try_from(raw: PotentialSpecRaw) -> Result<Self> {
        PotentialSpec::new(raw.kind, raw.floor, raw.ceiling)
    }
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, floor: f64, ceiling: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::invalid(format!("potential floor {floor} must be positive")));
        }
        if !(ceiling >= floor && ceiling.is_finite()) {
            return Err(Error::invalid(format!("potential ceiling {ceiling} below floor {floor}")));
        }
        let (lo, hi) = match &kind {
            PotentialKind::Constant { value } => (*value, *value),
            PotentialKind::Class2Bump { lambda_radius } => {
                if !(*lambda_radius > 0.0) {
                    return Err(Error::invalid("class-2 region radius must be positive"));
                }
                (floor, floor + 1.0)
            }
            PotentialKind::CustomTable { radii, values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return Err(Error::invalid("potential table needs matching, non-empty columns"));
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 0.0 {
                    return Err(Error::invalid("potential table radii must increase from >= 0"));
                }
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        };
        if !(lo >= floor && hi <= ceiling) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "potential range [{lo}, {hi}] escapes [{floor}, {ceiling}]"
            )));
        }
        Ok(Self { kind, floor, ceiling })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(PotentialKind::Constant { value }, value, value).expect("positive constant")
    }

    pub fn class2_bump(floor: f64) -> Result<Self> {
        Self::new(PotentialKind::Class2Bump { lambda_radius: 1.0 }, floor, floor + 1.0)
    }

    pub fn value(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Constant { value } => *value,
            PotentialKind::Class2Bump { .. } => self.floor + 1.0 - (-r * r).exp(),
            PotentialKind::CustomTable { radii, values } => {
                if r <= radii[0] {
                    return values[0];
                }
                match radii.iter().position(|&x| x >= r) {
                    None => *values.last().unwrap(),
                    Some(k) => {
                        let theta = (r - radii[k - 1]) / (radii[k] - radii[k - 1]);
                        values[k - 1] + theta * (values[k] - values[k - 1])
                    }
                }
            }
        }
    }

    /// `|grad V|` at radius `r`.
    pub fn gradient_norm(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Constant { .. } => 0.0,
            PotentialKind::Class2Bump { .. } => 2.0 * r * (-r * r).exp(),
            PotentialKind::CustomTable { .. } => {
                let h = 1e-6 * r.max(1.0);
                ((self.value(r + h) - self.value((r - h).max(0.0))) / (r + h - (r - h).max(0.0))).abs()
            }
        }
    }

    /// Boundary radius of the class-2 region, when present.
    pub fn lambda_radius(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::Class2Bump { lambda_radius } => Some(*lambda_radius),
            _ => None,
        }
    }

    /// `V(eps x_i)` at every node.
    pub fn sample(&self, grid: &Grid, epsilon: f64) -> Vec<f64> {
        (0..grid.len()).map(|i| self.value(epsilon * grid.node_radius(i))).collect()
    }
}

/// `int |grad w|^2 + |grad z|^2 + W w^2 + V z^2`.
pub fn x_norm_sq(grid: &Grid, state: &StatePair, w_field: &[f64], v_field: &[f64]) -> Result<f64> {
    state.check(grid)?;
    let mut total = grid.dirichlet_energy(&state.w) + grid.dirichlet_energy(&state.z);
    for (i, wt) in grid.weights().iter().enumerate() {
        total += wt * (w_field[i] * state.w[i] * state.w[i] + v_field[i] * state.z[i] * state.z[i]);
    }
    Ok(total)
}

/// `int |grad w|^2 + |grad z|^2 + W f(w)^2 + V f(z)^2`.
pub fn psi(
    grid: &Grid,
    transform: &DualTransform,
    state: &StatePair,
    w_field: &[f64],
    v_field: &[f64],
) -> Result<f64> {
    state.check(grid)?;
    let mut total = grid.dirichlet_energy(&state.w) + grid.dirichlet_energy(&state.z);
    for (i, wt) in grid.weights().iter().enumerate() {
        let fw = transform.f(state.w[i])?;
        let fz = transform.f(state.z[i])?;
        total += wt * (w_field[i] * fw * fw + v_field[i] * fz * fz);
    }
    Ok(total)
}
