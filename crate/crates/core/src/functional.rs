//! Discrete penalized energy
//!
//! ```text
//! Phi(w, z) = 1/2 int |grad w|^2 + |grad z|^2 + W(eps x) f(w)^2 + V(eps x) f(z)^2
//!             - int H(eps x, f(w), f(z))
//! ```
//!
//! and its gradient, represented node-wise against the weighted pairing of
//! the grid. With the raw coupling (`H = Q` everywhere) the same code
//! evaluates the unpenalized energy.

use serde::{Deserialize, Serialize};

use crate::discretization::{self, Grid, PotentialSpec, StatePair};
use crate::error::{Error, Result};
use crate::nonlinearity::HomogeneousQ;
use crate::penalization::PenalizedH;
use crate::transform::DualTransform;

/// Coupling term of the energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Coupling {
    Penalized(PenalizedH),
    /// `H = Q` on the whole space.
    Raw(HomogeneousQ),
}

impl Coupling {
    pub fn q(&self) -> &HomogeneousQ {
        match self {
            Coupling::Penalized(h) => h.q(),
            Coupling::Raw(q) => q,
        }
    }

    fn value(&self, inside: bool, s: f64, t: f64) -> f64 {
        match self {
            Coupling::Penalized(h) => h.value_at(inside, s, t),
            Coupling::Raw(q) => q.value(s, t),
        }
    }

    fn grad(&self, inside: bool, s: f64, t: f64) -> (f64, f64) {
        match self {
            Coupling::Penalized(h) => h.grad_at(inside, s, t),
            Coupling::Raw(q) => q.grad(s, t),
        }
    }

    // Central differences of the gradient: (H_ss, H_st, H_tt).
    fn hessian(&self, inside: bool, s: f64, t: f64) -> (f64, f64, f64) {
        let hs = 1e-6 * s.abs().max(1e-3);
        let ht = 1e-6 * t.abs().max(1e-3);
        let (sp, tp) = self.grad(inside, s + hs, t);
        let (sm, tm) = self.grad(inside, s - hs, t);
        let (sq, tq) = self.grad(inside, s, t + ht);
        let (sn, tn) = self.grad(inside, s, t - ht);
        let hss = (sp - sm) / (2.0 * hs);
        let htt = (tq - tn) / (2.0 * ht);
        let hst = 0.5 * ((tp - tm) / (2.0 * hs) + (sq - sn) / (2.0 * ht));
        (hss, hst, htt)
    }
}

/// Everything needed to evaluate the energy at one value of `eps`.
#[derive(Debug, Clone)]
pub struct FunctionalContext {
    grid: Grid,
    w_field: Vec<f64>,
    v_field: Vec<f64>,
    coupling: Coupling,
    epsilon: f64,
    transform: DualTransform,
    inside: Vec<bool>,
}

/// Local 2x2 Jacobian of the node terms.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LocalJacobian {
    pub ww: f64,
    pub wz: f64,
    pub zw: f64,
    pub zz: f64,
}

impl FunctionalContext {
    pub fn new(
        grid: Grid,
        w_potential: &PotentialSpec,
        v_potential: &PotentialSpec,
        coupling: Coupling,
        epsilon: f64,
        transform: DualTransform,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::invalid(format!("epsilon = {epsilon} must lie in (0, 1]")));
        }
        let w_field = w_potential.sample(&grid, epsilon);
        let v_field = v_potential.sample(&grid, epsilon);
        let dim = grid.dimension();
        let mut x = vec![0.0; dim];
        let inside = (0..grid.len())
            .map(|i| match &coupling {
                Coupling::Raw(_) => true,
                Coupling::Penalized(h) => {
                    grid.node_position(i, &mut x);
                    x.iter_mut().for_each(|c| *c *= epsilon);
                    h.omega().contains(&x)
                }
            })
            .collect();
        Ok(Self {
            grid,
            w_field,
            v_field,
            coupling,
            epsilon,
            transform,
            inside,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn w_field(&self) -> &[f64] {
        &self.w_field
    }

    pub fn v_field(&self) -> &[f64] {
        &self.v_field
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn transform(&self) -> &DualTransform {
        &self.transform
    }

    /// The quasilinear coefficient; the dual transform is built for this value only.
    pub fn kappa(&self) -> f64 {
        1.0
    }

    /// Whether node `i` lies in `Omega_eps`.
    pub fn inside(&self, i: usize) -> bool {
        self.inside[i]
    }

    pub fn phi(&self, state: &StatePair) -> Result<f64> {
        state.check(&self.grid)?;
        let g = &self.grid;
        let mut total = 0.5 * (g.dirichlet_energy(&state.w) + g.dirichlet_energy(&state.z));
        for (i, wt) in g.weights().iter().enumerate() {
            let fw = self.transform.f(state.w[i])?;
            let fz = self.transform.f(state.z[i])?;
            let density = 0.5 * (self.w_field[i] * fw * fw + self.v_field[i] * fz * fz)
                - self.coupling.value(self.inside[i], fw, fz);
            total += wt * density;
        }
        Ok(total)
    }

    /// Unpenalized energy; only defined for a context built with the raw coupling.
    pub fn i_eps(&self, state: &StatePair) -> Result<f64> {
        match self.coupling {
            Coupling::Raw(_) => self.phi(state),
            Coupling::Penalized(_) => Err(Error::invalid("i_eps needs a raw-coupling context")),
        }
    }

    /// Node-wise gradient `-Delta w + W f(w) f'(w) - H_s(f(w), f(z)) f'(w)`
    /// (and the `z` analogue), zero on Dirichlet nodes.
    pub fn phi_grad(&self, state: &StatePair) -> Result<StatePair> {
        state.check(&self.grid)?;
        let g = &self.grid;
        let n = g.len();
        let mut out = StatePair::zeros(n);
        g.add_stiffness(&state.w, &mut out.w);
        g.add_stiffness(&state.z, &mut out.z);
        for i in 0..n {
            if g.is_boundary(i) {
                out.w[i] = 0.0;
                out.z[i] = 0.0;
                continue;
            }
            let ew = self.transform.eval(state.w[i])?;
            let ez = self.transform.eval(state.z[i])?;
            let (hs, ht) = self.coupling.grad(self.inside[i], ew.value, ez.value);
            let wt = g.weights()[i];
            out.w[i] = out.w[i] / wt + (self.w_field[i] * ew.value - hs) * ew.prime;
            out.z[i] = out.z[i] / wt + (self.v_field[i] * ez.value - ht) * ez.prime;
        }
        Ok(out)
    }

    /// Strong-form residual of the penalized system; coincides with [`Self::phi_grad`].
    pub fn residual_aux(&self, state: &StatePair) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.phi_grad(state)?;
        Ok((g.w, g.z))
    }

    /// Weighted L2 norm of the gradient.
    pub fn grad_norm(&self, state: &StatePair) -> Result<f64> {
        Ok(self.phi_grad(state)?.norm(&self.grid))
    }

    pub fn psi(&self, state: &StatePair) -> Result<f64> {
        discretization::psi(&self.grid, &self.transform, state, &self.w_field, &self.v_field)
    }

    pub fn x_norm_sq(&self, state: &StatePair) -> Result<f64> {
        discretization::x_norm_sq(&self.grid, state, &self.w_field, &self.v_field)
    }

    pub(crate) fn local_jacobians(&self, state: &StatePair) -> Result<Vec<LocalJacobian>> {
        let n = self.grid.len();
        let mut out = vec![LocalJacobian::default(); n];
        for (i, jac) in out.iter_mut().enumerate() {
            if self.grid.is_boundary(i) {
                continue;
            }
            let ew = self.transform.eval(state.w[i])?;
            let ez = self.transform.eval(state.z[i])?;
            let inside = self.inside[i];
            let (hs, ht) = self.coupling.grad(inside, ew.value, ez.value);
            let (hss, hst, htt) = self.coupling.hessian(inside, ew.value, ez.value);
            let ffw = ew.prime * ew.prime + ew.value * ew.second;
            let ffz = ez.prime * ez.prime + ez.value * ez.second;
            jac.ww = self.w_field[i] * ffw - (hss * ew.prime * ew.prime + hs * ew.second);
            jac.zz = self.v_field[i] * ffz - (htt * ez.prime * ez.prime + ht * ez.second);
            jac.wz = -hst * ew.prime * ez.prime;
            jac.zw = jac.wz;
        }
        Ok(out)
    }

    /// Action of the gradient's Jacobian on `dir`, given precomputed local blocks.
    pub(crate) fn jacobian_apply(&self, local: &[LocalJacobian], dir: &StatePair) -> StatePair {
        let g = &self.grid;
        let n = g.len();
        let mut out = StatePair::zeros(n);
        g.add_stiffness(&dir.w, &mut out.w);
        g.add_stiffness(&dir.z, &mut out.z);
        for i in 0..n {
            if g.is_boundary(i) {
                out.w[i] = 0.0;
                out.z[i] = 0.0;
                continue;
            }
            let wt = g.weights()[i];
            let j = &local[i];
            out.w[i] = out.w[i] / wt + j.ww * dir.w[i] + j.wz * dir.z[i];
            out.z[i] = out.z[i] / wt + j.zw * dir.w[i] + j.zz * dir.z[i];
        }
        out
    }

    /// Riesz representative of the gradient in the `X` inner product,
    /// `(-Delta + W) d_w = g_w`, `(-Delta + V) d_z = g_z`.
    pub fn sobolev_gradient(&self, grad: &StatePair) -> StatePair {
        StatePair {
            w: self.grid.solve_shifted(&self.w_field, &grad.w),
            z: self.grid.solve_shifted(&self.v_field, &grad.z),
        }
    }
}

/// Exponent `(2N + 2p)/(N + 2)` in the lower bound of the energy on small spheres.
pub fn geometry_exponent(dimension: usize, p: f64) -> f64 {
    let n = dimension as f64;
    (2.0 * n + 2.0 * p) / (n + 2.0)
}
