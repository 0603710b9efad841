//! Solver and verification toolkit for positive standing waves of a coupled
//! quasilinear Schrodinger system
//!
//! ```text
//! -Delta u + W(eps x) u - Delta(u^2) u = Q_u(u, v)
//! -Delta v + V(eps x) v - Delta(v^2) v = Q_v(u, v),    u, v > 0.
//! ```
//!
//! The quasilinear terms are removed by the dual change of variable
//! `u = f(w)`, `v = f(z)` ([`transform`]); the coupling is penalized outside
//! a bounded region ([`penalization`]); the resulting energy
//! ([`functional`]) is discretized on radial or box grids
//! ([`discretization`]) and its mountain-pass critical point is located by
//! path deformation plus Newton polish ([`mountain_pass`]). [`verify`] maps
//! solutions back and checks them against the original system.

pub mod discretization;
pub mod error;
pub mod functional;
mod krylov;
pub mod mountain_pass;
pub mod nonlinearity;
pub mod penalization;
pub mod transform;
pub mod verify;

pub use discretization::{Grid, PotentialKind, PotentialSpec, StatePair};
pub use error::{Error, Result};
pub use functional::{Coupling, FunctionalContext};
pub use mountain_pass::{MPResult, PolishMethod, SolveStatus, SolverConfig};
pub use nonlinearity::{HomogeneousQ, MixedTerm};
pub use penalization::{CutoffEta, PenalizedH, Region};
pub use transform::DualTransform;
pub use verify::{VerificationReport, VerifyConfig};
