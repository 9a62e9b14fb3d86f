//! Pseudo-spectral laboratory for the 2D incompressible MHD system with
//! velocity damping, posed as perturbations `(u, v, ψ)` of the equilibrium
//! `u = 0`, `φ = y`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod harness;
pub mod integrator;
pub mod kernels;
pub mod lp;
pub mod nonlinear;
pub mod snapshot;
pub mod spectral;
pub mod state;

pub use rustfft::num_complex::Complex64;
