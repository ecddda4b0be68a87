//! Numerical toolkit for multi-spike solutions of the planar Lane-Emden
//! problem `-Δu = u^p` in a star-shaped domain with Dirichlet data.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`]: star-shaped planar domains, Dirichlet Green function,
//!   regular part and Robin function (closed forms on the disc, Nyström
//!   boundary integrals otherwise), plus a harmonic extension kernel.
//! * [`profiles`]: the Liouville bubble `U` and the radial correction
//!   profiles `w0`, `w1`, their far-field constants and moment integrals.
//! * [`kirchhoff`]: the Kirchhoff-Routh function, its critical points,
//!   Morse data, the scaled-Hessian spectrum and the degree sign.
//! * [`construct`]: the scaling-parameter system, the projected approximate
//!   solution and closed-form predictions.
//! * [`pde`]: meshing, the finite-element Newton solve, the linearized
//!   spectrum and local integral identities.
//! * [`pipeline`]: configuration-driven runs and machine-readable reports.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

// `!(x > a)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod construct;
pub mod domain;
pub mod error;
pub mod exec;
pub mod kirchhoff;
pub mod linalg;
pub mod pde;
pub mod pipeline;
pub mod profiles;
pub mod quadrature;

pub use error::{Error, Result};

/// Planar point or vector.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2×2 matrix (second-derivative blocks).
pub type Mat2 = nalgebra::Matrix2<f64>;
