//! Cartesian neural-network constitutive models (CaNNCM) for simulated
//! quasi-static elasticity imaging.
//!
//! The pipeline generates a target modulus field ([`phantom`]), solves a
//! plane-stress finite-element problem on a quadrilateral mesh ([`mesh`],
//! [`fem`]) to obtain stress/strain pairs, pretrains a material property
//! network ([`mpn`]), computes per-location strain scaling by gradient
//! descent ([`scaling`]), fits a spatial network to those scales
//! ([`spatial`]) and finally reconstructs and scores a Young's-modulus
//! image ([`recon`]). [`pipeline`] strings the stages together.

pub mod error;
pub mod fem;
pub mod grid;
pub mod mesh;
pub mod mlp;
pub mod mpn;
pub mod phantom;
pub mod pipeline;
pub mod recon;
pub mod scaling;
pub mod spatial;

pub use error::{Error, Result};

/// Three-component plane tensor in Voigt order `[11, 22, 12]`.
pub type Voigt = [f64; 3];
