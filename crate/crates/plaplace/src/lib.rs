//! Barriers, certification and nested-annulus simulation for the
//! evolutionary p-Laplace equation `v_t = Δ_p v + ξ'(t)·∇v` posed in the
//! frame moving along a prescribed curve ξ(t).
//!
//! The crate builds explicit piecewise power-law super- and subsolutions
//! around a gradient singularity at the origin, certifies the inequalities
//! they must satisfy by dense residual sampling, runs an implicit
//! minimizing-movement solver on exhausting annuli with barrier boundary
//! data, and checks the resulting sandwich, growth exponents and gradient
//! blow-up on the output.
//!
//! Grid sweeps are data-parallel via rayon when the `parallel` feature
//! (default) is enabled; disabling it yields a sequential build with
//! identical results.

pub mod analysis;
pub mod barriers;
pub mod config;
pub mod curve;
pub mod params;
pub mod pipeline;
pub mod report;
pub mod sample;
pub mod solver;

pub(crate) mod par;

pub use barriers::{certify, BarrierSide, CertificationReport};
pub use curve::Trajectory;
pub use params::{BarrierParams, ExponentConfig, ValidatedConfig};
pub use sample::SampleGrid;
