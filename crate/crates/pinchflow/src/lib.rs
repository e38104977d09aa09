//! Curvature-pinching analysis and contraction flows for convex
//! hypersurfaces.
//!
//! The crate has three layers:
//!
//! * pointwise algebra of symmetric curvature functions ([`symfunc`]) and
//!   speed-rescaling profiles ([`phi`]);
//! * certified inequality checks and pinching thresholds ([`pinch`]);
//! * dynamics: the scalar radius equation on shrinking spheres
//!   ([`sphere_ode`]) and an axially symmetric support-function flow
//!   ([`flow`]).
//!
//! Everything downstream of a seed is deterministic, and the CLI writes
//! byte-identical artifacts for identical inputs.

pub mod cli;
pub mod error;
pub mod flow;
pub mod phi;
pub mod pinch;
pub mod report;
pub mod sphere_ode;
pub mod symfunc;

mod smallmat;

pub use error::{Error, Result};
