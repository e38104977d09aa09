//! Contraction flow of convex axisymmetric hypersurfaces.
//!
//! A body of revolution is parameterized by its support function over the
//! Gauss sphere, which turns the normal-speed evolution into the scalar
//! update ds/dt = -Phi(F) on a fixed colatitude grid: no mesh motion, no
//! tangential reparameterization, and convexity is exactly the positivity
//! of the two principal radii computed from s.
//!
//! [`profile`] holds the discretization (grids, stencils, curvatures,
//! shape files); [`sim`] holds the explicit stepper, the monitored
//! diagnostics, and the post-run self-similarity report.

mod profile;
mod sim;

pub use profile::{SupportProfile, MIN_GRID};
pub use sim::{
    run, self_similarity_report, stability_bound, step, Diagnostics, FlowConfig, FlowRun,
    FlowState, PsiRecord, RunSummary, SelfSimilarityReport, SelfSimilarityRow, StepRecord,
    CFL_SAFETY, DEFAULT_EXTINCTION_FRACTION, PSI_SAMPLE_REL_DROP, RECORD_PSI_RATIO,
    SS_SPACING_CUTOFF_REL,
};
