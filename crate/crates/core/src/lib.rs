//! Core of a clinician-supervised stuttering therapy planner.
//!
//! The pipeline segments a recording into overlapping windows, classifies
//! each window, aggregates the results into an overall diagnosis, and then
//! drives a therapy agent and a critic agent through a fixed number of
//! refinement rounds. The resulting plan is gated by a clinician review state
//! machine before it can be released.

pub mod analysis;
pub mod backend;
pub mod llm;
pub mod model;
pub mod numeric;
pub mod orchestrator;
pub mod plan;
pub mod prompts;
pub mod review;
pub mod samples;
pub mod segmenter;
pub mod wav;

pub use backend::{BackendFailure, FailureKind};
pub use model::*;
pub use plan::*;

/// Window plan in seconds, double precision.
pub type WindowPlan = segmenter::WindowPlan<f64>;
/// Window plan in seconds, single precision.
pub type WindowPlanF32 = segmenter::WindowPlan<f32>;
/// Probability vector produced by [`llm::softmax_temperature`].
pub type Probabilities = Vec<f64>;
