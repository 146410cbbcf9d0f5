//! HTTP service around `vst-core`: accepts recordings, runs the analysis and
//! plan-generation pipeline in the background, and gates plans behind
//! clinician review.

pub mod api;
pub mod config;
pub mod export;
pub mod remote;
pub mod results;
pub mod service;
pub mod session;
pub mod store;

pub use config::Config;
pub use service::{Backends, Service, ServiceError, Settings, SubmissionMeta};
pub use session::{Lifecycle, Mode, Stage};
