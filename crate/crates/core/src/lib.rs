//! Edge-cloud collaborative text-to-image orchestration.
//!
//! A small edge model renders previews while the user refines a prompt; the
//! confirmed prompt and the last draft go to a larger cloud model for one
//! refinement pass. Learned predictors pick the img2img strength for each
//! edit, which in turn fixes how many denoising steps run.

pub mod backend;
pub mod domain;
pub mod embedding;
pub mod error;
pub mod labeling;
pub mod netsim;
pub mod pipeline;
pub mod predictor;
pub mod replay;
pub mod scheduler;

pub use domain::{
    clip_strength, transition, CandidateSet, EventKind, ImageRef, LatencyBreakdown, Phase,
    RoundRecord, SessionEvent, SessionState, Strength, Tier,
};
pub use error::{Error, Result};
