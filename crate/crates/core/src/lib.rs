//! Emotion-retrieval augmented dubbing pipeline.
//!
//! * [`footage`]: the multimodal reference footage library (scene, face,
//!   text-self, text-react and audio emotion vectors per reference clip).
//! * [`retrieval`]: per-modality top-K emotion similarity search with
//!   matched audio lookup.
//! * [`tensor`]: a small reverse-mode differentiation core.
//! * [`graph`]: the three-stage emotion graph (basic, indirect, direct) and
//!   its graph-attention encoder.
//! * [`head`]: cross-attention aggregation, the mel head and the toy
//!   regression model.
//! * [`harness`]: retrieval-purity sweeps, the pipeline gradient check and
//!   the `dubber` CLI.

pub mod error;
pub mod footage;
pub mod graph;
pub mod harness;
pub mod head;
pub mod retrieval;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
