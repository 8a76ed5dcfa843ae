//! Basic, indirect and direct emotion graphs and their attention encoder.

pub mod gae;
pub mod progressive;
pub mod types;

pub use gae::{gae_encode, Activation, GaeConfig, GaeHead, GaeParams};
pub use progressive::{
    build_basic_graph, extend_direct, extend_indirect, progressive_encode, project_inputs, project_rows, BasicEmotion,
    InputProjections, ProgressiveConfig, ProgressiveEncoder, ProgressiveOutput,
};
pub use types::{EdgeKind, EmotionGraph, GraphEdge, GraphNode, NodeKind, NodeTier, Stage, Topology};
