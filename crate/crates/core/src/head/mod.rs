//! Aggregation of the encoded graphs into the aligned sequence, the toy mel
//! head and its training loop.

pub mod aggregate;
pub mod aligned;
pub mod mel;
pub mod model;

pub use aggregate::{aggregate, AggregateOutput, AggregationHead, HeadConfig};
pub use aligned::{stub_aligned_sequence, AlignedSequence};
pub use mel::{toy_mel_head, MelHead, DEFAULT_N_MEL};
pub use model::{
    toy_batch, toy_fixture, toy_train_step, train_toy, DubberModel, FixtureConfig, ForwardTrace, ModelConfig, ToyBatch,
    ToyFixture, TOY_D_H, TOY_K, TOY_LEN,
};
