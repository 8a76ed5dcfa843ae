//! Experiment harness behind the `dubber` command line.

pub mod cli;
pub mod gradcheck;
pub mod sweep;

pub use gradcheck::{pipeline_grad_check, PipelineCheck};
pub use sweep::{
    evaluate_purity, per_cluster_speakers, sweep_metric, sweep_scale, sweep_topk, write_metric_csv, write_scale_csv,
    write_topk_csv, MetricRow, PurityStats, ScaleRow, SweepConfig, TopKRow,
};
