use crate::error::Result;
use crate::footage::Schema;
use crate::head::{toy_fixture, DubberModel, FixtureConfig, ModelConfig};
use crate::tensor::{grad_check, GradCheckConfig, GradCheckReport};

/// Shape of a full-pipeline gradient check: projections, three encode
/// stages, the aggregation stack, the mel head and the MSE loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineCheck {
    pub seed: u64,
    pub d_h: usize,
    pub len: usize,
    pub k: usize,
    pub n_mel: usize,
    pub schema_dim: u32,
}

impl Default for PipelineCheck {
    fn default() -> Self {
        PipelineCheck { seed: 0, d_h: 8, len: 5, k: 2, n_mel: 4, schema_dim: 3 }
    }
}

pub fn pipeline_grad_check(spec: &PipelineCheck, cfg: GradCheckConfig) -> Result<GradCheckReport> {
    let schema = Schema::uniform(spec.schema_dim)?;
    let model = DubberModel::new(ModelConfig { n_mel: spec.n_mel, ..ModelConfig::new(schema, spec.d_h) }, spec.seed)?;
    let fx = toy_fixture(&FixtureConfig::new(spec.seed, spec.len, spec.k, schema), spec.d_h, spec.n_mel)?;
    grad_check(&model.store, cfg, |tape| Ok(model.loss(tape, &fx.batch)?.1))
}
