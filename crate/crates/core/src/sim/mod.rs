//! Deterministic GPU machine model.

mod engine;
mod machine;
pub mod memory;
mod metrics;

pub use engine::{simulate, RESERVED_REGS};
pub use machine::{machine_presets, MachineConfig};
pub use memory::{bank_conflicts, coalesce, l2_filter, LruCache};
pub use metrics::{SimMetrics, CSV_HEADER};

use crate::config::AlgoConfig;
use crate::error::Result;
use crate::ir::lower::compile;
use crate::shape::ConvShape;

/// Per-kernel metrics of an algorithm's compiled kernels plus their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineMetrics {
    pub kernels: Vec<(String, SimMetrics)>,
    pub total: SimMetrics,
}

/// Lowers, pipelines and simulates every kernel of `cfg` on `shape`.
pub fn simulate_config(
    cfg: &AlgoConfig,
    shape: &ConvShape,
    m: &MachineConfig,
    resident_images: usize,
) -> Result<PipelineMetrics> {
    let lowered = compile(cfg, shape)?;
    let mut kernels = Vec::new();
    for k in &lowered.kernels {
        kernels.push((k.name.clone(), simulate(k, m, resident_images)?));
    }
    let total = SimMetrics::sequence(&kernels.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>());
    Ok(PipelineMetrics { kernels, total })
}
