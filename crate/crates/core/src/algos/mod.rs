//! Host-side implementations of the five GPU convolution strategies.
//!
//! Every algorithm returns its output plus exact analytic operation and
//! traffic counts. Traffic counts are per-kernel stage and assume 4-byte
//! accesses with no caching beyond what the kernel itself does cooperatively
//! inside a workgroup: a value a workgroup stages once counts once for that
//! workgroup, a value every thread fetches separately counts once per thread.
//! Padding taps are predicated off and never count.

mod direct;
mod fused;
mod ilpm;
mod im2col;
mod winograd;

pub use direct::direct_conv;
pub use fused::fused_unroll_conv;
pub use ilpm::{ilpm_conv, ilpm_thread_work};
pub use im2col::{gemm, im2col_conv, im2col_unroll, UnrolledMatrix};
pub use winograd::{
    filter_transform_bank, winograd_conv, winograd_filter_transform, winograd_input_transform,
    winograd_output_transform, WinogradPlan,
};

use crate::config::{AlgoConfig, Algorithm};
use crate::error::Result;
use crate::oracle::oracle_conv;
use crate::shape::ConvShape;
use crate::tensor::{convert_layout, Layout, Tensor};

/// Analytic counts for one GPU kernel (or a batch of identical launches).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageCounts {
    pub name: String,
    /// Useful multiplies (FMA or MUL) on real data.
    pub multiplies: u64,
    /// Multiplies the kernel issues including lanes working on tile padding.
    pub padded_multiplies: u64,
    pub adds: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
    /// Elements whose gather address the kernel computes (unroll work).
    pub index_ops: u64,
    pub barriers_per_workgroup: u64,
    pub workgroups: u64,
}

impl StageCounts {
    fn new(name: &str) -> Self {
        StageCounts {
            name: name.to_string(),
            multiplies: 0,
            padded_multiplies: 0,
            adds: 0,
            read_bytes: 0,
            write_bytes: 0,
            index_ops: 0,
            barriers_per_workgroup: 0,
            workgroups: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub multiplies: u64,
    pub padded_multiplies: u64,
    pub adds: u64,
    pub global_read_bytes_analytic: u64,
    pub global_write_bytes_analytic: u64,
    pub stages: Vec<StageCounts>,
}

impl Counts {
    pub fn from_stages(stages: Vec<StageCounts>) -> Self {
        Counts {
            multiplies: stages.iter().map(|s| s.multiplies).sum(),
            padded_multiplies: stages.iter().map(|s| s.padded_multiplies).sum(),
            adds: stages.iter().map(|s| s.adds).sum(),
            global_read_bytes_analytic: stages.iter().map(|s| s.read_bytes).sum(),
            global_write_bytes_analytic: stages.iter().map(|s| s.write_bytes).sum(),
            stages,
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageCounts> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoResult {
    pub output: Tensor,
    pub counts: Counts,
}

/// Runs `cfg` on a KCRS filter bank, converting the layout where the
/// algorithm wants a different one.
pub fn run(
    cfg: &AlgoConfig,
    input: &Tensor,
    filters: &Tensor,
    shape: &ConvShape,
) -> Result<AlgoResult> {
    match cfg.algorithm {
        Algorithm::Oracle => {
            let o = oracle_conv(input, filters, shape)?;
            let mut st = StageCounts::new("oracle");
            st.multiplies = o.mac_count;
            st.padded_multiplies = o.mac_count;
            Ok(AlgoResult {
                output: o.output,
                counts: Counts::from_stages(vec![st]),
            })
        }
        Algorithm::Im2col => im2col_conv(input, filters, shape, cfg),
        Algorithm::FusedUnroll => fused_unroll_conv(input, filters, shape, cfg),
        Algorithm::Winograd => winograd_conv(input, filters, shape, cfg),
        Algorithm::Direct => direct_conv(input, filters, shape, cfg),
        Algorithm::Ilpm => ilpm_conv(input, &convert_layout(filters, Layout::Crsk)?, shape, cfg),
    }
}

/// Analytic counts only; no tensors touched. Agrees with the counts the
/// host implementations return.
pub fn analytic_counts(cfg: &AlgoConfig, shape: &ConvShape) -> Result<Counts> {
    cfg.validate(shape)?;
    Ok(match cfg.algorithm {
        Algorithm::Oracle => {
            let mut st = StageCounts::new("oracle");
            st.multiplies = shape.macs();
            st.padded_multiplies = shape.macs();
            Counts::from_stages(vec![st])
        }
        Algorithm::Im2col => im2col::counts(shape, cfg),
        Algorithm::FusedUnroll => fused::counts(shape, cfg),
        Algorithm::Winograd => winograd::counts(shape, cfg),
        Algorithm::Direct => direct::counts(shape, cfg),
        Algorithm::Ilpm => ilpm::counts(shape, cfg),
    })
}

pub(crate) fn round_up(n: usize, t: usize) -> usize {
    n.div_ceil(t) * t
}

/// Input rows (or columns) a run of `out_len` outputs starting at `out_start`
/// touches, clipped to the real input.
pub(crate) fn window_in_bounds(
    size: usize,
    out_start: usize,
    out_len: usize,
    filter: usize,
    pad: usize,
    stride: usize,
) -> usize {
    let lo = (out_start * stride) as isize - pad as isize;
    let hi = ((out_start + out_len - 1) * stride + filter) as isize - pad as isize; // exclusive
    (hi.min(size as isize) - lo.max(0)).max(0) as usize
}

/// Sum over all `tile_x x tile_y` output tiles of the in-bounds input window
/// each tile needs, per channel.
pub(crate) fn halo_footprint(shape: &ConvShape, tile_x: usize, tile_y: usize) -> u64 {
    let (oh, ow) = shape.out_hw();
    let rows: usize = (0..oh.div_ceil(tile_y))
        .map(|t| {
            window_in_bounds(
                shape.height,
                t * tile_y,
                tile_y.min(oh - t * tile_y),
                shape.filter_h,
                shape.pad,
                shape.stride,
            )
        })
        .sum();
    let cols: usize = (0..ow.div_ceil(tile_x))
        .map(|t| {
            window_in_bounds(
                shape.width,
                t * tile_x,
                tile_x.min(ow - t * tile_x),
                shape.filter_w,
                shape.pad,
                shape.stride,
            )
        })
        .sum();
    (rows * cols) as u64
}

/// Distinct input bytes touched by the convolution as a whole.
pub(crate) fn input_footprint_bytes(shape: &ConvShape) -> u64 {
    let (oh, ow) = shape.out_hw();
    halo_footprint(shape, ow, oh) * shape.in_channels as u64 * 4
}
