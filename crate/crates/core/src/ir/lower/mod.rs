//! Lowering of algorithm configurations to kernel programs.

mod direct;
mod fused;
mod gemm;
mod ilpm;
mod im2col;
mod winograd;

use super::analysis::{schedule, COMPILER_PIPELINE_DEPTH};
use super::unroll::{unroll, UNROLL_BUDGET};
use super::{Affine, Buffer, Builder, Guard, KernelProgram, RegClass};
use crate::algos::WinogradPlan;
use crate::config::{AlgoConfig, Algorithm, MAX_WORKGROUP_THREADS};
use crate::error::{Error, Result};
use crate::shape::ConvShape;

/// Threads per side of the square workgroups used by the Winograd
/// transform kernels.
pub const TRANSFORM_WG: usize = 8;

/// The kernels an algorithm launches, in execution order. Kernel names
/// match the stage names of the analytic counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LoweredKernels {
    pub kernels: Vec<KernelProgram>,
}

impl LoweredKernels {
    pub fn get(&self, name: &str) -> Option<&KernelProgram> {
        self.kernels.iter().find(|k| k.name == name)
    }
}

/// Lowers `cfg` for `shape` into the kernel programs it launches.
pub fn lower(cfg: &AlgoConfig, shape: &ConvShape) -> Result<LoweredKernels> {
    cfg.validate(shape)?;
    let kernels = match cfg.algorithm {
        Algorithm::Oracle => {
            return Err(Error::Unsupported("the oracle has no kernel form".into()))
        }
        Algorithm::Im2col => vec![
            im2col::unroll_kernel(shape, cfg),
            im2col::gemm_kernel(shape, cfg),
        ],
        Algorithm::FusedUnroll => vec![fused::kernel(shape, cfg)],
        Algorithm::Winograd => winograd::kernels(shape, cfg)?,
        Algorithm::Direct => vec![direct::kernel(shape, cfg)],
        Algorithm::Ilpm => vec![ilpm::kernel(shape, cfg)],
    };
    for k in &kernels {
        if k.threads_per_workgroup() as usize > MAX_WORKGROUP_THREADS {
            return Err(Error::Config(format!(
                "{} needs {} threads per workgroup, limit is {MAX_WORKGROUP_THREADS}",
                k.name,
                k.threads_per_workgroup()
            )));
        }
    }
    Ok(LoweredKernels { kernels })
}

/// [`lower`] followed by bounded full unrolling and load pipelining at the
/// fixed compiler depth, the form the simulator runs.
pub fn compile(cfg: &AlgoConfig, shape: &ConvShape) -> Result<LoweredKernels> {
    let l = lower(cfg, shape)?;
    Ok(LoweredKernels {
        kernels: l
            .kernels
            .iter()
            .map(|k| schedule(&unroll(k, UNROLL_BUDGET), COMPILER_PIPELINE_DEPTH))
            .collect(),
    })
}

/// Workgroups of a Winograd transform kernel over `channels` planes.
pub fn transform_workgroups(plan: &WinogradPlan, channels: usize) -> u64 {
    (plan.tiles_x.div_ceil(TRANSFORM_WG) * plan.tiles_y.div_ceil(TRANSFORM_WG) * channels) as u64
}

/// A rectangular window of a row-major global plane, copied cooperatively
/// into shared memory by a 2-D workgroup.
pub(crate) struct Window {
    pub buf: Buffer,
    /// Element offset of the plane (channel base, batch base, ...).
    pub plane: Affine,
    /// Global row and column of the window's top-left element.
    pub row0: Affine,
    pub col0: Affine,
    pub plane_rows: i64,
    pub plane_cols: i64,
    /// Window extent.
    pub rows: usize,
    pub cols: usize,
    /// Shared-memory byte offset and row pitch in elements.
    pub shared_base: Affine,
    pub shared_pitch: usize,
}

/// Emits the cooperative copy of `w`: each thread moves elements
/// `(ty + i*dy, tx + j*dx)`. Elements outside the plane are predicated off
/// on the global side and land in shared memory as zeros.
pub(crate) fn coop_load(b: &mut Builder, dims: (usize, usize), w: &Window) {
    let (dx, dy) = dims;
    let row_iters = w.rows.div_ceil(dy);
    let col_iters = w.cols.div_ceil(dx);
    b.for_range(row_iters, |b, i| {
        b.for_range(col_iters, |b, j| {
            let lr = Affine::tid_y(1).plus(&i.clone().scale(dy as i64));
            let lc = Affine::tid_x(1).plus(&j.scale(dx as i64));
            let mut local = Vec::new();
            if !w.rows.is_multiple_of(dy) {
                local.push(Guard::below(lr.clone(), w.rows as i64));
            }
            if !w.cols.is_multiple_of(dx) {
                local.push(Guard::below(lc.clone(), w.cols as i64));
            }
            let grow = w.row0.clone().plus(&lr);
            let gcol = w.col0.clone().plus(&lc);
            let mut guards = local.clone();
            guards.push(Guard::below(grow.clone(), w.plane_rows));
            guards.push(Guard::below(gcol.clone(), w.plane_cols));
            b.ialu(false, 1);
            let addr = w
                .plane
                .clone()
                .plus(&grow.scale(w.plane_cols))
                .plus(&gcol)
                .scale(4);
            let x = b.ld_global(w.buf, addr, guards, RegClass::Temp);
            let saddr = w
                .shared_base
                .clone()
                .plus(&lr.scale(w.shared_pitch as i64 * 4))
                .plus(&lc.scale(4));
            b.st_shared(x, saddr, local);
        });
    });
}

/// Cooperative copy of `len` contiguous elements using the workgroup's
/// linear thread id.
pub(crate) fn coop_load_linear(
    b: &mut Builder,
    dims: (usize, usize),
    buf: Buffer,
    global: Affine,
    len: usize,
    shared_base: Affine,
) {
    let threads = dims.0 * dims.1;
    let lin = Affine::tid_x(1).plus(&Affine::tid_y(dims.0 as i64));
    b.for_range(len.div_ceil(threads), |b, i| {
        let e = lin.clone().plus(&i.scale(threads as i64));
        let guards = if !len.is_multiple_of(threads) {
            vec![Guard::below(e.clone(), len as i64)]
        } else {
            vec![]
        };
        let x = b.ld_global(
            buf,
            global.clone().plus(&e).scale(4),
            guards.clone(),
            RegClass::Temp,
        );
        b.st_shared(x, shared_base.clone().plus(&e.scale(4)), guards);
    });
}
