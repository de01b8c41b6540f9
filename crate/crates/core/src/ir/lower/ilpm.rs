//! ILP-M kernel: one thread per output channel, a whole output tile per thread.

use super::super::{Affine, Buffer, Builder, Guard, KernelProgram, RegClass};
use super::{coop_load, Window};
use crate::config::AlgoConfig;
use crate::shape::ConvShape;

/// Thread layout for a workgroup of `wgc` channel threads.
pub(crate) fn thread_dims(wgc: usize) -> (usize, usize) {
    if wgc.is_multiple_of(16) {
        (16, wgc / 16)
    } else {
        (wgc, 1)
    }
}

/// Workgroup of `wgc` threads (linear id = output channel within the group),
/// grid `(OW/tile_x, OH/tile_y, K/wgc)`. Per input channel: stage the halo,
/// one barrier, then for every filter tap a single coalesced filter load
/// feeds `tile_x * tile_y` FMAs against broadcast halo reads. Filters are
/// CRSK. With `transpose_output` the tile is written row by row through a
/// shared staging buffer so consecutive threads store consecutive pixels.
pub(crate) fn kernel(shape: &ConvShape, cfg: &AlgoConfig) -> KernelProgram {
    let (oh, ow) = shape.out_hw();
    let (tx, ty) = (cfg.tile_x, cfg.tile_y);
    let wgc = cfg.ilpm_wg_channels(shape);
    let (dx, dy) = thread_dims(wgc);
    let ConvShape {
        in_channels: cn,
        out_channels: kn,
        height: h,
        width: w,
        filter_h: rn,
        filter_w: sn,
        pad,
        stride,
    } = *shape;
    let (hh, hw) = ((ty - 1) * stride + rn, (tx - 1) * stride + sn);
    let mut b = Builder::new("ilpm_conv", (dx, dy), (ow / tx, oh / ty, kn / wgc));
    let halo = [b.alloc_shared(hh * hw * 4), b.alloc_shared(hh * hw * 4)];
    let stage = if cfg.transpose_output {
        [b.alloc_shared(wgc * tx * 4), b.alloc_shared(wgc * tx * 4)]
    } else {
        [0, 0]
    };
    let acc = b.accumulators(tx * ty);
    let st = stride as i64;
    let lin = Affine::tid_x(1).plus(&Affine::tid_y(dx as i64));
    let k = Affine::wg(2, wgc as i64).plus(&lin);

    b.double_buffered(cn, |b, c, p| {
        coop_load(
            b,
            (dx, dy),
            &Window {
                buf: Buffer::Input,
                plane: c.clone().scale((h * w) as i64),
                row0: Affine::wg(1, (ty * stride) as i64).add_const(-(pad as i64)),
                col0: Affine::wg(0, (tx * stride) as i64).add_const(-(pad as i64)),
                plane_rows: h as i64,
                plane_cols: w as i64,
                rows: hh,
                cols: hw,
                shared_base: Affine::constant(halo[p]),
                shared_pitch: hw,
            },
        );
        b.barrier();
        b.loop_n(rn, |b, r| {
            b.loop_n(sn, |b, s| {
                let tap = c
                    .clone()
                    .scale(rn as i64)
                    .plus(&Affine::var(r, 1))
                    .scale(sn as i64)
                    .plus(&Affine::var(s, 1));
                let faddr = tap.scale(kn as i64).plus(&k).scale(4);
                let f = b.ld_global(Buffer::Filter, faddr, vec![], RegClass::Filter);
                for py in 0..ty {
                    for px in 0..tx {
                        let hy = Affine::var(r, 1).add_const(py as i64 * st);
                        let hx = Affine::var(s, 1).add_const(px as i64 * st);
                        let addr = hy
                            .scale(hw as i64 * 4)
                            .plus(&hx.scale(4))
                            .add_const(halo[p]);
                        let v = b.ld_shared(addr, vec![], RegClass::Image);
                        b.fma_into(acc[py * tx + px], f, v);
                    }
                }
            });
        });
    });

    let ox0 = Affine::wg(0, tx as i64);
    let oy0 = Affine::wg(1, ty as i64);
    if cfg.transpose_output {
        for py in 0..ty {
            let p = py % 2;
            for px in 0..tx {
                let addr = lin
                    .clone()
                    .scale(tx as i64 * 4)
                    .add_const(stage[p] + px as i64 * 4);
                b.st_shared(acc[py * tx + px], addr, vec![]);
            }
            b.barrier();
            b.for_range(wgc.div_ceil(dy), |b, i| {
                b.for_range(tx.div_ceil(dx), |b, j| {
                    let kl = Affine::tid_y(1).plus(&i.scale(dy as i64));
                    let col = Affine::tid_x(1).plus(&j.scale(dx as i64));
                    let mut guards = Vec::new();
                    if !wgc.is_multiple_of(dy) {
                        guards.push(Guard::below(kl.clone(), wgc as i64));
                    }
                    if tx % dx != 0 {
                        guards.push(Guard::below(col.clone(), tx as i64));
                    }
                    let saddr = kl
                        .clone()
                        .scale(tx as i64 * 4)
                        .plus(&col.clone().scale(4))
                        .add_const(stage[p]);
                    let v = b.ld_shared(saddr, guards.clone(), RegClass::Temp);
                    let kk = Affine::wg(2, wgc as i64).plus(&kl);
                    let oy = oy0.clone().add_const(py as i64);
                    let gaddr = kk
                        .scale((oh * ow) as i64)
                        .plus(&oy.scale(ow as i64))
                        .plus(&ox0)
                        .plus(&col)
                        .scale(4);
                    b.st_global(v, Buffer::Output, gaddr, guards);
                });
            });
        }
    } else {
        for py in 0..ty {
            for px in 0..tx {
                let oy = oy0.clone().add_const(py as i64);
                let ox = ox0.clone().add_const(px as i64);
                let addr = k
                    .clone()
                    .scale((oh * ow) as i64)
                    .plus(&oy.scale(ow as i64))
                    .plus(&ox)
                    .scale(4);
                b.st_global(acc[py * tx + px], Buffer::Output, addr, vec![]);
            }
        }
    }
    b.finish()
}
