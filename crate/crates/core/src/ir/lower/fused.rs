//! Fused unroll + GEMM kernel.

use super::super::{Affine, Buffer, Builder, Guard, KernelProgram, RegClass};
use super::{coop_load, coop_load_linear, Window};
use crate::config::AlgoConfig;
use crate::shape::ConvShape;

/// Workgroup `(tile_x, tile_y)` over output pixels, grid plane per block of
/// `gemm_tile_m` output channels. Per input channel the workgroup stages the
/// input halo and the `tile_m x R*S` filter slice; every thread then builds
/// its column of the unrolled matrix from the halo tap by tap and multiplies
/// it into `tile_m` accumulators.
pub(crate) fn kernel(shape: &ConvShape, cfg: &AlgoConfig) -> KernelProgram {
    let (oh, ow) = shape.out_hw();
    let (tx, ty, tm) = (cfg.tile_x, cfg.tile_y, cfg.gemm_tile_m);
    let ConvShape {
        in_channels: cn,
        height: h,
        width: w,
        filter_h: rn,
        filter_w: sn,
        pad,
        stride,
        ..
    } = *shape;
    let rs = rn * sn;
    let (hh, hw) = ((ty - 1) * stride + rn, (tx - 1) * stride + sn);
    let mut b = Builder::new(
        "fused_unroll_conv",
        (tx, ty),
        (ow / tx, oh / ty, shape.out_channels / tm),
    );
    let halo = [b.alloc_shared(hh * hw * 4), b.alloc_shared(hh * hw * 4)];
    let a_sh = [b.alloc_shared(tm * rs * 4), b.alloc_shared(tm * rs * 4)];
    let acc = b.accumulators(tm);
    let st = stride as i64;

    b.double_buffered(cn, |b, c, p| {
        coop_load(
            b,
            (tx, ty),
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
        // Filter slice of each output channel of the block: R*S contiguous values.
        for m in 0..tm {
            let k = Affine::wg(2, tm as i64).add_const(m as i64);
            let src = k.scale(cn as i64).plus(&c).scale(rs as i64);
            coop_load_linear(
                b,
                (tx, ty),
                Buffer::Filter,
                src,
                rs,
                Affine::constant(a_sh[p] + (m * rs * 4) as i64),
            );
        }
        b.barrier();
        b.loop_n(rn, |b, r| {
            b.loop_n(sn, |b, s| {
                b.ialu(false, 1);
                let hy = Affine::tid_y(st).plus(&Affine::var(r, 1));
                let hx = Affine::tid_x(st).plus(&Affine::var(s, 1));
                let col = b.ld_shared(
                    hy.scale(hw as i64 * 4)
                        .plus(&hx.scale(4))
                        .add_const(halo[p]),
                    vec![],
                    RegClass::Image,
                );
                for (m, &a) in acc.iter().enumerate() {
                    let tap = Affine::var(r, sn as i64).plus(&Affine::var(s, 1)).scale(4);
                    let f = b.ld_shared(
                        tap.add_const(a_sh[p] + (m * rs * 4) as i64),
                        vec![],
                        RegClass::Filter,
                    );
                    b.fma_into(a, f, col);
                }
            });
        });
    });

    let ox = Affine::wg(0, tx as i64).plus(&Affine::tid_x(1));
    let oy = Affine::wg(1, ty as i64).plus(&Affine::tid_y(1));
    for (m, &a) in acc.iter().enumerate() {
        let k = Affine::wg(2, tm as i64).add_const(m as i64);
        let addr = k
            .scale((oh * ow) as i64)
            .plus(&oy.clone().scale(ow as i64))
            .plus(&ox)
            .scale(4);
        b.st_global(a, Buffer::Output, addr, Vec::<Guard>::new());
    }
    b.finish()
}
