//! im2col unroll kernel and the GEMM that consumes its matrix.

use super::super::{Affine, Buffer, Builder, Guard, KernelProgram, RegClass};
use super::gemm::{self, GemmSpec};
use crate::config::AlgoConfig;
use crate::shape::ConvShape;

/// One thread per output pixel, one grid plane per input channel. Every
/// thread gathers its `R*S` taps and writes them to its column of the
/// unrolled matrix; padding taps are predicated-zero loads.
pub(crate) fn unroll_kernel(shape: &ConvShape, cfg: &AlgoConfig) -> KernelProgram {
    let (oh, ow) = shape.out_hw();
    let (tx, ty) = (cfg.tile_x, cfg.tile_y);
    let ConvShape {
        height: h,
        width: w,
        filter_h: rn,
        filter_w: sn,
        pad,
        stride,
        ..
    } = *shape;
    let (h, w, pad, st) = (h as i64, w as i64, pad as i64, stride as i64);
    let n = (oh * ow) as i64;
    let mut b = Builder::new(
        "im2col_im2col",
        (tx, ty),
        (ow.div_ceil(tx), oh.div_ceil(ty), shape.in_channels),
    );
    let ox = Affine::wg(0, tx as i64).plus(&Affine::tid_x(1));
    let oy = Affine::wg(1, ty as i64).plus(&Affine::tid_y(1));
    let c = Affine::wg(2, 1);
    let inside = vec![
        Guard::below(ox.clone(), ow as i64),
        Guard::below(oy.clone(), oh as i64),
    ];
    b.loop_n(rn, |b, r| {
        b.loop_n(sn, |b, s| {
            b.ialu(false, 1);
            let iy = oy
                .clone()
                .scale(st)
                .plus(&Affine::var(r, 1))
                .add_const(-pad);
            let ix = ox
                .clone()
                .scale(st)
                .plus(&Affine::var(s, 1))
                .add_const(-pad);
            let mut guards = inside.clone();
            guards.push(Guard::below(iy.clone(), h));
            guards.push(Guard::below(ix.clone(), w));
            let src = c.clone().scale(h * w).plus(&iy.scale(w)).plus(&ix).scale(4);
            let v = b.ld_global(Buffer::Input, src, guards, RegClass::Image);
            let row = c
                .clone()
                .scale((rn * sn) as i64)
                .plus(&Affine::var(r, sn as i64))
                .plus(&Affine::var(s, 1));
            let dst = row
                .scale(n)
                .plus(&oy.clone().scale(ow as i64))
                .plus(&ox)
                .scale(4);
            b.st_global(v, Buffer::Unrolled, dst, inside.clone());
        });
    });
    b.finish()
}

pub(crate) fn gemm_kernel(shape: &ConvShape, cfg: &AlgoConfig) -> KernelProgram {
    let (oh, ow) = shape.out_hw();
    gemm::kernel(&GemmSpec {
        name: "im2col_gemm",
        batch: 1,
        m: shape.out_channels,
        n: oh * ow,
        kd: shape.in_channels * shape.filter_h * shape.filter_w,
        tiles: (cfg.gemm_tile_m, cfg.gemm_tile_n, cfg.gemm_tile_k),
        a: (Buffer::Filter, 0),
        b: (Buffer::Unrolled, 0),
        c: (Buffer::Output, 0),
    })
}
