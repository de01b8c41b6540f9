//! Direct convolution kernel, with and without filter caching.

use super::super::{Affine, Buffer, Builder, KernelProgram, RegClass};
use super::{coop_load, coop_load_linear, Window};
use crate::config::AlgoConfig;
use crate::shape::ConvShape;

/// Workgroup `(tile_x, tile_y)`, one thread per output pixel with
/// `out_channels_per_thread` accumulators; grid plane per output-channel
/// group. Per input channel the halo is staged once. The cached variant
/// then stages each output channel's `R*S` filter slice behind its own
/// barrier; the uncached variant reads the filter from global memory inside
/// the fully unrolled dot product.
pub(crate) fn kernel(shape: &ConvShape, cfg: &AlgoConfig) -> KernelProgram {
    let (oh, ow) = shape.out_hw();
    let (tx, ty, ocpt) = (cfg.tile_x, cfg.tile_y, cfg.out_channels_per_thread);
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
    let name = "direct_conv";
    let mut b = Builder::new(
        name,
        (tx, ty),
        (ow / tx, oh / ty, shape.out_channels / ocpt),
    );
    let halo = [b.alloc_shared(hh * hw * 4), b.alloc_shared(hh * hw * 4)];
    let filt: Vec<[i64; 2]> = if cfg.cache_filter {
        (0..ocpt)
            .map(|_| [b.alloc_shared(rs * 4), b.alloc_shared(rs * 4)])
            .collect()
    } else {
        Vec::new()
    };
    let acc = b.accumulators(ocpt);
    let st = stride as i64;
    let img_addr = |p: usize, r: usize, s: usize| {
        let hy = Affine::tid_y(st).add_const(r as i64);
        let hx = Affine::tid_x(st).add_const(s as i64);
        hy.scale(hw as i64 * 4)
            .plus(&hx.scale(4))
            .add_const(halo[p])
    };

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
        if !cfg.cache_filter {
            b.barrier();
        }
        for (o, &a) in acc.iter().enumerate() {
            let k = Affine::wg(2, ocpt as i64).add_const(o as i64);
            let fbase = k.scale(cn as i64).plus(&c).scale(rs as i64);
            if cfg.cache_filter {
                coop_load_linear(
                    b,
                    (tx, ty),
                    Buffer::Filter,
                    fbase.clone(),
                    rs,
                    Affine::constant(filt[o][p]),
                );
                b.barrier();
            }
            for r in 0..rn {
                for s in 0..sn {
                    let v = b.ld_shared(img_addr(p, r, s), vec![], RegClass::Image);
                    let tap = (r * sn + s) as i64;
                    let f = if cfg.cache_filter {
                        b.ld_shared(
                            Affine::constant(filt[o][p] + tap * 4),
                            vec![],
                            RegClass::Filter,
                        )
                    } else {
                        b.ld_global(
                            Buffer::Filter,
                            fbase.clone().add_const(tap).scale(4),
                            vec![],
                            RegClass::Filter,
                        )
                    };
                    b.fma_into(a, f, v);
                }
            }
        }
    });

    let ox = Affine::wg(0, tx as i64).plus(&Affine::tid_x(1));
    let oy = Affine::wg(1, ty as i64).plus(&Affine::tid_y(1));
    for (o, &a) in acc.iter().enumerate() {
        let k = Affine::wg(2, ocpt as i64).add_const(o as i64);
        let addr = k
            .scale((oh * ow) as i64)
            .plus(&oy.clone().scale(ow as i64))
            .plus(&ox)
            .scale(4);
        b.st_global(a, Buffer::Output, addr, vec![]);
    }
    b.finish()
}
