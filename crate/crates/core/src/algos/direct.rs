use super::{halo_footprint, AlgoResult, Counts, StageCounts};
use crate::config::AlgoConfig;
use crate::error::Result;
use crate::oracle::check_operands;
use crate::par;
use crate::shape::ConvShape;
use crate::tensor::{Layout, Tensor};

/// Direct convolution with one thread per output pixel, each thread owning
/// `out_channels_per_thread` accumulators.
///
/// The cached variant stages each output channel's filter slice in shared
/// memory behind a barrier inside the output-channel loop; the uncached
/// variant reads filter values straight from global memory and only
/// synchronises once per input channel.
pub fn direct_conv(
    input: &Tensor,
    filters: &Tensor,
    shape: &ConvShape,
    cfg: &AlgoConfig,
) -> Result<AlgoResult> {
    check_operands(input, filters, shape)?;
    filters.expect_layout(Layout::Kcrs)?;
    cfg.validate(shape)?;
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
    let (hh, hw) = ((ty - 1) * stride + rn, (tx - 1) * stride + sn);
    let x = input.data();
    let f = filters.data();

    // Each group of `ocpt` output channels is an independent slab of workgroups.
    let mut out = vec![0.0f32; shape.output_len()];
    par::for_each_chunk(&mut out, ocpt * oh * ow, |g, slab| {
        let mut img_shared = vec![0.0f32; hh * hw];
        let mut filter_shared = vec![0.0f32; rn * sn];
        for wy in 0..oh / ty {
            for wx in 0..ow / tx {
                // Thread-private accumulators: [pixel][o].
                let mut acc = vec![0.0f32; tx * ty * ocpt];
                for c in 0..cn {
                    stage_halo(
                        &mut img_shared,
                        x,
                        c,
                        h,
                        w,
                        wy * ty * stride,
                        wx * tx * stride,
                        hh,
                        hw,
                        pad,
                    );
                    for o in 0..ocpt {
                        let k = g * ocpt + o;
                        let fbase = (k * cn + c) * rn * sn;
                        if cfg.cache_filter {
                            filter_shared.copy_from_slice(&f[fbase..fbase + rn * sn]);
                        }
                        for py in 0..ty {
                            for px in 0..tx {
                                let a = &mut acc[(py * tx + px) * ocpt + o];
                                for r in 0..rn {
                                    for s in 0..sn {
                                        let v =
                                            img_shared[(py * stride + r) * hw + px * stride + s];
                                        let fv = if cfg.cache_filter {
                                            filter_shared[r * sn + s]
                                        } else {
                                            f[fbase + r * sn + s]
                                        };
                                        *a = fv.mul_add(v, *a);
                                    }
                                }
                            }
                        }
                    }
                }
                for o in 0..ocpt {
                    for py in 0..ty {
                        for px in 0..tx {
                            let (oy, ox) = (wy * ty + py, wx * tx + px);
                            slab[(o * oh + oy) * ow + ox] = acc[(py * tx + px) * ocpt + o];
                        }
                    }
                }
            }
        }
    });
    Ok(AlgoResult {
        output: Tensor::new(Layout::Chw, &[shape.out_channels, oh, ow], out)?,
        counts: counts(shape, cfg),
    })
}

/// Copies the input window starting at `(y0 - pad, x0 - pad)` into `dst`, zero outside the image.
#[allow(clippy::too_many_arguments)]
pub(crate) fn stage_halo(
    dst: &mut [f32],
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    y0: usize,
    x0: usize,
    hh: usize,
    hw: usize,
    pad: usize,
) {
    for i in 0..hh {
        let iy = (y0 + i) as isize - pad as isize;
        for j in 0..hw {
            let ix = (x0 + j) as isize - pad as isize;
            dst[i * hw + j] = if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                x[(c * h + iy as usize) * w + ix as usize]
            } else {
                0.0
            };
        }
    }
}

pub(crate) fn counts(shape: &ConvShape, cfg: &AlgoConfig) -> Counts {
    let (oh, ow) = shape.out_hw();
    let (tx, ty, ocpt) = (cfg.tile_x, cfg.tile_y, cfg.out_channels_per_thread);
    let spatial = ((oh / ty) * (ow / tx)) as u64;
    let groups = (shape.out_channels / ocpt) as u64;
    let c = shape.in_channels as u64;
    let filter_bytes = shape.filter_len() as u64 * 4;
    let mut st = StageCounts::new("direct_conv");
    st.multiplies = shape.macs();
    st.padded_multiplies = shape.macs();
    st.read_bytes = halo_footprint(shape, tx, ty) * c * groups * 4
        + if cfg.cache_filter {
            filter_bytes * spatial
        } else {
            filter_bytes * spatial * (tx * ty) as u64
        };
    st.write_bytes = shape.output_len() as u64 * 4;
    st.barriers_per_workgroup = if cfg.cache_filter { c * ocpt as u64 } else { c };
    st.workgroups = spatial * groups;
    Counts::from_stages(vec![st])
}
