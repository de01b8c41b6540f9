use super::{halo_footprint, AlgoResult, Counts, StageCounts};
use crate::config::AlgoConfig;
use crate::error::Result;
use crate::oracle::check_operands;
use crate::par;
use crate::shape::ConvShape;
use crate::tensor::{Layout, Tensor};

/// im2col and GEMM fused into one kernel.
///
/// A workgroup owns a `tile_x x tile_y` block of output pixels and
/// `gemm_tile_m` output channels. For every input channel it builds the
/// matching `R*S x pixels` slice of the unrolled matrix in on-chip memory,
/// stages the `gemm_tile_m x R*S` filter slice next to it and multiplies.
/// Workgroups that share pixels but differ in channel block rebuild the same
/// slice, which is the duplicated unroll work this algorithm pays for.
pub fn fused_unroll_conv(
    input: &Tensor,
    filters: &Tensor,
    shape: &ConvShape,
    cfg: &AlgoConfig,
) -> Result<AlgoResult> {
    check_operands(input, filters, shape)?;
    filters.expect_layout(Layout::Kcrs)?;
    cfg.validate(shape)?;
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
    let pixels = tx * ty;
    let x = input.data();
    let f = filters.data();

    let mut out = vec![0.0f32; shape.output_len()];
    par::for_each_chunk(&mut out, tm * oh * ow, |mt, slab| {
        let mut a_tile = vec![0.0f32; tm * rs];
        let mut b_tile = vec![0.0f32; rs * pixels];
        for wy in 0..oh / ty {
            for wx in 0..ow / tx {
                let mut acc = vec![0.0f32; pixels * tm];
                for c in 0..cn {
                    for m in 0..tm {
                        let k = mt * tm + m;
                        a_tile[m * rs..(m + 1) * rs]
                            .copy_from_slice(&f[(k * cn + c) * rs..(k * cn + c + 1) * rs]);
                    }
                    for py in 0..ty {
                        for px in 0..tx {
                            let (oy, ox) = (wy * ty + py, wx * tx + px);
                            for r in 0..rn {
                                for s in 0..sn {
                                    let iy = (oy * stride + r) as isize - pad as isize;
                                    let ix = (ox * stride + s) as isize - pad as isize;
                                    let inside =
                                        iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize;
                                    b_tile[(r * sn + s) * pixels + py * tx + px] = if inside {
                                        x[(c * h + iy as usize) * w + ix as usize]
                                    } else {
                                        0.0
                                    };
                                }
                            }
                        }
                    }
                    for p in 0..pixels {
                        for t in 0..rs {
                            let b = b_tile[t * pixels + p];
                            for m in 0..tm {
                                acc[p * tm + m] = a_tile[m * rs + t].mul_add(b, acc[p * tm + m]);
                            }
                        }
                    }
                }
                for m in 0..tm {
                    for py in 0..ty {
                        for px in 0..tx {
                            let (oy, ox) = (wy * ty + py, wx * tx + px);
                            slab[(m * oh + oy) * ow + ox] = acc[(py * tx + px) * tm + m];
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

pub(crate) fn counts(shape: &ConvShape, cfg: &AlgoConfig) -> Counts {
    let (oh, ow) = shape.out_hw();
    let (tx, ty, tm) = (cfg.tile_x, cfg.tile_y, cfg.gemm_tile_m);
    let spatial = ((oh / ty) * (ow / tx)) as u64;
    let mtiles = (shape.out_channels / tm) as u64;
    let c = shape.in_channels as u64;
    let taps = (shape.filter_h * shape.filter_w) as u64;
    let mut st = StageCounts::new("fused_unroll_conv");
    st.multiplies = shape.macs();
    st.padded_multiplies = shape.macs();
    st.read_bytes =
        halo_footprint(shape, tx, ty) * c * mtiles * 4 + shape.filter_len() as u64 * 4 * spatial;
    st.write_bytes = shape.output_len() as u64 * 4;
    st.index_ops = c * taps * (oh * ow) as u64 * mtiles;
    st.barriers_per_workgroup = c;
    st.workgroups = spatial * mtiles;
    Counts::from_stages(vec![st])
}
