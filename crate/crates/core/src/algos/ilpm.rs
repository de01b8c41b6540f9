use super::direct::stage_halo;
use super::{halo_footprint, AlgoResult, Counts, StageCounts};
use crate::config::AlgoConfig;
use crate::error::Result;
use crate::oracle::check_operands;
use crate::par;
use crate::shape::ConvShape;
use crate::tensor::{Layout, Tensor};

/// ILP-M convolution: threads map to output channels and iterate over the
/// pixels of a tile.
///
/// Per input channel the workgroup stages the image tile once behind a single
/// barrier; each thread then walks the filter taps, loading exactly one filter
/// value into a register and multiplying it into every pixel of its tile.
/// Filters must be in CRSK layout so that neighbouring threads read
/// neighbouring addresses.
pub fn ilpm_conv(
    input: &Tensor,
    filters: &Tensor,
    shape: &ConvShape,
    cfg: &AlgoConfig,
) -> Result<AlgoResult> {
    filters.expect_layout(Layout::Crsk)?;
    check_operands(input, filters, shape)?;
    cfg.validate(shape)?;
    let (oh, ow) = shape.out_hw();
    let (tx, ty) = (cfg.tile_x, cfg.tile_y);
    let wgc = cfg.ilpm_wg_channels(shape);
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
    let x = input.data();
    let f = filters.data();

    // One slab per channel group; the threads of a workgroup are the `wgc`
    // channels of that slab.
    let mut out = vec![0.0f32; shape.output_len()];
    par::for_each_chunk(&mut out, wgc * oh * ow, |g, slab| {
        let mut img_shared = vec![0.0f32; hh * hw];
        for wy in 0..oh / ty {
            for wx in 0..ow / tx {
                // out_reg[thread][wy][wx]
                let mut out_reg = vec![0.0f32; wgc * ty * tx];
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
                    // barrier
                    for local_id in 0..wgc {
                        let k = g * wgc + local_id;
                        let acc = &mut out_reg[local_id * ty * tx..(local_id + 1) * ty * tx];
                        for r in 0..rn {
                            for s in 0..sn {
                                let filter_reg = f[((c * rn + r) * sn + s) * kn + k];
                                for py in 0..ty {
                                    for px in 0..tx {
                                        let v =
                                            img_shared[(py * stride + r) * hw + px * stride + s];
                                        acc[py * tx + px] =
                                            filter_reg.mul_add(v, acc[py * tx + px]);
                                    }
                                }
                            }
                        }
                    }
                }
                for local_id in 0..wgc {
                    for py in 0..ty {
                        for px in 0..tx {
                            let (oy, ox) = (wy * ty + py, wx * tx + px);
                            slab[(local_id * oh + oy) * ow + ox] =
                                out_reg[(local_id * ty + py) * tx + px];
                        }
                    }
                }
            }
        }
    });
    Ok(AlgoResult {
        output: Tensor::new(Layout::Chw, &[kn, oh, ow], out)?,
        counts: counts(shape, cfg),
    })
}

pub(crate) fn counts(shape: &ConvShape, cfg: &AlgoConfig) -> Counts {
    let (oh, ow) = shape.out_hw();
    let (tx, ty) = (cfg.tile_x, cfg.tile_y);
    let spatial = ((oh / ty) * (ow / tx)) as u64;
    let groups = (shape.out_channels / cfg.ilpm_wg_channels(shape)) as u64;
    let c = shape.in_channels as u64;
    let mut st = StageCounts::new("ilpm_conv");
    st.multiplies = shape.macs();
    st.padded_multiplies = shape.macs();
    st.read_bytes =
        halo_footprint(shape, tx, ty) * c * groups * 4 + shape.filter_len() as u64 * 4 * spatial;
    st.write_bytes = shape.output_len() as u64 * 4;
    st.barriers_per_workgroup = c + if cfg.transpose_output { ty as u64 } else { 0 };
    st.workgroups = spatial * groups;
    Counts::from_stages(vec![st])
}

/// Per-thread instruction mix of the main loop: `(fma, filter_loads)`.
pub fn ilpm_thread_work(shape: &ConvShape, cfg: &AlgoConfig) -> (u64, u64) {
    let taps = (shape.in_channels * shape.filter_h * shape.filter_w) as u64;
    (taps * (cfg.tile_x * cfg.tile_y) as u64, taps)
}
