use super::{input_footprint_bytes, round_up, AlgoResult, Counts, StageCounts};
use crate::config::AlgoConfig;
use crate::error::{Error, Result};
use crate::oracle::check_operands;
use crate::par;
use crate::shape::ConvShape;
use crate::tensor::{Layout, Tensor};

/// The im2col matrix: one column per output pixel, one row per `(c, r, s)` tap.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledMatrix {
    pub matrix: Tensor,
    pub bytes: u64,
}

pub fn im2col_unroll(input: &Tensor, shape: &ConvShape) -> Result<UnrolledMatrix> {
    input.expect_layout(Layout::Chw)?;
    if input.dims() != [shape.in_channels, shape.height, shape.width] {
        return Err(Error::Shape(format!(
            "input dims {:?} do not match shape",
            input.dims()
        )));
    }
    let (oh, ow) = shape.output_shape()?;
    let ConvShape {
        in_channels,
        height: h,
        width: w,
        filter_h,
        filter_w,
        pad,
        stride,
        ..
    } = *shape;
    let rows = in_channels * filter_h * filter_w;
    let cols = oh * ow;
    let x = input.data();
    let mut m = vec![0.0f32; rows * cols];
    par::for_each_chunk(&mut m, cols, |row, out| {
        let c = row / (filter_h * filter_w);
        let r = row / filter_w % filter_h;
        let s = row % filter_w;
        for oy in 0..oh {
            let iy = (oy * stride + r) as isize - pad as isize;
            if iy < 0 || iy >= h as isize {
                continue;
            }
            for ox in 0..ow {
                let ix = (ox * stride + s) as isize - pad as isize;
                if ix >= 0 && ix < w as isize {
                    out[oy * ow + ox] = x[(c * h + iy as usize) * w + ix as usize];
                }
            }
        }
    });
    Ok(UnrolledMatrix {
        bytes: (rows * cols * 4) as u64,
        matrix: Tensor::new(Layout::RowMajor, &[rows, cols], m)?,
    })
}

/// Tiled single-precision GEMM. The reduction runs in ascending `k` with a
/// fused multiply-add per step whatever the tiling, so every tiling returns
/// bit-identical results.
pub fn gemm(a: &Tensor, b: &Tensor, tile_m: usize, tile_n: usize, tile_k: usize) -> Result<Tensor> {
    a.expect_layout(Layout::RowMajor)?;
    b.expect_layout(Layout::RowMajor)?;
    let (m, kd) = (a.dims()[0], a.dims()[1]);
    let (kd2, n) = (b.dims()[0], b.dims()[1]);
    if kd != kd2 {
        return Err(Error::Shape(format!(
            "gemm inner dims differ: {kd} vs {kd2}"
        )));
    }
    if tile_m == 0 || tile_n == 0 || tile_k == 0 {
        return Err(Error::Config("gemm tiles must be >= 1".into()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut c = vec![0.0f32; m * n];
    // One chunk per row-tile of C.
    par::for_each_chunk(&mut c, tile_m * n, |ti, block| {
        let i0 = ti * tile_m;
        let rows = block.len() / n.max(1);
        for j0 in (0..n).step_by(tile_n) {
            let j1 = (j0 + tile_n).min(n);
            for k0 in (0..kd).step_by(tile_k) {
                let k1 = (k0 + tile_k).min(kd);
                for i in 0..rows {
                    let arow = &ad[(i0 + i) * kd..(i0 + i + 1) * kd];
                    for j in j0..j1 {
                        let mut acc = block[i * n + j];
                        for k in k0..k1 {
                            acc = arow[k].mul_add(bd[k * n + j], acc);
                        }
                        block[i * n + j] = acc;
                    }
                }
            }
        }
    });
    Tensor::new(Layout::RowMajor, &[m, n], c)
}

pub fn im2col_conv(
    input: &Tensor,
    filters: &Tensor,
    shape: &ConvShape,
    cfg: &AlgoConfig,
) -> Result<AlgoResult> {
    check_operands(input, filters, shape)?;
    filters.expect_layout(Layout::Kcrs)?;
    cfg.validate(shape)?;
    let (oh, ow) = shape.out_hw();
    let unrolled = im2col_unroll(input, shape)?;
    let kd = shape.in_channels * shape.filter_h * shape.filter_w;
    let a = Tensor::new(
        Layout::RowMajor,
        &[shape.out_channels, kd],
        filters.data().to_vec(),
    )?;
    let prod = gemm(
        &a,
        &unrolled.matrix,
        cfg.gemm_tile_m,
        cfg.gemm_tile_n,
        cfg.gemm_tile_k,
    )?;
    Ok(AlgoResult {
        output: Tensor::new(Layout::Chw, &[shape.out_channels, oh, ow], prod.into_data())?,
        counts: counts(shape, cfg),
    })
}

/// Counts for a batch of `batch` identical GEMMs `M x Kd` times `Kd x N`.
pub(crate) fn gemm_stage(
    name: &str,
    batch: usize,
    m: usize,
    n: usize,
    kd: usize,
    cfg: &AlgoConfig,
) -> StageCounts {
    let (tm, tn, tk) = (cfg.gemm_tile_m, cfg.gemm_tile_n, cfg.gemm_tile_k);
    let b = batch as u64;
    let mut st = StageCounts::new(name);
    st.multiplies = b * (m * n * kd) as u64;
    st.padded_multiplies = b * (round_up(m, tm) * round_up(n, tn) * round_up(kd, tk)) as u64;
    st.read_bytes = b * 4 * ((m * kd * n.div_ceil(tn)) + (kd * n * m.div_ceil(tm))) as u64;
    st.write_bytes = b * (m * n * 4) as u64;
    st.barriers_per_workgroup = kd.div_ceil(tk) as u64;
    st.workgroups = b * (m.div_ceil(tm) * n.div_ceil(tn)) as u64;
    st
}

pub(crate) fn counts(shape: &ConvShape, cfg: &AlgoConfig) -> Counts {
    let (oh, ow) = shape.out_hw();
    let kd = shape.in_channels * shape.filter_h * shape.filter_w;
    let n = oh * ow;
    let mut unroll = StageCounts::new("im2col_im2col");
    unroll.read_bytes = input_footprint_bytes(shape);
    unroll.write_bytes = (kd * n * 4) as u64;
    unroll.index_ops = (kd * n) as u64;
    unroll.workgroups =
        (ow.div_ceil(cfg.tile_x) * oh.div_ceil(cfg.tile_y) * shape.in_channels) as u64;
    let mm = gemm_stage("im2col_gemm", 1, shape.out_channels, n, kd, cfg);
    Counts::from_stages(vec![unroll, mm])
}
