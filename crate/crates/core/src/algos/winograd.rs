//! Winograd minimal filtering F(2x2, 3x3).
//!
//! Output tiles of 2x2 are computed from 4x4 input patches as
//! `AT * [(G g GT) . (BT d B)] * A`. The filter transform runs once on the
//! host (filters are constants at inference time); the input and output
//! transforms are adds only.

use super::im2col::gemm_stage;
use super::{input_footprint_bytes, AlgoResult, Counts, StageCounts};
use crate::config::AlgoConfig;
use crate::error::{Error, Result};
use crate::oracle::check_operands;
use crate::shape::ConvShape;
use crate::tensor::{Layout, Tensor};

pub const BT: [[f64; 4]; 4] = [
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 1.0, 0.0],
    [0.0, -1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
];
pub const G: [[f64; 3]; 4] = [
    [1.0, 0.0, 0.0],
    [0.5, 0.5, 0.5],
    [0.5, -0.5, 0.5],
    [0.0, 0.0, 1.0],
];
pub const AT: [[f64; 4]; 2] = [[1.0, 1.0, 1.0, 0.0], [0.0, 1.0, -1.0, -1.0]];

/// Adds per 4x4 input transform and per 2x2 output transform.
pub const INPUT_TRANSFORM_ADDS: u64 = 32;
pub const OUTPUT_TRANSFORM_ADDS: u64 = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct WinogradPlan {
    pub m: usize,
    pub r: usize,
    pub bt: [[f64; 4]; 4],
    pub g: [[f64; 3]; 4],
    pub at: [[f64; 4]; 2],
    pub tiles_y: usize,
    pub tiles_x: usize,
}

impl WinogradPlan {
    pub fn new(shape: &ConvShape) -> Result<Self> {
        if shape.filter_h != 3 || shape.filter_w != 3 || shape.pad != 1 || shape.stride != 1 {
            return Err(Error::Unsupported(
                "winograd F(2x2,3x3) needs 3x3 filters, pad 1, stride 1".into(),
            ));
        }
        let (oh, ow) = shape.output_shape()?;
        Ok(WinogradPlan {
            m: 2,
            r: 3,
            bt: BT,
            g: G,
            at: AT,
            tiles_y: oh.div_ceil(2),
            tiles_x: ow.div_ceil(2),
        })
    }

    pub fn tiles(&self) -> usize {
        self.tiles_y * self.tiles_x
    }

    /// Element-wise products per tile per (input, output) channel pair.
    pub fn hadamard_size(&self) -> usize {
        (self.m + self.r - 1) * (self.m + self.r - 1)
    }
}

pub fn winograd_filter_transform(g: &[[f32; 3]; 3]) -> [[f32; 4]; 4] {
    let col = |a: f32, b: f32, c: f32| [a, 0.5 * (a + b + c), 0.5 * (a - b + c), c];
    // Gg: 4x3
    let mut gg = [[0.0f32; 3]; 4];
    for j in 0..3 {
        let v = col(g[0][j], g[1][j], g[2][j]);
        for i in 0..4 {
            gg[i][j] = v[i];
        }
    }
    let mut u = [[0.0f32; 4]; 4];
    for i in 0..4 {
        u[i] = col(gg[i][0], gg[i][1], gg[i][2]);
    }
    u
}

/// `BT d B`, evaluated as four row combinations followed by four column
/// combinations. The kernel IR emits exactly this sequence of adds.
pub fn winograd_input_transform(d: &[[f32; 4]; 4]) -> [[f32; 4]; 4] {
    let mut t = [[0.0f32; 4]; 4];
    for j in 0..4 {
        t[0][j] = d[0][j] - d[2][j];
        t[1][j] = d[1][j] + d[2][j];
        t[2][j] = d[2][j] - d[1][j];
        t[3][j] = d[1][j] - d[3][j];
    }
    let mut v = [[0.0f32; 4]; 4];
    for i in 0..4 {
        v[i][0] = t[i][0] - t[i][2];
        v[i][1] = t[i][1] + t[i][2];
        v[i][2] = t[i][2] - t[i][1];
        v[i][3] = t[i][1] - t[i][3];
    }
    v
}

/// `AT m A`, left-to-right sums.
pub fn winograd_output_transform(m: &[[f32; 4]; 4]) -> [[f32; 2]; 2] {
    let mut t = [[0.0f32; 4]; 2];
    for j in 0..4 {
        t[0][j] = m[0][j] + m[1][j] + m[2][j];
        t[1][j] = m[1][j] - m[2][j] - m[3][j];
    }
    let mut y = [[0.0f32; 2]; 2];
    for i in 0..2 {
        y[i][0] = t[i][0] + t[i][1] + t[i][2];
        y[i][1] = t[i][1] - t[i][2] - t[i][3];
    }
    y
}

/// Transformed filter bank laid out `[pos][K][C]`, `pos = 4*i + j`, so each
/// of the 16 positions is a row-major `K x C` GEMM operand.
pub fn filter_transform_bank(filters: &Tensor) -> Result<Vec<f32>> {
    let (kn, cn, rn, sn) = filters.filter_dims()?;
    if (rn, sn) != (3, 3) {
        return Err(Error::Unsupported("winograd needs 3x3 filters".into()));
    }
    let mut u = vec![0.0f32; 16 * kn * cn];
    for k in 0..kn {
        for c in 0..cn {
            let mut g = [[0.0f32; 3]; 3];
            for (r, row) in g.iter_mut().enumerate() {
                for (s, v) in row.iter_mut().enumerate() {
                    *v = filters.filter_at(k, c, r, s);
                }
            }
            let t = winograd_filter_transform(&g);
            for pos in 0..16 {
                u[(pos * kn + k) * cn + c] = t[pos / 4][pos % 4];
            }
        }
    }
    Ok(u)
}

/// Transformed input laid out `[pos][C][tiles]`.
pub(crate) fn input_transform_all(
    input: &Tensor,
    shape: &ConvShape,
    plan: &WinogradPlan,
) -> Vec<f32> {
    let (cn, h, w) = (
        shape.in_channels,
        shape.height as isize,
        shape.width as isize,
    );
    let t_n = plan.tiles();
    let x = input.data();
    let mut v = vec![0.0f32; 16 * cn * t_n];
    for c in 0..cn {
        for ty in 0..plan.tiles_y {
            for tx in 0..plan.tiles_x {
                let mut d = [[0.0f32; 4]; 4];
                for (i, row) in d.iter_mut().enumerate() {
                    for (j, val) in row.iter_mut().enumerate() {
                        let iy = (2 * ty + i) as isize - 1;
                        let ix = (2 * tx + j) as isize - 1;
                        if iy >= 0 && iy < h && ix >= 0 && ix < w {
                            *val = x[(c * h as usize + iy as usize) * w as usize + ix as usize];
                        }
                    }
                }
                let vt = winograd_input_transform(&d);
                let t = ty * plan.tiles_x + tx;
                for pos in 0..16 {
                    v[(pos * cn + c) * t_n + t] = vt[pos / 4][pos % 4];
                }
            }
        }
    }
    v
}

pub fn winograd_conv(
    input: &Tensor,
    filters: &Tensor,
    shape: &ConvShape,
    cfg: &AlgoConfig,
) -> Result<AlgoResult> {
    check_operands(input, filters, shape)?;
    let plan = WinogradPlan::new(shape)?;
    cfg.validate(shape)?;
    let (kn, cn) = (shape.out_channels, shape.in_channels);
    let (oh, ow) = shape.out_hw();
    let t_n = plan.tiles();
    let u = filter_transform_bank(filters)?;
    let v = input_transform_all(input, shape, &plan);
    let mut prod = Vec::with_capacity(16 * kn * t_n);
    for pos in 0..16 {
        let a = Tensor::new(
            Layout::RowMajor,
            &[kn, cn],
            u[pos * kn * cn..(pos + 1) * kn * cn].to_vec(),
        )?;
        let b = Tensor::new(
            Layout::RowMajor,
            &[cn, t_n],
            v[pos * cn * t_n..(pos + 1) * cn * t_n].to_vec(),
        )?;
        prod.extend_from_slice(
            super::gemm(&a, &b, cfg.gemm_tile_m, cfg.gemm_tile_n, cfg.gemm_tile_k)?.data(),
        );
    }
    let mut out = vec![0.0f32; shape.output_len()];
    for k in 0..kn {
        for ty in 0..plan.tiles_y {
            for tx in 0..plan.tiles_x {
                let t = ty * plan.tiles_x + tx;
                let mut m = [[0.0f32; 4]; 4];
                for pos in 0..16 {
                    m[pos / 4][pos % 4] = prod[(pos * kn + k) * t_n + t];
                }
                let y = winograd_output_transform(&m);
                for (i, row) in y.iter().enumerate() {
                    for (j, &val) in row.iter().enumerate() {
                        let (oy, ox) = (2 * ty + i, 2 * tx + j);
                        if oy < oh && ox < ow {
                            out[(k * oh + oy) * ow + ox] = val;
                        }
                    }
                }
            }
        }
    }
    Ok(AlgoResult {
        output: Tensor::new(Layout::Chw, &[kn, oh, ow], out)?,
        counts: counts(shape, cfg),
    })
}

pub(crate) fn counts(shape: &ConvShape, cfg: &AlgoConfig) -> Counts {
    let plan = WinogradPlan::new(shape).expect("validated");
    let t_n = plan.tiles();
    let (kn, cn) = (shape.out_channels, shape.in_channels);
    let tiles = t_n as u64;
    let mut from_image = StageCounts::new("winograd_trans_from_image");
    from_image.read_bytes = input_footprint_bytes(shape);
    from_image.write_bytes = (cn * t_n * 16 * 4) as u64;
    from_image.adds = cn as u64 * tiles * INPUT_TRANSFORM_ADDS;
    from_image.index_ops = (cn * t_n * 16) as u64;
    from_image.workgroups = crate::ir::lower::transform_workgroups(&plan, cn);
    let mm = gemm_stage("winograd_gemm", 16, kn, t_n, cn, cfg);
    let mut to_output = StageCounts::new("winograd_trans_to_output");
    to_output.read_bytes = (16 * kn * t_n * 4) as u64;
    to_output.write_bytes = shape.output_len() as u64 * 4;
    to_output.adds = kn as u64 * tiles * OUTPUT_TRANSFORM_ADDS;
    to_output.workgroups = crate::ir::lower::transform_workgroups(&plan, kn);
    Counts::from_stages(vec![from_image, mm, to_output])
}
