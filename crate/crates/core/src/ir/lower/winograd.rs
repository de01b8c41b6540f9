//! Winograd F(2x2,3x3): input transform, 16 batched GEMMs, output transform.
//! The filter transform runs once on the host and is read from the
//! `wino_filter` buffer.

use super::super::{Affine, Buffer, Builder, Guard, KernelProgram, Reg, RegClass};
use super::gemm::{self, GemmSpec};
use super::TRANSFORM_WG;
use crate::algos::WinogradPlan;
use crate::config::AlgoConfig;
use crate::error::Result;
use crate::shape::ConvShape;

pub(crate) fn kernels(shape: &ConvShape, cfg: &AlgoConfig) -> Result<Vec<KernelProgram>> {
    let plan = WinogradPlan::new(shape)?;
    let (kn, cn, t_n) = (shape.out_channels, shape.in_channels, plan.tiles());
    let mm = gemm::kernel(&GemmSpec {
        name: "winograd_gemm",
        batch: 16,
        m: kn,
        n: t_n,
        kd: cn,
        tiles: (cfg.gemm_tile_m, cfg.gemm_tile_n, cfg.gemm_tile_k),
        a: (Buffer::WinoFilter, kn * cn),
        b: (Buffer::WinoInput, cn * t_n),
        c: (Buffer::WinoProduct, kn * t_n),
    });
    Ok(vec![from_image(shape, &plan), mm, to_output(shape, &plan)])
}

/// Thread coordinates of the tile a transform thread owns, and the guards
/// that switch off threads past the tile grid.
fn tile_coords(plan: &WinogradPlan) -> (Affine, Affine, Vec<Guard>) {
    let g = TRANSFORM_WG as i64;
    let tx = Affine::wg(0, g).plus(&Affine::tid_x(1));
    let ty = Affine::wg(1, g).plus(&Affine::tid_y(1));
    let guards = vec![
        Guard::below(tx.clone(), plan.tiles_x as i64),
        Guard::below(ty.clone(), plan.tiles_y as i64),
    ];
    (tx, ty, guards)
}

fn grid(plan: &WinogradPlan, planes: usize) -> (usize, usize, usize) {
    (
        plan.tiles_x.div_ceil(TRANSFORM_WG),
        plan.tiles_y.div_ceil(TRANSFORM_WG),
        planes,
    )
}

fn from_image(shape: &ConvShape, plan: &WinogradPlan) -> KernelProgram {
    let (cn, h, w) = (
        shape.in_channels as i64,
        shape.height as i64,
        shape.width as i64,
    );
    let t_n = plan.tiles() as i64;
    let mut b = Builder::new(
        "winograd_trans_from_image",
        (TRANSFORM_WG, TRANSFORM_WG),
        grid(plan, shape.in_channels),
    );
    let (tx, ty, inside) = tile_coords(plan);
    let c = Affine::wg(2, 1);
    let mut d = [[Reg(0); 4]; 4];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, reg) in row.iter_mut().enumerate() {
            let iy = ty.clone().scale(2).add_const(i as i64 - 1);
            let ix = tx.clone().scale(2).add_const(j as i64 - 1);
            let mut guards = inside.clone();
            guards.push(Guard::below(iy.clone(), h));
            guards.push(Guard::below(ix.clone(), w));
            let addr = c.clone().scale(h * w).plus(&iy.scale(w)).plus(&ix).scale(4);
            *reg = b.ld_global(Buffer::Input, addr, guards, RegClass::Image);
        }
    }
    let mut t = [[Reg(0); 4]; 4];
    for j in 0..4 {
        t[0][j] = b.sub(d[0][j], d[2][j]);
        t[1][j] = b.add(d[1][j], d[2][j]);
        t[2][j] = b.sub(d[2][j], d[1][j]);
        t[3][j] = b.sub(d[1][j], d[3][j]);
    }
    let mut v = [[Reg(0); 4]; 4];
    for i in 0..4 {
        v[i][0] = b.sub(t[i][0], t[i][2]);
        v[i][1] = b.add(t[i][1], t[i][2]);
        v[i][2] = b.sub(t[i][2], t[i][1]);
        v[i][3] = b.sub(t[i][1], t[i][3]);
    }
    let tile = ty.scale(plan.tiles_x as i64).plus(&tx);
    for pos in 0..16 {
        b.ialu(false, 1);
        let addr = Affine::constant(pos as i64 * cn)
            .plus(&c)
            .scale(t_n)
            .plus(&tile)
            .scale(4);
        b.st_global(v[pos / 4][pos % 4], Buffer::WinoInput, addr, inside.clone());
    }
    b.finish()
}

fn to_output(shape: &ConvShape, plan: &WinogradPlan) -> KernelProgram {
    let (oh, ow) = shape.out_hw();
    let (kn, oh, ow) = (shape.out_channels as i64, oh as i64, ow as i64);
    let t_n = plan.tiles() as i64;
    let mut b = Builder::new(
        "winograd_trans_to_output",
        (TRANSFORM_WG, TRANSFORM_WG),
        grid(plan, shape.out_channels),
    );
    let (tx, ty, inside) = tile_coords(plan);
    let k = Affine::wg(2, 1);
    let tile = ty.clone().scale(plan.tiles_x as i64).plus(&tx);
    let mut m = [[Reg(0); 4]; 4];
    for pos in 0..16 {
        let addr = Affine::constant(pos as i64 * kn)
            .plus(&k)
            .scale(t_n)
            .plus(&tile)
            .scale(4);
        m[pos / 4][pos % 4] =
            b.ld_global(Buffer::WinoProduct, addr, inside.clone(), RegClass::Image);
    }
    let mut t = [[Reg(0); 4]; 2];
    for j in 0..4 {
        let s = b.add(m[0][j], m[1][j]);
        t[0][j] = b.add(s, m[2][j]);
        let s = b.sub(m[1][j], m[2][j]);
        t[1][j] = b.sub(s, m[3][j]);
    }
    for (i, row) in t.iter().enumerate() {
        let s = b.add(row[0], row[1]);
        let y0 = b.add(s, row[2]);
        let s = b.sub(row[1], row[2]);
        let y1 = b.sub(s, row[3]);
        for (j, y) in [y0, y1].into_iter().enumerate() {
            let oy = ty.clone().scale(2).add_const(i as i64);
            let ox = tx.clone().scale(2).add_const(j as i64);
            let mut guards = inside.clone();
            guards.push(Guard::below(oy.clone(), oh));
            guards.push(Guard::below(ox.clone(), ow));
            let addr = k
                .clone()
                .scale(oh * ow)
                .plus(&oy.scale(ow))
                .plus(&ox)
                .scale(4);
            b.st_global(y, Buffer::Output, addr, guards);
        }
    }
    b.finish()
}
