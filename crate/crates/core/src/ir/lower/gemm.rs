//! Batched tiled GEMM `C[z] = A[z] * B[z]` with double-buffered shared tiles.

use super::super::{Affine, Buffer, Builder, Guard, KernelProgram, RegClass};

pub(crate) struct GemmSpec<'a> {
    pub name: &'a str,
    pub batch: usize,
    pub m: usize,
    pub n: usize,
    pub kd: usize,
    pub tiles: (usize, usize, usize),
    /// Operand buffers with their per-batch element strides.
    pub a: (Buffer, usize),
    pub b: (Buffer, usize),
    pub c: (Buffer, usize),
}

/// Workgroup `(min(tn,16), min(tm,16))`; each thread owns a strided
/// `tm/dy x tn/dx` micro-tile. One barrier per k-tile; the k-tile loop is
/// unrolled by two so the tile being filled never aliases the one being read.
pub(crate) fn kernel(g: &GemmSpec) -> KernelProgram {
    let (tm, tn, tk) = g.tiles;
    let (dx, dy) = (tn.min(16), tm.min(16));
    let (mi, nj) = (tm / dy, tn / dx);
    let ktiles = g.kd.div_ceil(tk);
    let grid = (g.n.div_ceil(tn), g.m.div_ceil(tm), g.batch);
    let mut b = Builder::new(g.name, (dx, dy), grid);
    let a_sh = [b.alloc_shared(tm * tk * 4), b.alloc_shared(tm * tk * 4)];
    let b_sh = [b.alloc_shared(tk * tn * 4), b.alloc_shared(tk * tn * 4)];
    let acc = b.accumulators(mi * nj);
    let row_base = Affine::wg(1, tm as i64);
    let col_base = Affine::wg(0, tn as i64);
    let a_plane = Affine::wg(2, g.a.1 as i64);
    let b_plane = Affine::wg(2, g.b.1 as i64);

    b.double_buffered(ktiles, |b, kt, p| {
        let k0 = kt.scale(tk as i64);
        // A tile: tm rows x tk columns.
        super::coop_load(
            b,
            (dx, dy),
            &super::Window {
                buf: g.a.0,
                plane: a_plane.clone(),
                row0: row_base.clone(),
                col0: k0.clone(),
                plane_rows: g.m as i64,
                plane_cols: g.kd as i64,
                rows: tm,
                cols: tk,
                shared_base: Affine::constant(a_sh[p]),
                shared_pitch: tk,
            },
        );
        // B tile: tk rows x tn columns.
        super::coop_load(
            b,
            (dx, dy),
            &super::Window {
                buf: g.b.0,
                plane: b_plane.clone(),
                row0: k0,
                col0: col_base.clone(),
                plane_rows: g.kd as i64,
                plane_cols: g.n as i64,
                rows: tk,
                cols: tn,
                shared_base: Affine::constant(b_sh[p]),
                shared_pitch: tn,
            },
        );
        b.barrier();
        b.loop_n(tk, |b, kk| {
            let a_vals: Vec<_> = (0..mi)
                .map(|i| {
                    let row = Affine::tid_y(1).add_const((i * dy) as i64);
                    let addr = row
                        .scale(tk as i64 * 4)
                        .plus(&Affine::var(kk, 4))
                        .add_const(a_sh[p]);
                    b.ld_shared(addr, vec![], RegClass::Filter)
                })
                .collect();
            let b_vals: Vec<_> = (0..nj)
                .map(|j| {
                    let col = Affine::tid_x(1).add_const((j * dx) as i64);
                    let addr = Affine::var(kk, tn as i64 * 4)
                        .plus(&col.scale(4))
                        .add_const(b_sh[p]);
                    b.ld_shared(addr, vec![], RegClass::Image)
                })
                .collect();
            for i in 0..mi {
                for j in 0..nj {
                    b.fma_into(acc[i * nj + j], a_vals[i], b_vals[j]);
                }
            }
        });
    });

    let c_plane = Affine::wg(2, g.c.1 as i64);
    for i in 0..mi {
        for j in 0..nj {
            let row = row_base
                .clone()
                .plus(&Affine::tid_y(1))
                .add_const((i * dy) as i64);
            let col = col_base
                .clone()
                .plus(&Affine::tid_x(1))
                .add_const((j * dx) as i64);
            let guards = vec![
                Guard::below(row.clone(), g.m as i64),
                Guard::below(col.clone(), g.n as i64),
            ];
            let addr = c_plane
                .clone()
                .plus(&row.scale(g.n as i64))
                .plus(&col)
                .scale(4);
            b.st_global(acc[i * nj + j], g.c.0, addr, guards);
        }
    }
    b.finish()
}
