//! Functional interpreter. Runs every workgroup with its threads in
//! lockstep, resolving affine addresses and applying the arithmetic, and can
//! optionally track shared-memory ordering between barriers.

use super::flat::{FlatOp, FlatProgram};
use super::lower::LoweredKernels;
use super::{Affine, Buffer, Guard, Instr, KernelProgram};
use crate::algos::{filter_transform_bank, WinogradPlan};
use crate::config::{AlgoConfig, Algorithm};
use crate::error::{Error, Result};
use crate::oracle::check_operands;
use crate::par;
use crate::shape::ConvShape;
use crate::tensor::{convert_layout, Layout, Tensor};

/// Global memory contents, one `f32` vector per [`Buffer`].
#[derive(Debug, Clone, Default)]
pub struct Buffers {
    data: Vec<Vec<f32>>,
}

impl Buffers {
    pub fn new() -> Self {
        Buffers {
            data: vec![Vec::new(); Buffer::ALL.len()],
        }
    }

    pub fn set(&mut self, buf: Buffer, values: Vec<f32>) {
        self.data[buf.index()] = values;
    }

    /// Resizes `buf` to `len` zeros.
    pub fn zeroed(&mut self, buf: Buffer, len: usize) {
        self.data[buf.index()] = vec![0.0; len];
    }

    pub fn get(&self, buf: Buffer) -> &[f32] {
        &self.data[buf.index()]
    }

    pub fn take(&mut self, buf: Buffer) -> Vec<f32> {
        std::mem::take(&mut self.data[buf.index()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardKind {
    /// A thread read a shared word another thread wrote since the last barrier.
    ReadAfterWrite,
    /// A thread overwrote a shared word another thread read since the last barrier.
    WriteAfterRead,
    /// Two threads wrote the same shared word between barriers.
    WriteAfterWrite,
}

/// An unordered pair of shared-memory accesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hazard {
    pub kind: HazardKind,
    pub workgroup: [i64; 3],
    /// Shared-memory word index.
    pub word: usize,
    /// Thread performing the later access.
    pub thread: usize,
}

const MAX_HAZARDS: usize = 64;
const MULTI: u32 = u32::MAX;

struct Tracker {
    epoch: u32,
    write_epoch: Vec<u32>,
    writer: Vec<u32>,
    read_epoch: Vec<u32>,
    reader: Vec<u32>,
    hazards: Vec<Hazard>,
}

impl Tracker {
    fn new(words: usize) -> Self {
        Tracker {
            epoch: 1,
            write_epoch: vec![0; words],
            writer: vec![0; words],
            read_epoch: vec![0; words],
            reader: vec![0; words],
            hazards: Vec::new(),
        }
    }

    fn flag(&mut self, kind: HazardKind, wg: [i64; 3], word: usize, thread: usize) {
        if self.hazards.len() < MAX_HAZARDS {
            self.hazards.push(Hazard {
                kind,
                workgroup: wg,
                word,
                thread,
            });
        }
    }

    fn read(&mut self, wg: [i64; 3], w: usize, t: u32) {
        if self.write_epoch[w] == self.epoch && self.writer[w] != t {
            self.flag(HazardKind::ReadAfterWrite, wg, w, t as usize);
        }
        if self.read_epoch[w] != self.epoch {
            self.read_epoch[w] = self.epoch;
            self.reader[w] = t;
        } else if self.reader[w] != t {
            self.reader[w] = MULTI;
        }
    }

    fn write(&mut self, wg: [i64; 3], w: usize, t: u32) {
        if self.read_epoch[w] == self.epoch && self.reader[w] != t {
            self.flag(HazardKind::WriteAfterRead, wg, w, t as usize);
        }
        if self.write_epoch[w] == self.epoch && self.writer[w] != t {
            self.flag(HazardKind::WriteAfterWrite, wg, w, t as usize);
        }
        self.write_epoch[w] = self.epoch;
        self.writer[w] = t;
    }
}

struct WgOutcome {
    writes: Vec<(u8, u32, f32)>,
    hazards: Vec<Hazard>,
}

fn word(addr: i64, what: &str) -> Result<usize> {
    if addr < 0 || addr % 4 != 0 {
        return Err(Error::Exec(format!(
            "misaligned or negative {what} address {addr}"
        )));
    }
    Ok((addr / 4) as usize)
}

fn guards_hold(g: &[Guard], tid: [i64; 2], wg: [i64; 3], loops: &[i64]) -> bool {
    g.iter().all(|g| g.holds(tid, wg, loops))
}

fn run_workgroup(
    p: &KernelProgram,
    flat: &FlatProgram,
    wg: [i64; 3],
    global: Option<&Buffers>,
    track: bool,
) -> Result<WgOutcome> {
    let (wx, wy) = (p.workgroup_dims.0 as usize, p.workgroup_dims.1 as usize);
    let threads = wx * wy;
    let nregs = p.num_regs();
    let mut regs = vec![0f32; threads * nregs];
    let words = (p.shared_bytes as usize).div_ceil(4);
    let mut shared = vec![0f32; words];
    let mut tracker = if track {
        Some(Tracker::new(words))
    } else {
        None
    };
    let mut loops = vec![0i64; flat.loop_vars];
    let mut writes = Vec::new();
    let tids: Vec<[i64; 2]> = (0..threads)
        .map(|t| [(t % wx) as i64, (t / wx) as i64])
        .collect();

    let mut pc = 0;
    flat.settle(&mut pc, &mut loops);
    while pc < flat.ops.len() {
        let FlatOp::Exec(ins) = &flat.ops[pc] else {
            unreachable!()
        };
        match ins {
            Instr::LdGlobal {
                dst,
                buf,
                addr,
                guards,
            } => {
                for (t, &tid) in tids.iter().enumerate() {
                    let mut v = 0.0;
                    if guards_hold(guards, tid, wg, &loops) {
                        if let Some(g) = global {
                            let w = word(addr.eval(tid, wg, &loops), buf.name())?;
                            let data = g.get(*buf);
                            v = *data.get(w).ok_or_else(|| {
                                Error::Exec(format!(
                                    "{} read out of bounds: word {w} of {}",
                                    buf.name(),
                                    data.len()
                                ))
                            })?;
                        }
                    }
                    regs[t * nregs + dst.0 as usize] = v;
                }
            }
            Instr::StGlobal {
                src,
                buf,
                addr,
                guards,
            } => {
                for (t, &tid) in tids.iter().enumerate() {
                    if guards_hold(guards, tid, wg, &loops) {
                        let w = word(addr.eval(tid, wg, &loops), buf.name())?;
                        if let Some(g) = global {
                            if w >= g.get(*buf).len() {
                                return Err(Error::Exec(format!(
                                    "{} write out of bounds: word {w}",
                                    buf.name()
                                )));
                            }
                        }
                        writes.push((
                            buf.index() as u8,
                            w as u32,
                            regs[t * nregs + src.0 as usize],
                        ));
                    }
                }
            }
            Instr::LdShared { dst, addr, guards } => {
                for (t, &tid) in tids.iter().enumerate() {
                    let mut v = 0.0;
                    if guards_hold(guards, tid, wg, &loops) {
                        let w = shared_word(addr, tid, wg, &loops, words)?;
                        if let Some(tr) = tracker.as_mut() {
                            tr.read(wg, w, t as u32);
                        }
                        v = shared[w];
                    }
                    regs[t * nregs + dst.0 as usize] = v;
                }
            }
            Instr::StShared { src, addr, guards } => {
                for (t, &tid) in tids.iter().enumerate() {
                    if guards_hold(guards, tid, wg, &loops) {
                        let w = shared_word(addr, tid, wg, &loops, words)?;
                        if let Some(tr) = tracker.as_mut() {
                            tr.write(wg, w, t as u32);
                        }
                        shared[w] = regs[t * nregs + src.0 as usize];
                    }
                }
            }
            Instr::Fma { dst, a, b, c } => {
                for r in regs.chunks_mut(nregs) {
                    r[dst.0 as usize] = r[a.0 as usize].mul_add(r[b.0 as usize], r[c.0 as usize]);
                }
            }
            Instr::Mul { dst, a, b } => {
                for r in regs.chunks_mut(nregs) {
                    r[dst.0 as usize] = r[a.0 as usize] * r[b.0 as usize];
                }
            }
            Instr::Add {
                dst,
                a,
                b,
                negate_b,
            } => {
                for r in regs.chunks_mut(nregs) {
                    let y = r[b.0 as usize];
                    r[dst.0 as usize] = r[a.0 as usize] + if *negate_b { -y } else { y };
                }
            }
            Instr::Ialu { .. } => {}
            Instr::Barrier => {
                if let Some(tr) = tracker.as_mut() {
                    tr.epoch += 1;
                }
            }
            Instr::Loop { .. } => unreachable!("loops are flattened"),
        }
        if !flat.step(&mut pc, &mut loops) {
            break;
        }
        flat.settle(&mut pc, &mut loops);
    }
    Ok(WgOutcome {
        writes,
        hazards: tracker.map(|t| t.hazards).unwrap_or_default(),
    })
}

fn shared_word(
    addr: &Affine,
    tid: [i64; 2],
    wg: [i64; 3],
    loops: &[i64],
    words: usize,
) -> Result<usize> {
    let w = word(addr.eval(tid, wg, loops), "shared")?;
    if w >= words {
        return Err(Error::Exec(format!(
            "shared access out of bounds: word {w} of {words}"
        )));
    }
    Ok(w)
}

fn workgroup_ids(p: &KernelProgram) -> Vec<[i64; 3]> {
    let (gx, gy, gz) = p.grid_dims;
    let mut ids = Vec::with_capacity(p.workgroups() as usize);
    for z in 0..gz as i64 {
        for y in 0..gy as i64 {
            for x in 0..gx as i64 {
                ids.push([x, y, z]);
            }
        }
    }
    ids
}

/// Executes `p` over its whole grid against `bufs`. Workgroups read the
/// buffers as they were at launch; their stores are applied afterwards in
/// workgroup order.
pub fn execute(p: &KernelProgram, bufs: &mut Buffers) -> Result<()> {
    let flat = FlatProgram::new(p);
    let ids = workgroup_ids(p);
    let snapshot: &Buffers = bufs;
    let outcomes = par::map(&ids, |&wg| {
        run_workgroup(p, &flat, wg, Some(snapshot), false)
    });
    let mut all = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        all.push(o?);
    }
    for o in all {
        for (b, w, v) in o.writes {
            bufs.data[b as usize][w as usize] = v;
        }
    }
    Ok(())
}

/// Runs `p` without data and reports shared-memory accesses that are not
/// ordered by a barrier. At most 64 hazards are returned.
pub fn find_hazards(p: &KernelProgram) -> Result<Vec<Hazard>> {
    let flat = FlatProgram::new(p);
    let ids = workgroup_ids(p);
    let outcomes = par::map(&ids, |&wg| run_workgroup(p, &flat, wg, None, true));
    let mut hazards = Vec::new();
    for o in outcomes {
        hazards.extend(o?.hazards);
        if hazards.len() >= MAX_HAZARDS {
            hazards.truncate(MAX_HAZARDS);
            break;
        }
    }
    Ok(hazards)
}

/// Runs every kernel of `kernels` in order on `input` and a KCRS filter
/// bank, allocating the intermediate buffers the algorithm needs, and
/// returns the CHW output.
pub fn execute_lowered(
    kernels: &LoweredKernels,
    cfg: &AlgoConfig,
    shape: &ConvShape,
    input: &Tensor,
    filters: &Tensor,
) -> Result<Tensor> {
    check_operands(input, filters, shape)?;
    filters.expect_layout(Layout::Kcrs)?;
    let (oh, ow) = shape.out_hw();
    let mut bufs = Buffers::new();
    bufs.set(Buffer::Input, input.data().to_vec());
    bufs.zeroed(Buffer::Output, shape.output_len());
    match cfg.algorithm {
        Algorithm::Ilpm => bufs.set(
            Buffer::Filter,
            convert_layout(filters, Layout::Crsk)?.into_data(),
        ),
        _ => bufs.set(Buffer::Filter, filters.data().to_vec()),
    }
    if cfg.algorithm == Algorithm::Im2col {
        bufs.zeroed(
            Buffer::Unrolled,
            shape.in_channels * shape.filter_h * shape.filter_w * oh * ow,
        );
    }
    if cfg.algorithm == Algorithm::Winograd {
        let plan = WinogradPlan::new(shape)?;
        bufs.set(Buffer::WinoFilter, filter_transform_bank(filters)?);
        bufs.zeroed(Buffer::WinoInput, 16 * shape.in_channels * plan.tiles());
        bufs.zeroed(Buffer::WinoProduct, 16 * shape.out_channels * plan.tiles());
    }
    for k in &kernels.kernels {
        execute(k, &mut bufs)?;
    }
    Tensor::new(
        Layout::Chw,
        &[shape.out_channels, oh, ow],
        bufs.take(Buffer::Output),
    )
}
