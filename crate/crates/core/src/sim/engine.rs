//! Warp-level timing simulation of one kernel launch.

use std::collections::VecDeque;

use super::memory::{conflict_degree_in, distinct_blocks, LruCache, SEGMENT_BYTES};
use super::{MachineConfig, SimMetrics};
use crate::error::{Error, Result};
use crate::ir::flat::{FlatOp, FlatProgram};
use crate::ir::{liveness, Buffer, Guard, Instr, KernelProgram};

/// Registers every thread holds beyond the program's live values
/// (ids, base pointers, loop counters).
pub const RESERVED_REGS: u64 = 8;

struct Warp {
    lanes: Vec<[i64; 2]>,
    pc: usize,
    loops: Vec<i64>,
    reg_ready: Vec<u64>,
    stall_until: u64,
    /// Cycle at which the next instruction's operands are ready.
    operands_ready: u64,
    at_barrier: bool,
    done: bool,
}

impl Warp {
    fn refresh(&mut self, decoded: &[Decoded]) {
        let mut t = self.stall_until;
        if let Some(d) = decoded.get(self.pc) {
            for &r in &d.regs[..d.nregs] {
                t = t.max(self.reg_ready[r as usize]);
            }
        }
        self.operands_ready = t;
    }
}

struct WgRun {
    id: [i64; 3],
    image: u64,
    warps: Vec<Warp>,
    arrived: usize,
    remaining: usize,
}

struct Cu {
    slots: Vec<Option<WgRun>>,
    /// Per scheduler: the `(slot, warp)` pairs it owns.
    owned: Vec<Vec<(usize, usize)>>,
    rr: Vec<usize>,
    alu_free: Vec<u64>,
    lsu_free: u64,
    next_time: u64,
    /// Per scheduler, aligned with `owned`: when each warp's operands are
    /// ready (`u64::MAX` while blocked or absent) and the unit it needs.
    keys: Vec<Vec<(u64, Unit)>>,
    warps_per_wg: usize,
    /// Per scheduler: no owned warp can issue before this cycle.
    sched_next: Vec<u64>,
    /// Occupied slots.
    live: usize,
    /// Some slot holds a workgroup whose warps have all finished.
    finished: bool,
    alu_busy: u64,
    lsu_busy: u64,
}

impl Cu {
    fn place(&self, slot: usize, wi: usize) -> (usize, usize) {
        let g = slot * self.warps_per_wg + wi;
        let n = self.keys.len();
        (g % n, g / n)
    }

    fn update_key(&mut self, slot: usize, wi: usize, decoded: &[Decoded]) {
        let (sched, idx) = self.place(slot, wi);
        self.keys[sched][idx] = match self.slots[slot].as_ref().map(|wg| &wg.warps[wi]) {
            Some(w) if !w.done && !w.at_barrier => (w.operands_ready, decoded[w.pc].unit),
            _ => (u64::MAX, Unit::Scalar),
        };
    }

    fn update_slot(&mut self, slot: usize, decoded: &[Decoded]) {
        for wi in 0..self.warps_per_wg {
            self.update_key(slot, wi, decoded);
        }
    }
}

#[derive(Clone, Copy)]
enum Unit {
    Alu,
    Lsu,
    Scalar,
}

/// Scoreboard view of one instruction: its unit and the registers it waits on.
#[derive(Clone, Copy)]
struct Decoded {
    unit: Unit,
    regs: [u32; 4],
    nregs: usize,
}

fn decode(flat: &FlatProgram) -> Vec<Decoded> {
    flat.ops
        .iter()
        .map(|op| match op {
            FlatOp::Exec(i) => {
                let mut regs = [0u32; 4];
                let mut n = 0;
                for r in i.srcs().into_iter().chain(i.dst()) {
                    regs[n] = r.0;
                    n += 1;
                }
                Decoded {
                    unit: unit_of(i),
                    regs,
                    nregs: n,
                }
            }
            _ => Decoded {
                unit: Unit::Scalar,
                regs: [0; 4],
                nregs: 0,
            },
        })
        .collect()
}

fn unit_of(i: &Instr) -> Unit {
    match i {
        Instr::LdGlobal { .. }
        | Instr::StGlobal { .. }
        | Instr::LdShared { .. }
        | Instr::StShared { .. } => Unit::Lsu,
        Instr::Fma { .. }
        | Instr::Mul { .. }
        | Instr::Add { .. }
        | Instr::Ialu { uniform: false } => Unit::Alu,
        Instr::Ialu { uniform: true } | Instr::Barrier | Instr::Loop { .. } => Unit::Scalar,
    }
}

fn shares_across_images(b: Buffer) -> bool {
    matches!(b, Buffer::Filter | Buffer::WinoFilter)
}

struct Sim<'a> {
    p: &'a KernelProgram,
    flat: &'a FlatProgram,
    decoded: &'a [Decoded],
    addrs: Vec<u64>,
    scratch: Vec<u64>,
    per_bank: Vec<u64>,
    bounds: Vec<(i64, [i64; 2], i64, i64)>,
    m: &'a MachineConfig,
    l2: LruCache,
    bw_free: f64,
    last_event: u64,
    metrics: SimMetrics,
    post_l2: Vec<u64>,
    barrier_releases: u64,
}

impl Sim<'_> {
    /// Byte addresses of the lanes whose guards hold. The warp-uniform part of
    /// every affine expression is evaluated once; lanes only add their tid terms.
    fn active_addrs(
        out: &mut Vec<u64>,
        bounds: &mut Vec<(i64, [i64; 2], i64, i64)>,
        w: &Warp,
        wg: [i64; 3],
        addr: &crate::ir::Affine,
        guards: &[Guard],
    ) {
        out.clear();
        let base = addr.eval([0, 0], wg, &w.loops);
        let [ax, ay] = addr.tid;
        bounds.clear();
        bounds.extend(
            guards
                .iter()
                .map(|g| (g.expr.eval([0, 0], wg, &w.loops), g.expr.tid, g.lo, g.hi)),
        );
        for &[tx, ty] in &w.lanes {
            let live = bounds.iter().all(|&(b, [gx, gy], lo, hi)| {
                let v = b + gx * tx + gy * ty;
                v >= lo && v < hi
            });
            if live {
                out.push((base + ax * tx + ay * ty) as u64);
            }
        }
    }

    fn new_warp(&self, wg_threads: usize, w: usize) -> Warp {
        let ws = self.m.warp_size as usize;
        let wx = self.p.workgroup_dims.0 as usize;
        let lanes = (w * ws..((w + 1) * ws).min(wg_threads))
            .map(|t| [(t % wx) as i64, (t / wx) as i64])
            .collect();
        let mut warp = Warp {
            lanes,
            pc: 0,
            loops: vec![0; self.flat.loop_vars],
            reg_ready: vec![0; self.p.num_regs()],
            stall_until: 0,
            operands_ready: 0,
            at_barrier: false,
            done: false,
        };
        self.flat.settle(&mut warp.pc, &mut warp.loops);
        warp.done = warp.pc >= self.flat.ops.len();
        warp
    }

    /// Issues the next instruction of warp `(slot, wi)` at `now`.
    fn issue(&mut self, cu: &mut Cu, sched: usize, slot: usize, wi: usize, now: u64) {
        let m = self.m;
        let wg = cu.slots[slot].as_ref().unwrap();
        let (wg_id, image) = (wg.id, wg.image);
        let w = &wg.warps[wi];
        let flat = self.flat;
        let FlatOp::Exec(ins) = &flat.ops[w.pc] else {
            unreachable!("warp pc rests on an instruction")
        };
        let mut addrs = std::mem::take(&mut self.addrs);
        let mut barrier = false;
        let mut dst_ready = None;
        match ins {
            Instr::Fma { .. }
            | Instr::Mul { .. }
            | Instr::Add { .. }
            | Instr::Ialu { uniform: false } => {
                let occ = m.alu_occupancy();
                cu.alu_free[sched] = now + occ;
                cu.alu_busy += occ;
                self.metrics.vector_inst += 1;
                if ins.dst().is_some() {
                    dst_ready = Some(now + occ + m.lat_alu as u64);
                }
            }
            Instr::Ialu { uniform: true } => self.metrics.scalar_inst += 1,
            Instr::Barrier => {
                self.metrics.scalar_inst += 1;
                barrier = true;
            }
            Instr::LdGlobal {
                buf, addr, guards, ..
            } => {
                self.metrics.vector_inst += 1;
                Self::active_addrs(&mut addrs, &mut self.bounds, w, wg_id, addr, guards);
                let line_bytes = m.l2_line_bytes as u64;
                let img = if shares_across_images(*buf) { 0 } else { image };
                let segments =
                    distinct_blocks(&addrs, SEGMENT_BYTES, &mut self.scratch).len() as u64;
                self.metrics.global_transactions += segments;
                let tx = segments.max(1);
                let lines = distinct_blocks(&addrs, line_bytes, &mut self.scratch);
                self.metrics.global_read_bytes_raw += lines.len() as u64 * line_bytes;
                let mut done_at = now + m.lat_l2 as u64;
                for &l in lines.iter() {
                    let key = ((buf.index() as u64) << 56) | (img << 44) | l;
                    if !self.l2.access(key) {
                        done_at = done_at.max(now + m.lat_global as u64);
                        self.metrics.global_read_bytes_post_l2 += line_bytes;
                        self.post_l2[buf.index()] += line_bytes;
                        self.bw_free = self.bw_free.max(now as f64)
                            + line_bytes as f64 / m.global_bytes_per_cycle;
                        done_at = done_at.max(self.bw_free.ceil() as u64);
                    }
                }
                cu.lsu_free = now + tx;
                cu.lsu_busy += tx;
                dst_ready = Some(if addrs.is_empty() { now + 1 } else { done_at });
            }
            Instr::StGlobal { addr, guards, .. } => {
                self.metrics.vector_inst += 1;
                Self::active_addrs(&mut addrs, &mut self.bounds, w, wg_id, addr, guards);
                let bytes = addrs.len() as u64 * 4;
                self.metrics.global_write_bytes += bytes;
                let segments =
                    distinct_blocks(&addrs, SEGMENT_BYTES, &mut self.scratch).len() as u64;
                self.metrics.global_transactions += segments;
                if bytes > 0 {
                    self.bw_free =
                        self.bw_free.max(now as f64) + bytes as f64 / m.global_bytes_per_cycle;
                    self.last_event = self.last_event.max(self.bw_free.ceil() as u64);
                }
                let tx = segments.max(1);
                cu.lsu_free = now + tx;
                cu.lsu_busy += tx;
            }
            Instr::LdShared { addr, guards, .. } | Instr::StShared { addr, guards, .. } => {
                self.metrics.vector_inst += 1;
                Self::active_addrs(&mut addrs, &mut self.bounds, w, wg_id, addr, guards);
                let degree =
                    conflict_degree_in(&addrs, m.banks, &mut self.scratch, &mut self.per_bank);
                self.metrics.bank_conflict_extra_cycles += degree.saturating_sub(1);
                let occ = degree.max(1);
                cu.lsu_free = now + occ;
                cu.lsu_busy += occ;
                if ins.is_load() {
                    dst_ready = Some(now + m.lat_shared as u64 + occ - 1);
                }
            }
            Instr::Loop { .. } => unreachable!(),
        }
        self.addrs = addrs;
        let wg = cu.slots[slot].as_mut().unwrap();
        let w = &mut wg.warps[wi];
        if let (Some(d), Some(t)) = (ins.dst(), dst_ready) {
            w.reg_ready[d.0 as usize] = t;
            self.last_event = self.last_event.max(t);
        }
        w.stall_until = now + 1;
        if !self.flat.step(&mut w.pc, &mut w.loops) {
            w.done = true;
        } else {
            self.flat.settle(&mut w.pc, &mut w.loops);
            w.done = w.pc >= self.flat.ops.len();
        }
        if w.done {
            wg.remaining -= 1;
            cu.finished |= wg.remaining == 0;
        } else {
            w.refresh(self.decoded);
        }
        if barrier {
            w.at_barrier = true;
            wg.arrived += 1;
            let live = wg.warps.len();
            if wg.arrived == live {
                self.barrier_releases += 1;
                wg.arrived = 0;
                for w in wg.warps.iter_mut() {
                    w.at_barrier = false;
                    w.stall_until = now + 1;
                    w.operands_ready = w.operands_ready.max(now + 1);
                }
                cu.sched_next
                    .iter_mut()
                    .for_each(|t| *t = (*t).min(now + 1));
                cu.update_slot(slot, self.decoded);
                return;
            }
        }
        cu.update_key(slot, wi, self.decoded);
    }
}

/// Simulates `p` on `m` with `resident_images` copies of the grid in flight.
pub fn simulate(
    p: &KernelProgram,
    m: &MachineConfig,
    resident_images: usize,
) -> Result<SimMetrics> {
    m.validate()?;
    let threads = p.threads_per_workgroup() as usize;
    if threads == 0 {
        return Err(Error::Launch(format!("{}: empty workgroup", p.name)));
    }
    let warps_per_wg = threads.div_ceil(m.warp_size as usize);
    if p.shared_bytes > m.shared_per_cu {
        return Err(Error::Launch(format!(
            "{}: {} B of shared memory per workgroup exceeds {} B per CU",
            p.name, p.shared_bytes, m.shared_per_cu
        )));
    }
    let max_live = liveness(p).max_live as u64;
    let regs_per_wg = (max_live + RESERVED_REGS) * m.warp_size as u64 * warps_per_wg as u64;
    let by_regs = m.regfile_per_cu as u64 / regs_per_wg;
    let by_warps = m.max_warps_per_cu as u64 / warps_per_wg as u64;
    let by_shared = m
        .shared_per_cu
        .checked_div(p.shared_bytes)
        .map_or(u64::MAX, u64::from);
    if by_regs == 0 {
        return Err(Error::Launch(format!(
            "{}: {} registers per thread exceed the register file",
            p.name,
            max_live + RESERVED_REGS
        )));
    }
    if by_warps == 0 {
        return Err(Error::Launch(format!(
            "{}: {warps_per_wg} warps per workgroup exceed the CU limit",
            p.name
        )));
    }
    let wgs_per_cu = by_regs.min(by_warps).min(by_shared) as usize;

    let mut queue: VecDeque<([i64; 3], u64)> = VecDeque::new();
    for image in 0..resident_images.max(1) as u64 {
        for z in 0..p.grid_dims.2 as i64 {
            for y in 0..p.grid_dims.1 as i64 {
                for x in 0..p.grid_dims.0 as i64 {
                    queue.push_back(([x, y, z], image));
                }
            }
        }
    }
    let total_wgs = queue.len() as u64;

    let scheds = m.schedulers_per_cu as usize;
    let mut cus: Vec<Cu> = (0..m.num_cus)
        .map(|_| {
            let mut owned = vec![Vec::new(); scheds];
            for slot in 0..wgs_per_cu {
                for w in 0..warps_per_wg {
                    owned[(slot * warps_per_wg + w) % scheds].push((slot, w));
                }
            }
            let keys = owned
                .iter()
                .map(|o| vec![(u64::MAX, Unit::Scalar); o.len()])
                .collect();
            Cu {
                slots: (0..wgs_per_cu).map(|_| None).collect(),
                owned,
                rr: vec![0; scheds],
                alu_free: vec![0; scheds],
                lsu_free: 0,
                next_time: 0,
                keys,
                warps_per_wg,
                sched_next: vec![0; scheds],
                live: 0,
                finished: false,
                alu_busy: 0,
                lsu_busy: 0,
            }
        })
        .collect();

    let flat = FlatProgram::new(p);
    let decoded = decode(&flat);
    let mut sim = Sim {
        p,
        flat: &flat,
        decoded: &decoded,
        addrs: Vec::with_capacity(m.warp_size as usize),
        scratch: Vec::with_capacity(m.warp_size as usize),
        per_bank: Vec::with_capacity(m.banks as usize),
        bounds: Vec::new(),
        m,
        l2: LruCache::new(m.l2_lines as usize),
        bw_free: 0.0,
        last_event: 0,
        metrics: SimMetrics::default(),
        post_l2: vec![0; Buffer::ALL.len()],
        barrier_releases: 0,
    };

    let launch = |sim: &Sim, id: [i64; 3], image: u64, now: u64| -> WgRun {
        let warps: Vec<Warp> = (0..warps_per_wg)
            .map(|w| {
                let mut warp = sim.new_warp(threads, w);
                warp.stall_until = now;
                warp.refresh(sim.decoded);
                warp
            })
            .collect();
        let remaining = warps.iter().filter(|w| !w.done).count();
        WgRun {
            id,
            image,
            warps,
            arrived: 0,
            remaining,
        }
    };

    // Initial dispatch, spreading workgroups across CUs first.
    'fill: for slot in 0..wgs_per_cu {
        for cu in cus.iter_mut() {
            let Some((id, image)) = queue.pop_front() else {
                break 'fill;
            };
            let run = launch(&sim, id, image, 0);
            cu.finished |= run.remaining == 0;
            cu.slots[slot] = Some(run);
            cu.update_slot(slot, sim.decoded);
            cu.live += 1;
        }
    }

    let mut now: u64 = 0;
    loop {
        let mut any_live = false;
        let mut next = u64::MAX;
        for cu in cus.iter_mut() {
            // Retire finished workgroups and refill their slots.
            if cu.finished {
                cu.finished = false;
                for slot in 0..cu.slots.len() {
                    if cu.slots[slot].as_ref().is_some_and(|wg| wg.remaining == 0) {
                        let run = queue
                            .pop_front()
                            .map(|(id, image)| launch(&sim, id, image, now));
                        match &run {
                            Some(r) => cu.finished |= r.remaining == 0,
                            None => cu.live -= 1,
                        }
                        cu.slots[slot] = run;
                        cu.update_slot(slot, sim.decoded);
                        cu.next_time = now;
                        cu.sched_next.iter_mut().for_each(|t| *t = now);
                    }
                }
            }
            if cu.live == 0 {
                continue;
            }
            any_live = true;
            if cu.next_time > now {
                next = next.min(cu.next_time);
                continue;
            }
            let mut cu_next = u64::MAX;
            for sched in 0..scheds {
                if cu.sched_next[sched] > now {
                    cu_next = cu_next.min(cu.sched_next[sched]);
                    continue;
                }
                let mut sched_next = u64::MAX;
                let owned = cu.owned[sched].len();
                for _ in 0..m.issue_width {
                    let mut pick = None;
                    let rr = cu.rr[sched];
                    let keys = &cu.keys[sched];
                    for idx in (rr..owned).chain(0..rr) {
                        let (ready, unit) = keys[idx];
                        if ready == u64::MAX {
                            continue;
                        }
                        let t = match unit {
                            Unit::Alu => ready.max(cu.alu_free[sched]),
                            Unit::Lsu => ready.max(cu.lsu_free),
                            Unit::Scalar => ready,
                        };
                        if t <= now {
                            pick = Some((idx, cu.owned[sched][idx]));
                            break;
                        }
                        sched_next = sched_next.min(t);
                    }
                    match pick {
                        Some((idx, (slot, wi))) => {
                            sim.issue(cu, sched, slot, wi, now);
                            cu.rr[sched] = (idx + 1) % owned;
                            sched_next = sched_next.min(now + 1);
                        }
                        None => break,
                    }
                }
                cu.sched_next[sched] = sched_next;
            }
            cu_next = cu_next.min(cu.sched_next.iter().copied().min().unwrap_or(u64::MAX));
            if cu.finished {
                cu_next = now + 1;
            }
            cu.next_time = cu_next;
            next = next.min(cu_next);
        }
        if !any_live && queue.is_empty() {
            break;
        }
        if next == u64::MAX {
            return Err(Error::Exec(format!(
                "{}: simulation deadlocked at cycle {now}",
                p.name
            )));
        }
        now = next.max(now + 1);
    }

    let cycles = now
        .max(sim.last_event)
        .max(sim.bw_free.ceil() as u64)
        .max(1);
    let mut metrics = sim.metrics;
    metrics.cycles = cycles;
    metrics.shared_bytes_per_wg = p.shared_bytes as u64;
    metrics.max_live_regs = max_live;
    metrics.barrier_count = sim.barrier_releases / total_wgs.max(1);
    metrics.wavefronts = total_wgs * warps_per_wg as u64;
    metrics.workgroups_per_cu = wgs_per_cu as u64;
    let alu_busy: u64 = cus.iter().map(|c| c.alu_busy).sum();
    let lsu_busy: u64 = cus.iter().map(|c| c.lsu_busy).sum();
    metrics.alu_busy_fraction =
        (alu_busy as f64 / (cycles as f64 * (m.num_cus * m.schedulers_per_cu) as f64)).min(1.0);
    metrics.mem_unit_busy_fraction =
        (lsu_busy as f64 / (cycles as f64 * m.num_cus as f64)).min(1.0);
    for b in Buffer::ALL {
        if sim.post_l2[b.index()] > 0 {
            metrics
                .post_l2_by_buffer
                .insert(b.name().to_string(), sim.post_l2[b.index()]);
        }
    }
    Ok(metrics)
}
