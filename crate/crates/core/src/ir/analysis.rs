//! Static analyses over kernel programs: dynamic instruction counts,
//! barrier census, load pipelining and live-range register pressure.

use std::collections::BTreeMap;

use super::{Instr, KernelProgram, LoopVar, Reg, RegClass};

/// Outstanding-load depth used when programs are prepared for simulation.
pub const COMPILER_PIPELINE_DEPTH: usize = 8;

/// Per-thread dynamic instruction counts (loop trips multiplied out).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DynamicCounts {
    pub ld_global: u64,
    pub st_global: u64,
    pub ld_shared: u64,
    pub st_shared: u64,
    pub fma: u64,
    pub mul: u64,
    pub add: u64,
    pub ialu_vector: u64,
    pub ialu_scalar: u64,
    pub barrier: u64,
}

impl DynamicCounts {
    fn add_scaled(&mut self, o: &DynamicCounts, k: u64) {
        self.ld_global += o.ld_global * k;
        self.st_global += o.st_global * k;
        self.ld_shared += o.ld_shared * k;
        self.st_shared += o.st_shared * k;
        self.fma += o.fma * k;
        self.mul += o.mul * k;
        self.add += o.add * k;
        self.ialu_vector += o.ialu_vector * k;
        self.ialu_scalar += o.ialu_scalar * k;
        self.barrier += o.barrier * k;
    }

    /// Instructions executed on the vector unit.
    pub fn vector(&self) -> u64 {
        self.ld_global
            + self.st_global
            + self.ld_shared
            + self.st_shared
            + self.fma
            + self.mul
            + self.add
            + self.ialu_vector
    }

    pub fn scalar(&self) -> u64 {
        self.ialu_scalar + self.barrier
    }

    /// Counts scaled to the whole launch.
    pub fn total(&self, p: &KernelProgram) -> DynamicCounts {
        let mut t = DynamicCounts::default();
        t.add_scaled(self, p.threads_per_workgroup() as u64 * p.workgroups());
        t
    }
}

fn count_block(block: &[Instr]) -> DynamicCounts {
    let mut c = DynamicCounts::default();
    for i in block {
        match i {
            Instr::LdGlobal { .. } => c.ld_global += 1,
            Instr::StGlobal { .. } => c.st_global += 1,
            Instr::LdShared { .. } => c.ld_shared += 1,
            Instr::StShared { .. } => c.st_shared += 1,
            Instr::Fma { .. } => c.fma += 1,
            Instr::Mul { .. } => c.mul += 1,
            Instr::Add { .. } => c.add += 1,
            Instr::Ialu { uniform: true } => c.ialu_scalar += 1,
            Instr::Ialu { uniform: false } => c.ialu_vector += 1,
            Instr::Barrier => c.barrier += 1,
            Instr::Loop { count, body, .. } => c.add_scaled(&count_block(body), *count as u64),
        }
    }
    c
}

/// Dynamic per-thread instruction counts of `p`.
pub fn dynamic_counts(p: &KernelProgram) -> DynamicCounts {
    count_block(&p.body)
}

/// Dynamic barrier executions per workgroup.
pub fn barrier_census(p: &KernelProgram) -> u64 {
    dynamic_counts(p).barrier
}

/// Reorders loads inside every straight-line region so that up to `depth`
/// global loads and `depth` shared loads are outstanding at once. Loads never
/// move across stores, barriers or loop boundaries.
pub fn schedule(p: &KernelProgram, depth: usize) -> KernelProgram {
    let depth = depth.max(1);
    let mut out = p.clone();
    out.body = schedule_block(&p.body, depth);
    out
}

fn schedule_block(block: &[Instr], depth: usize) -> Vec<Instr> {
    let mut out = Vec::with_capacity(block.len());
    let mut segment: Vec<Instr> = Vec::new();
    for i in block {
        match i {
            Instr::Loop { var, count, body } => {
                schedule_segment(std::mem::take(&mut segment), depth, &mut out);
                out.push(Instr::Loop {
                    var: *var,
                    count: *count,
                    body: schedule_block(body, depth),
                });
            }
            Instr::Barrier => {
                schedule_segment(std::mem::take(&mut segment), depth, &mut out);
                out.push(Instr::Barrier);
            }
            other => segment.push(other.clone()),
        }
    }
    schedule_segment(segment, depth, &mut out);
    out
}

fn schedule_segment(seg: Vec<Instr>, depth: usize, out: &mut Vec<Instr>) {
    if seg.is_empty() {
        return;
    }
    // Remaining uses of each load result within the segment.
    let mut uses: BTreeMap<Reg, usize> = BTreeMap::new();
    let mut load_kind: BTreeMap<Reg, usize> = BTreeMap::new();
    for i in &seg {
        match i {
            Instr::LdGlobal { dst, .. } => {
                load_kind.insert(*dst, 0);
            }
            Instr::LdShared { dst, .. } => {
                load_kind.insert(*dst, 1);
            }
            _ => {}
        }
    }
    for i in &seg {
        for s in i.srcs() {
            if load_kind.contains_key(&s) {
                *uses.entry(s).or_default() += 1;
            }
        }
    }
    let used: std::collections::BTreeSet<Reg> = uses
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(&r, _)| r)
        .collect();
    let mut outstanding = [0usize; 2];
    let mut pending: Vec<Option<Instr>> = seg.into_iter().map(Some).collect();
    let mut emitted_loads: BTreeMap<Reg, usize> = BTreeMap::new();
    let n = pending.len();
    let mut first = 0;

    let emit_load = |idx: usize,
                     pending: &mut Vec<Option<Instr>>,
                     outstanding: &mut [usize; 2],
                     emitted: &mut BTreeMap<Reg, usize>,
                     out: &mut Vec<Instr>| {
        let ins = pending[idx].take().expect("pending load");
        let dst = ins.dst().expect("load dst");
        let kind = load_kind[&dst];
        if used.contains(&dst) {
            outstanding[kind] += 1;
            emitted.insert(dst, kind);
        }
        out.push(ins);
    };

    loop {
        while first < n && pending[first].is_none() {
            first += 1;
        }
        if first == n {
            break;
        }
        // Hoist the earliest load whose budget allows it, stopping at the first store.
        let mut hoisted = false;
        for j in first..n {
            let Some(ins) = &pending[j] else { continue };
            if ins.is_store() {
                break;
            }
            if ins.is_load() {
                let kind = load_kind[&ins.dst().unwrap()];
                if outstanding[kind] < depth {
                    emit_load(j, &mut pending, &mut outstanding, &mut emitted_loads, out);
                    hoisted = true;
                }
                break;
            }
        }
        if hoisted {
            continue;
        }
        // Otherwise issue the next instruction in order, pulling in any loads it needs.
        let ins = pending[first].as_ref().unwrap().clone();
        if ins.is_load() {
            emit_load(
                first,
                &mut pending,
                &mut outstanding,
                &mut emitted_loads,
                out,
            );
            continue;
        }
        for s in ins.srcs() {
            if load_kind.contains_key(&s) && !emitted_loads.contains_key(&s) {
                if let Some(j) =
                    (first..n).find(|&j| pending[j].as_ref().and_then(|i| i.dst()) == Some(s))
                {
                    emit_load(j, &mut pending, &mut outstanding, &mut emitted_loads, out);
                }
            }
        }
        pending[first] = None;
        for s in ins.srcs() {
            if let Some(&kind) = emitted_loads.get(&s) {
                let u = uses.get_mut(&s).unwrap();
                *u -= 1;
                if *u == 0 {
                    outstanding[kind] -= 1;
                    emitted_loads.remove(&s);
                }
            }
        }
        out.push(ins);
    }
}

/// Live-register report of a program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegisterReport {
    /// Widest simultaneous live set over all program points.
    pub max_live: usize,
    /// Per register class, the widest live set of that class alone.
    pub max_live_by_class: BTreeMap<RegClass, usize>,
    /// Widest live set inside each loop body.
    pub per_loop_breakdown: BTreeMap<LoopVar, usize>,
    /// Per loop, per class maxima inside the body.
    pub per_loop_by_class: BTreeMap<LoopVar, BTreeMap<RegClass, usize>>,
}

impl RegisterReport {
    pub fn class(&self, c: RegClass) -> usize {
        self.max_live_by_class.get(&c).copied().unwrap_or(0)
    }

    pub fn loop_class(&self, v: LoopVar, c: RegClass) -> usize {
        self.per_loop_by_class
            .get(&v)
            .and_then(|m| m.get(&c))
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Clone, PartialEq, Eq)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(n: usize) -> Self {
        BitSet(vec![0; n.div_ceil(64)])
    }
    fn insert(&mut self, r: Reg) {
        self.0[r.0 as usize / 64] |= 1 << (r.0 % 64);
    }
    fn remove(&mut self, r: Reg) {
        self.0[r.0 as usize / 64] &= !(1 << (r.0 % 64));
    }
    fn union(&mut self, o: &BitSet) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            *a |= b;
        }
    }
    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64)
                .filter(move |b| bits & (1 << b) != 0)
                .map(move |b| w * 64 + b)
        })
    }
}

struct Liveness<'a> {
    classes: &'a [RegClass],
    report: RegisterReport,
    loop_stack: Vec<LoopVar>,
}

impl Liveness<'_> {
    fn record(&mut self, live: &BitSet) {
        let mut total = 0;
        let mut per: BTreeMap<RegClass, usize> = BTreeMap::new();
        for r in live.iter() {
            total += 1;
            *per.entry(self.classes[r]).or_default() += 1;
        }
        self.report.max_live = self.report.max_live.max(total);
        for (&c, &n) in &per {
            let e = self.report.max_live_by_class.entry(c).or_default();
            *e = (*e).max(n);
        }
        for &v in &self.loop_stack {
            let e = self.report.per_loop_breakdown.entry(v).or_default();
            *e = (*e).max(total);
            let m = self.report.per_loop_by_class.entry(v).or_default();
            for (&c, &n) in &per {
                let e = m.entry(c).or_default();
                *e = (*e).max(n);
            }
        }
    }

    /// Returns the live-in set of `block` given its live-out set.
    fn block(&mut self, block: &[Instr], live_out: &BitSet, record: bool) -> BitSet {
        let mut live = live_out.clone();
        for i in block.iter().rev() {
            match i {
                Instr::Loop { var, body, .. } => {
                    let mut out = live.clone();
                    loop {
                        let inb = self.block(body, &out, false);
                        let mut next = live.clone();
                        next.union(&inb);
                        if next == out {
                            break;
                        }
                        out = next;
                    }
                    if record {
                        self.loop_stack.push(*var);
                    }
                    live = self.block(body, &out, record);
                    if record {
                        self.loop_stack.pop();
                    }
                }
                other => {
                    let dst = other.dst();
                    if let Some(d) = dst {
                        live.remove(d);
                    }
                    for s in other.srcs() {
                        live.insert(s);
                    }
                    if record {
                        let mut point = live.clone();
                        if let Some(d) = dst {
                            point.insert(d);
                        }
                        self.record(&point);
                    }
                }
            }
        }
        live
    }
}

/// Live-range analysis of `p` as written.
pub fn liveness(p: &KernelProgram) -> RegisterReport {
    let mut l = Liveness {
        classes: &p.reg_classes,
        report: RegisterReport::default(),
        loop_stack: Vec::new(),
    };
    let empty = BitSet::new(p.num_regs());
    l.block(&p.body, &empty, true);
    l.report
}

/// Register pressure after pipelining loads `pipeline_depth` deep.
pub fn register_pressure(p: &KernelProgram, pipeline_depth: usize) -> RegisterReport {
    liveness(&schedule(p, pipeline_depth))
}
