//! Abstract GPU kernel representation.
//!
//! A [`KernelProgram`] is the instruction stream every thread of a launch
//! executes. Memory operands are affine byte addresses over the thread and
//! workgroup ids and the enclosing loop counters; loops keep symbolic trip
//! counts. Lowerings unroll anything that indexes registers (accumulator
//! tiles, filter taps of a dot product), because registers cannot be indexed
//! by a loop counter.

pub mod analysis;
mod builder;
pub mod flat;
pub mod interp;
pub mod lower;
pub mod text;
pub mod unroll;

pub use analysis::{
    barrier_census, dynamic_counts, liveness, register_pressure, schedule, DynamicCounts,
    RegisterReport,
};
pub use builder::Builder;
pub use interp::{execute, execute_lowered, find_hazards, Buffers, Hazard, HazardKind};
pub use lower::{compile, lower, LoweredKernels};
pub use text::to_text;
pub use unroll::{unroll, UNROLL_BUDGET};

use std::fmt;

/// Virtual register id; dense per program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(pub u32);

/// What a register holds, for per-class pressure reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegClass {
    Accumulator,
    Filter,
    Image,
    Temp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LoopVar(pub u16);

/// Global buffers a kernel can address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Buffer {
    Input,
    Filter,
    Output,
    /// im2col matrix.
    Unrolled,
    /// Winograd transformed input `[pos][C][tiles]`.
    WinoInput,
    /// Winograd transformed filters `[pos][K][C]`.
    WinoFilter,
    /// Winograd per-position products `[pos][K][tiles]`.
    WinoProduct,
}

impl Buffer {
    pub const ALL: [Buffer; 7] = [
        Buffer::Input,
        Buffer::Filter,
        Buffer::Output,
        Buffer::Unrolled,
        Buffer::WinoInput,
        Buffer::WinoFilter,
        Buffer::WinoProduct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Buffer::Input => "input",
            Buffer::Filter => "filter",
            Buffer::Output => "output",
            Buffer::Unrolled => "unrolled",
            Buffer::WinoInput => "wino_input",
            Buffer::WinoFilter => "wino_filter",
            Buffer::WinoProduct => "wino_product",
        }
    }

    pub fn index(self) -> usize {
        Buffer::ALL.iter().position(|&b| b == self).unwrap()
    }
}

/// `constant + tid.x*a + tid.y*b + wg.{x,y,z}*c + sum(loop_i * d_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Affine {
    pub constant: i64,
    pub tid: [i64; 2],
    pub wg: [i64; 3],
    pub loops: Vec<(LoopVar, i64)>,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine {
            constant: c,
            ..Default::default()
        }
    }

    pub fn tid_x(k: i64) -> Self {
        Affine {
            tid: [k, 0],
            ..Default::default()
        }
    }

    pub fn tid_y(k: i64) -> Self {
        Affine {
            tid: [0, k],
            ..Default::default()
        }
    }

    pub fn wg(axis: usize, k: i64) -> Self {
        let mut a = Affine::default();
        a.wg[axis] = k;
        a
    }

    pub fn var(v: LoopVar, k: i64) -> Self {
        Affine {
            loops: vec![(v, k)],
            ..Default::default()
        }
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.constant += other.constant;
        for i in 0..2 {
            self.tid[i] += other.tid[i];
        }
        for i in 0..3 {
            self.wg[i] += other.wg[i];
        }
        for &(v, k) in &other.loops {
            match self.loops.iter_mut().find(|(w, _)| *w == v) {
                Some(e) => e.1 += k,
                None => self.loops.push((v, k)),
            }
        }
        self.loops.retain(|&(_, k)| k != 0);
        self.loops.sort();
        self
    }

    pub fn add_const(mut self, c: i64) -> Self {
        self.constant += c;
        self
    }

    pub fn scale(mut self, k: i64) -> Self {
        self.constant *= k;
        self.tid.iter_mut().for_each(|t| *t *= k);
        self.wg.iter_mut().for_each(|t| *t *= k);
        self.loops.iter_mut().for_each(|(_, t)| *t *= k);
        self.loops.retain(|&(_, k)| k != 0);
        self
    }

    /// True when the value is the same for every thread of a workgroup.
    pub fn is_uniform(&self) -> bool {
        self.tid == [0, 0]
    }

    #[inline]
    pub fn eval(&self, tid: [i64; 2], wg: [i64; 3], loops: &[i64]) -> i64 {
        let mut v = self.constant + self.tid[0] * tid[0] + self.tid[1] * tid[1];
        v += self.wg[0] * wg[0] + self.wg[1] * wg[1] + self.wg[2] * wg[2];
        for &(var, k) in &self.loops {
            v += k * loops[var.0 as usize];
        }
        v
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for (name, k) in [
            ("tx", self.tid[0]),
            ("ty", self.tid[1]),
            ("wx", self.wg[0]),
            ("wy", self.wg[1]),
            ("wz", self.wg[2]),
        ] {
            if k != 0 {
                write!(f, " {:+}*{}", k, name)?;
            }
        }
        for &(v, k) in &self.loops {
            write!(f, " {:+}*L{}", k, v.0)?;
        }
        Ok(())
    }
}

/// Lane predicate `lo <= expr < hi`. A memory op whose guard fails is
/// predicated off: loads produce zero, stores are dropped, nothing is fetched.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Guard {
    pub expr: Affine,
    pub lo: i64,
    pub hi: i64,
}

impl Guard {
    pub fn below(expr: Affine, hi: i64) -> Self {
        Guard { expr, lo: 0, hi }
    }

    #[inline]
    pub fn holds(&self, tid: [i64; 2], wg: [i64; 3], loops: &[i64]) -> bool {
        let v = self.expr.eval(tid, wg, loops);
        v >= self.lo && v < self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    LdGlobal {
        dst: Reg,
        buf: Buffer,
        addr: Affine,
        guards: Vec<Guard>,
    },
    StGlobal {
        src: Reg,
        buf: Buffer,
        addr: Affine,
        guards: Vec<Guard>,
    },
    LdShared {
        dst: Reg,
        addr: Affine,
        guards: Vec<Guard>,
    },
    StShared {
        src: Reg,
        addr: Affine,
        guards: Vec<Guard>,
    },
    /// `dst = a * b + c`
    Fma {
        dst: Reg,
        a: Reg,
        b: Reg,
        c: Reg,
    },
    /// `dst = a * b`
    Mul {
        dst: Reg,
        a: Reg,
        b: Reg,
    },
    /// `dst = a + b`, or `a - b` when `negate_b`.
    Add {
        dst: Reg,
        a: Reg,
        b: Reg,
        negate_b: bool,
    },
    /// Address or index arithmetic. Uniform ones run on the scalar unit.
    Ialu {
        uniform: bool,
    },
    Barrier,
    Loop {
        var: LoopVar,
        count: u32,
        body: Vec<Instr>,
    },
}

impl Instr {
    pub fn dst(&self) -> Option<Reg> {
        match self {
            Instr::LdGlobal { dst, .. }
            | Instr::LdShared { dst, .. }
            | Instr::Fma { dst, .. }
            | Instr::Mul { dst, .. }
            | Instr::Add { dst, .. } => Some(*dst),
            _ => None,
        }
    }

    pub fn srcs(&self) -> Vec<Reg> {
        match self {
            Instr::StGlobal { src, .. } | Instr::StShared { src, .. } => vec![*src],
            Instr::Fma { a, b, c, .. } => vec![*a, *b, *c],
            Instr::Mul { a, b, .. } | Instr::Add { a, b, .. } => vec![*a, *b],
            _ => vec![],
        }
    }

    pub fn is_load(&self) -> bool {
        matches!(self, Instr::LdGlobal { .. } | Instr::LdShared { .. })
    }

    pub fn is_store(&self) -> bool {
        matches!(self, Instr::StGlobal { .. } | Instr::StShared { .. })
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            Instr::LdGlobal { .. } => "LD_GLOBAL",
            Instr::StGlobal { .. } => "ST_GLOBAL",
            Instr::LdShared { .. } => "LD_SHARED",
            Instr::StShared { .. } => "ST_SHARED",
            Instr::Fma { .. } => "FMA",
            Instr::Mul { .. } => "MUL",
            Instr::Add { .. } => "ADD",
            Instr::Ialu { .. } => "IALU",
            Instr::Barrier => "BARRIER",
            Instr::Loop { .. } => "LOOP",
        }
    }
}

/// One kernel launch.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProgram {
    pub name: String,
    /// Threads per workgroup along x and y.
    pub workgroup_dims: (u32, u32),
    /// Workgroups along x, y and z.
    pub grid_dims: (u32, u32, u32),
    pub shared_bytes: u32,
    pub body: Vec<Instr>,
    /// Class of every virtual register, indexed by `Reg.0`.
    pub reg_classes: Vec<RegClass>,
    pub loop_vars: u16,
}

impl KernelProgram {
    pub fn threads_per_workgroup(&self) -> u32 {
        self.workgroup_dims.0 * self.workgroup_dims.1
    }

    pub fn workgroups(&self) -> u64 {
        self.grid_dims.0 as u64 * self.grid_dims.1 as u64 * self.grid_dims.2 as u64
    }

    pub fn num_regs(&self) -> usize {
        self.reg_classes.len()
    }
}
