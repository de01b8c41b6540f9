use super::{Affine, Buffer, Guard, Instr, KernelProgram, LoopVar, Reg, RegClass};

/// Incremental construction of a [`KernelProgram`].
pub struct Builder {
    name: String,
    workgroup_dims: (u32, u32),
    grid_dims: (u32, u32, u32),
    shared_bytes: u32,
    stack: Vec<Vec<Instr>>,
    reg_classes: Vec<RegClass>,
    loop_vars: u16,
}

impl Builder {
    pub fn new(
        name: &str,
        workgroup_dims: (usize, usize),
        grid_dims: (usize, usize, usize),
    ) -> Self {
        Builder {
            name: name.to_string(),
            workgroup_dims: (workgroup_dims.0 as u32, workgroup_dims.1 as u32),
            grid_dims: (grid_dims.0 as u32, grid_dims.1 as u32, grid_dims.2 as u32),
            shared_bytes: 0,
            stack: vec![Vec::new()],
            reg_classes: Vec::new(),
            loop_vars: 0,
        }
    }

    /// Reserves `bytes` of shared memory and returns its byte offset.
    pub fn alloc_shared(&mut self, bytes: usize) -> i64 {
        let off = self.shared_bytes as i64;
        self.shared_bytes += bytes as u32;
        off
    }

    pub fn reg(&mut self, class: RegClass) -> Reg {
        self.reg_classes.push(class);
        Reg(self.reg_classes.len() as u32 - 1)
    }

    /// `n` fresh accumulators; they start at zero.
    pub fn accumulators(&mut self, n: usize) -> Vec<Reg> {
        (0..n).map(|_| self.reg(RegClass::Accumulator)).collect()
    }

    pub fn push(&mut self, i: Instr) {
        self.stack.last_mut().expect("builder stack").push(i);
    }

    pub fn ld_global(
        &mut self,
        buf: Buffer,
        addr: Affine,
        guards: Vec<Guard>,
        class: RegClass,
    ) -> Reg {
        let dst = self.reg(class);
        self.push(Instr::LdGlobal {
            dst,
            buf,
            addr,
            guards,
        });
        dst
    }

    pub fn st_global(&mut self, src: Reg, buf: Buffer, addr: Affine, guards: Vec<Guard>) {
        self.push(Instr::StGlobal {
            src,
            buf,
            addr,
            guards,
        });
    }

    pub fn ld_shared(&mut self, addr: Affine, guards: Vec<Guard>, class: RegClass) -> Reg {
        let dst = self.reg(class);
        self.push(Instr::LdShared { dst, addr, guards });
        dst
    }

    pub fn st_shared(&mut self, src: Reg, addr: Affine, guards: Vec<Guard>) {
        self.push(Instr::StShared { src, addr, guards });
    }

    /// `acc += a * b`
    pub fn fma_into(&mut self, acc: Reg, a: Reg, b: Reg) {
        self.push(Instr::Fma {
            dst: acc,
            a,
            b,
            c: acc,
        });
    }

    pub fn add(&mut self, a: Reg, b: Reg) -> Reg {
        let dst = self.reg(RegClass::Temp);
        self.push(Instr::Add {
            dst,
            a,
            b,
            negate_b: false,
        });
        dst
    }

    pub fn sub(&mut self, a: Reg, b: Reg) -> Reg {
        let dst = self.reg(RegClass::Temp);
        self.push(Instr::Add {
            dst,
            a,
            b,
            negate_b: true,
        });
        dst
    }

    pub fn ialu(&mut self, uniform: bool, n: usize) {
        for _ in 0..n {
            self.push(Instr::Ialu { uniform });
        }
    }

    pub fn barrier(&mut self) {
        self.push(Instr::Barrier);
    }

    /// Emits a counted loop. The body gets one uniform IALU for the counter update.
    pub fn loop_n(&mut self, count: usize, f: impl FnOnce(&mut Self, LoopVar)) {
        if count == 0 {
            return;
        }
        let var = LoopVar(self.loop_vars);
        self.loop_vars += 1;
        self.stack.push(Vec::new());
        f(self, var);
        self.push(Instr::Ialu { uniform: true });
        let body = self.stack.pop().expect("loop body");
        self.push(Instr::Loop {
            var,
            count: count as u32,
            body,
        });
    }

    /// Counted loop whose index is handed to `f` as an affine term; a single
    /// trip is emitted inline with index 0.
    pub fn for_range(&mut self, count: usize, f: impl FnOnce(&mut Self, Affine)) {
        match count {
            0 => {}
            1 => f(self, Affine::constant(0)),
            _ => self.loop_n(count, |b, v| f(b, Affine::var(v, 1))),
        }
    }

    /// Runs `f(iteration, buffer)` for `count` iterations, alternating between
    /// two staging buffers. The pair loop lets a single barrier per iteration
    /// cover both the read-after-write and the write-after-read ordering.
    pub fn double_buffered(&mut self, count: usize, mut f: impl FnMut(&mut Self, Affine, usize)) {
        let pairs = count / 2;
        if pairs > 0 {
            self.loop_n(pairs, |b, v| {
                f(b, Affine::var(v, 2), 0);
                f(b, Affine::var(v, 2).add_const(1), 1);
            });
        }
        if count % 2 == 1 {
            f(self, Affine::constant(count as i64 - 1), 0);
        }
    }

    pub fn finish(mut self) -> KernelProgram {
        assert_eq!(self.stack.len(), 1, "unclosed loop");
        KernelProgram {
            name: self.name,
            workgroup_dims: self.workgroup_dims,
            grid_dims: self.grid_dims,
            shared_bytes: self.shared_bytes,
            body: self.stack.pop().unwrap(),
            reg_classes: self.reg_classes,
            loop_vars: self.loop_vars,
        }
    }
}
