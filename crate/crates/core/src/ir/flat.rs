//! Linearised form of a program for the interpreter and the simulator.

use super::{Instr, KernelProgram};

#[derive(Debug, Clone)]
pub enum FlatOp {
    Exec(Instr),
    LoopStart { var: u16, count: u32, end: usize },
    LoopEnd { var: u16, count: u32, start: usize },
}

#[derive(Debug, Clone)]
pub struct FlatProgram {
    pub ops: Vec<FlatOp>,
    pub loop_vars: usize,
}

impl FlatProgram {
    pub fn new(p: &KernelProgram) -> Self {
        let mut ops = Vec::new();
        flatten(&p.body, &mut ops);
        FlatProgram {
            ops,
            loop_vars: p.loop_vars as usize,
        }
    }

    /// Moves `pc` past one op, updating loop counters. Returns false at the end.
    #[inline]
    pub fn step(&self, pc: &mut usize, loops: &mut [i64]) -> bool {
        match &self.ops[*pc] {
            FlatOp::LoopEnd { var, count, start } => {
                loops[*var as usize] += 1;
                if loops[*var as usize] < *count as i64 {
                    *pc = start + 1;
                } else {
                    *pc += 1;
                }
            }
            _ => *pc += 1,
        }
        *pc < self.ops.len()
    }

    /// Advances `pc` over loop markers until it sits on an `Exec` op or the end.
    #[inline]
    pub fn settle(&self, pc: &mut usize, loops: &mut [i64]) {
        while *pc < self.ops.len() {
            match &self.ops[*pc] {
                FlatOp::Exec(_) => return,
                FlatOp::LoopStart { var, count, end } => {
                    if *count == 0 {
                        *pc = end + 1;
                    } else {
                        loops[*var as usize] = 0;
                        *pc += 1;
                    }
                }
                FlatOp::LoopEnd { .. } => {
                    self.step(pc, loops);
                }
            }
        }
    }
}

fn flatten(block: &[Instr], ops: &mut Vec<FlatOp>) {
    for i in block {
        match i {
            Instr::Loop { var, count, body } => {
                let start = ops.len();
                ops.push(FlatOp::LoopStart {
                    var: var.0,
                    count: *count,
                    end: 0,
                });
                flatten(body, ops);
                let end = ops.len();
                ops.push(FlatOp::LoopEnd {
                    var: var.0,
                    count: *count,
                    start,
                });
                if let FlatOp::LoopStart { end: e, .. } = &mut ops[start] {
                    *e = end;
                }
            }
            other => ops.push(FlatOp::Exec(other.clone())),
        }
    }
}
