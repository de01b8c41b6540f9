use super::{Affine, Guard, Instr, KernelProgram, LoopVar, Reg};

/// Largest straight-line body, in instructions, a loop may expand into when
/// fully unrolled.
pub const UNROLL_BUDGET: usize = 512;

/// Fully unrolls innermost loops whose expansion stays within `budget`
/// instructions, repeating until no loop qualifies. Loop indices become
/// constants, the per-trip counter update disappears and registers that are
/// private to one trip get a fresh name per copy so the copies are independent.
pub fn unroll(p: &KernelProgram, budget: usize) -> KernelProgram {
    let mut out = p.clone();
    loop {
        let mut refs = vec![0usize; out.reg_classes.len()];
        count_refs(&out.body, &mut refs);
        let mut ctx = Ctx {
            budget,
            refs,
            classes: out.reg_classes.clone(),
            changed: false,
        };
        let body = ctx.block(std::mem::take(&mut out.body));
        out.body = body;
        out.reg_classes = ctx.classes;
        if !ctx.changed {
            return out;
        }
    }
}

struct Ctx {
    budget: usize,
    refs: Vec<usize>,
    classes: Vec<super::RegClass>,
    changed: bool,
}

impl Ctx {
    fn block(&mut self, block: Vec<Instr>) -> Vec<Instr> {
        let mut out = Vec::with_capacity(block.len());
        for ins in block {
            match ins {
                Instr::Loop { var, count, body } => {
                    let innermost = !body.iter().any(|i| matches!(i, Instr::Loop { .. }));
                    let trip_len = body.len().saturating_sub(1);
                    if innermost && count as usize * trip_len <= self.budget {
                        self.expand(var, count, body, &mut out);
                        self.changed = true;
                    } else {
                        out.push(Instr::Loop {
                            var,
                            count,
                            body: self.block(body),
                        });
                    }
                }
                other => out.push(other),
            }
        }
        out
    }

    fn expand(&mut self, var: LoopVar, count: u32, mut body: Vec<Instr>, out: &mut Vec<Instr>) {
        if matches!(body.last(), Some(Instr::Ialu { uniform: true })) {
            body.pop();
        }
        let private = self.private_regs(&body);
        for trip in 0..count as i64 {
            let mut names: Vec<(Reg, Reg)> = Vec::with_capacity(private.len());
            if trip > 0 {
                for &r in &private {
                    let fresh = Reg(self.classes.len() as u32);
                    self.classes.push(self.classes[r.0 as usize]);
                    names.push((r, fresh));
                }
            }
            let rename = |r: Reg| {
                names
                    .iter()
                    .find(|(from, _)| *from == r)
                    .map_or(r, |(_, to)| *to)
            };
            out.extend(body.iter().map(|i| substitute(i, var, trip, &rename)));
        }
    }

    /// Registers referenced only inside `body` whose first access there is a write.
    fn private_regs(&self, body: &[Instr]) -> Vec<Reg> {
        let mut local = vec![0usize; self.refs.len()];
        count_refs(body, &mut local);
        let mut seen = vec![false; self.refs.len()];
        let mut private = Vec::new();
        for ins in body {
            for s in ins.srcs() {
                seen[s.0 as usize] = true;
            }
            if let Some(d) = ins.dst() {
                let i = d.0 as usize;
                if !seen[i] && local[i] == self.refs[i] {
                    private.push(d);
                }
                seen[i] = true;
            }
        }
        private
    }
}

fn count_refs(block: &[Instr], refs: &mut [usize]) {
    for ins in block {
        if let Instr::Loop { body, .. } = ins {
            count_refs(body, refs);
        }
        for r in ins.srcs().into_iter().chain(ins.dst()) {
            refs[r.0 as usize] += 1;
        }
    }
}

fn fix(a: &Affine, var: LoopVar, trip: i64) -> Affine {
    let mut a = a.clone();
    a.loops.retain(|&(v, k)| {
        if v == var {
            a.constant += k * trip;
            false
        } else {
            true
        }
    });
    a
}

fn fix_guards(g: &[Guard], var: LoopVar, trip: i64) -> Vec<Guard> {
    g.iter()
        .map(|g| Guard {
            expr: fix(&g.expr, var, trip),
            ..g.clone()
        })
        .collect()
}

fn substitute(ins: &Instr, var: LoopVar, trip: i64, rename: &impl Fn(Reg) -> Reg) -> Instr {
    match ins {
        Instr::LdGlobal {
            dst,
            buf,
            addr,
            guards,
        } => Instr::LdGlobal {
            dst: rename(*dst),
            buf: *buf,
            addr: fix(addr, var, trip),
            guards: fix_guards(guards, var, trip),
        },
        Instr::StGlobal {
            src,
            buf,
            addr,
            guards,
        } => Instr::StGlobal {
            src: rename(*src),
            buf: *buf,
            addr: fix(addr, var, trip),
            guards: fix_guards(guards, var, trip),
        },
        Instr::LdShared { dst, addr, guards } => Instr::LdShared {
            dst: rename(*dst),
            addr: fix(addr, var, trip),
            guards: fix_guards(guards, var, trip),
        },
        Instr::StShared { src, addr, guards } => Instr::StShared {
            src: rename(*src),
            addr: fix(addr, var, trip),
            guards: fix_guards(guards, var, trip),
        },
        Instr::Fma { dst, a, b, c } => Instr::Fma {
            dst: rename(*dst),
            a: rename(*a),
            b: rename(*b),
            c: rename(*c),
        },
        Instr::Mul { dst, a, b } => Instr::Mul {
            dst: rename(*dst),
            a: rename(*a),
            b: rename(*b),
        },
        Instr::Add {
            dst,
            a,
            b,
            negate_b,
        } => Instr::Add {
            dst: rename(*dst),
            a: rename(*a),
            b: rename(*b),
            negate_b: *negate_b,
        },
        Instr::Loop { .. } => unreachable!("only innermost loops are unrolled"),
        other => other.clone(),
    }
}
