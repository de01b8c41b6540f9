//! Line-oriented text form of a program, one instruction per line.

use std::fmt::Write;

use super::{Guard, Instr, KernelProgram, RegClass};

fn class_letter(c: RegClass) -> char {
    match c {
        RegClass::Accumulator => 'A',
        RegClass::Filter => 'F',
        RegClass::Image => 'I',
        RegClass::Temp => 'T',
    }
}

fn guards(g: &[Guard]) -> String {
    if g.is_empty() {
        return String::new();
    }
    let parts: Vec<String> = g
        .iter()
        .map(|g| format!("{} <= [{}] < {}", g.lo, g.expr, g.hi))
        .collect();
    format!(" if {}", parts.join(" && "))
}

fn write_block(out: &mut String, block: &[Instr], indent: usize) {
    let pad = "  ".repeat(indent);
    for i in block {
        let _ = match i {
            Instr::LdGlobal {
                dst,
                buf,
                addr,
                guards: g,
            } => {
                writeln!(
                    out,
                    "{pad}LD_GLOBAL r{} {}[{}]{}",
                    dst.0,
                    buf.name(),
                    addr,
                    guards(g)
                )
            }
            Instr::StGlobal {
                src,
                buf,
                addr,
                guards: g,
            } => {
                writeln!(
                    out,
                    "{pad}ST_GLOBAL {}[{}] r{}{}",
                    buf.name(),
                    addr,
                    src.0,
                    guards(g)
                )
            }
            Instr::LdShared {
                dst,
                addr,
                guards: g,
            } => {
                writeln!(out, "{pad}LD_SHARED r{} [{}]{}", dst.0, addr, guards(g))
            }
            Instr::StShared {
                src,
                addr,
                guards: g,
            } => {
                writeln!(out, "{pad}ST_SHARED [{}] r{}{}", addr, src.0, guards(g))
            }
            Instr::Fma { dst, a, b, c } => {
                writeln!(out, "{pad}FMA r{} r{} r{} r{}", dst.0, a.0, b.0, c.0)
            }
            Instr::Mul { dst, a, b } => writeln!(out, "{pad}MUL r{} r{} r{}", dst.0, a.0, b.0),
            Instr::Add {
                dst,
                a,
                b,
                negate_b,
            } => {
                let op = if *negate_b { "SUB" } else { "ADD" };
                writeln!(out, "{pad}{op} r{} r{} r{}", dst.0, a.0, b.0)
            }
            Instr::Ialu { uniform } => writeln!(
                out,
                "{pad}IALU {}",
                if *uniform { "scalar" } else { "vector" }
            ),
            Instr::Barrier => writeln!(out, "{pad}BARRIER"),
            Instr::Loop { var, count, body } => {
                let _ = writeln!(out, "{pad}LOOP L{} x{} {{", var.0, count);
                write_block(out, body, indent + 1);
                writeln!(out, "{pad}}}")
            }
        };
    }
}

/// Serialises `p`. The output is stable and suitable for golden comparisons.
pub fn to_text(p: &KernelProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kernel {}", p.name);
    let _ = writeln!(
        out,
        "workgroup {} {}",
        p.workgroup_dims.0, p.workgroup_dims.1
    );
    let _ = writeln!(
        out,
        "grid {} {} {}",
        p.grid_dims.0, p.grid_dims.1, p.grid_dims.2
    );
    let _ = writeln!(out, "shared {}", p.shared_bytes);
    let classes: String = p.reg_classes.iter().map(|&c| class_letter(c)).collect();
    let _ = writeln!(out, "regs {classes}");
    write_block(&mut out, &p.body, 0);
    out
}
