use convlab::ir::{Affine, Buffer, Builder, Instr, KernelProgram, RegClass};
use convlab::sim::{simulate, simulate_config, MachineConfig, SimMetrics};
use convlab::{AlgoConfig, Algorithm, ConvShape, Error};
use proptest::prelude::*;

const LOADS: i64 = 10;

/// One 64-byte line per load so every access misses L2.
fn line(i: i64) -> Affine {
    Affine::tid_x(4).plus(&Affine::constant(i * 4096))
}

/// Ten independent loads, then a chain of ten dependent adds.
fn pipelined(grid: usize) -> KernelProgram {
    let mut b = Builder::new("fig2b", (32, 1), (grid, 1, 1));
    let vals: Vec<_> = (0..LOADS)
        .map(|i| b.ld_global(Buffer::Input, line(i), vec![], RegClass::Image))
        .collect();
    let acc = b.accumulators(1)[0];
    for v in vals {
        b.push(Instr::Add {
            dst: acc,
            a: acc,
            b: v,
            negate_b: false,
        });
    }
    b.finish()
}

/// Load, add, load into the same register, add, ...
fn dependent_chain(grid: usize) -> KernelProgram {
    let mut b = Builder::new("fig2a", (32, 1), (grid, 1, 1));
    let acc = b.accumulators(1)[0];
    let r1 = b.reg(RegClass::Image);
    for i in 0..LOADS {
        b.push(Instr::LdGlobal {
            dst: r1,
            buf: Buffer::Input,
            addr: line(i),
            guards: vec![],
        });
        b.push(Instr::Add {
            dst: acc,
            a: acc,
            b: r1,
            negate_b: false,
        });
    }
    b.finish()
}

fn machine() -> MachineConfig {
    MachineConfig {
        l2_lines: 4096,
        ..MachineConfig::default()
    }
}

#[test]
fn independent_loads_overlap() {
    let m = machine();
    let fast = simulate(&pipelined(1), &m, 1).unwrap();
    let lat = m.lat_global as u64;
    let floor = LOADS as u64 + lat;
    assert!(fast.cycles >= floor, "{}", fast.cycles);
    assert!(
        fast.cycles <= floor + LOADS as u64 * m.lat_alu as u64 + 16,
        "{}",
        fast.cycles
    );
}

#[test]
fn dependent_chain_serialises_latency() {
    let m = machine();
    let slow = simulate(&dependent_chain(1), &m, 1).unwrap();
    let expect = LOADS as f64 * (m.lat_global + m.lat_alu) as f64;
    assert!(
        (slow.cycles as f64 - expect).abs() <= 0.05 * expect,
        "{} vs {expect}",
        slow.cycles
    );
    let fast = simulate(&pipelined(1), &m, 1).unwrap();
    assert!(slow.cycles >= 5 * fast.cycles);
}

#[test]
fn resident_warps_hide_latency() {
    let p = dependent_chain(8);
    let mut last = u64::MAX;
    let mut cycles = Vec::new();
    for warps in 1..=8 {
        let m = MachineConfig {
            max_warps_per_cu: warps,
            ..machine()
        };
        let c = simulate(&p, &m, 1).unwrap().cycles;
        assert!(c <= last, "{warps} warps: {c} > {last}");
        last = c;
        cycles.push(c);
    }
    let speedup = cycles[0] as f64 / cycles[7] as f64;
    assert!(speedup > 6.0 && speedup <= 8.0, "speedup {speedup}");
}

#[test]
fn launch_limits_are_enforced() {
    let m = MachineConfig::default();
    let mut b = Builder::new("big_shared", (32, 1), (1, 1, 1));
    b.alloc_shared(m.shared_per_cu as usize + 4);
    assert!(matches!(
        simulate(&b.finish(), &m, 1),
        Err(Error::Launch(_))
    ));

    let mut b = Builder::new("big_regs", (1024, 1), (1, 1, 1));
    let accs = b.accumulators(64);
    let x = b.ld_global(Buffer::Input, Affine::tid_x(4), vec![], RegClass::Image);
    for &a in &accs {
        b.fma_into(a, x, x);
    }
    for (i, &a) in accs.iter().enumerate() {
        b.st_global(
            a,
            Buffer::Output,
            Affine::tid_x(4).plus(&Affine::constant(i as i64 * 4096)),
            vec![],
        );
    }
    assert!(matches!(
        simulate(&b.finish(), &m, 1),
        Err(Error::Launch(_))
    ));
}

fn conv4_64() -> ConvShape {
    ConvShape::same3x3(64, 64, 14, 14).unwrap()
}

#[test]
fn transposed_ilpm_output_coalesces() {
    let s = ConvShape::same3x3(8, 32, 14, 14).unwrap();
    let m = MachineConfig::integrated();
    let plain = simulate_config(&AlgoConfig::ilpm(14, 14, false), &s, &m, 1)
        .unwrap()
        .total;
    let tr = simulate_config(&AlgoConfig::ilpm(14, 14, true), &s, &m, 1)
        .unwrap()
        .total;
    assert!(tr.global_transactions < plain.global_transactions);
    assert_eq!(plain.global_write_bytes, tr.global_write_bytes);
}

#[test]
fn ilpm_reads_are_broadcast() {
    for m in [MachineConfig::embedded(), MachineConfig::integrated()] {
        for cfg in [
            AlgoConfig::ilpm(2, 2, false),
            AlgoConfig::ilpm(7, 7, false),
            AlgoConfig::ilpm(14, 2, false),
        ] {
            let r = simulate_config(&cfg, &conv4_64(), &m, 1).unwrap().total;
            assert_eq!(
                r.bank_conflict_extra_cycles,
                0,
                "{} on {}",
                cfg.describe(),
                m.name
            );
        }
    }
}

#[test]
fn uncached_filters_cost_more_traffic() {
    let filter_bytes = 64 * 64 * 9 * 4;
    for (m, direct) in [
        (
            MachineConfig::embedded(),
            AlgoConfig::direct(false, 4, 7, 7),
        ),
        (
            MachineConfig::integrated(),
            AlgoConfig::direct(false, 2, 14, 2),
        ),
    ] {
        let d = simulate_config(&direct, &conv4_64(), &m, 1).unwrap().total;
        let i = simulate_config(&AlgoConfig::ilpm(7, 7, false), &conv4_64(), &m, 1)
            .unwrap()
            .total;
        assert!(
            d.post_l2_by_buffer["filter"] > i.post_l2_by_buffer["filter"],
            "{}",
            m.name
        );
        assert_eq!(i.post_l2_by_buffer["filter"], filter_bytes);
        assert!(d.global_read_bytes_raw > 4 * i.global_read_bytes_raw);
    }
}

#[test]
fn ilpm_beats_direct_cache_on_every_preset() {
    let s = conv4_64();
    for m in convlab::sim::machine_presets() {
        let best_ilpm = [(2, 2), (7, 2), (7, 7)]
            .into_iter()
            .map(|(x, y)| {
                simulate_config(&AlgoConfig::ilpm(x, y, false), &s, &m, 1)
                    .unwrap()
                    .total
                    .cycles
            })
            .min()
            .unwrap();
        let cache = simulate_config(&AlgoConfig::direct(true, 4, 7, 7), &s, &m, 1)
            .unwrap()
            .total
            .cycles;
        assert!(
            best_ilpm < cache,
            "{}: ilpm {best_ilpm} vs direct_cache {cache}",
            m.name
        );
    }
}

fn check_invariants(r: &SimMetrics, m: &MachineConfig) {
    assert!(r.global_read_bytes_post_l2 <= r.global_read_bytes_raw);
    assert!((0.0..=1.0).contains(&r.alu_busy_fraction));
    assert!((0.0..=1.0).contains(&r.mem_unit_busy_fraction));
    let slots = (m.num_cus * m.schedulers_per_cu * m.issue_width) as u64;
    assert!(r.cycles >= (r.vector_inst + r.scalar_inst) / slots);
    let bytes = (r.global_read_bytes_post_l2 + r.global_write_bytes) as f64;
    assert!(r.cycles as f64 >= (bytes / m.global_bytes_per_cycle).floor());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn metrics_are_consistent_and_deterministic(
        algo in prop::sample::select(Algorithm::KERNELS.to_vec()),
        c in prop::sample::select(vec![4usize, 8]),
        k in prop::sample::select(vec![8usize, 16]),
        hw in prop::sample::select(vec![7usize, 14]),
        preset in prop::sample::select(vec!["dedicated", "integrated", "embedded"]),
    ) {
        let s = ConvShape::same3x3(c, k, hw, hw).unwrap();
        let m = MachineConfig::preset(preset).unwrap();
        let cfg = AlgoConfig::default_for(algo, &s);
        let a = simulate_config(&cfg, &s, &m, 1).unwrap();
        let b = simulate_config(&cfg, &s, &m, 1).unwrap();
        prop_assert_eq!(&a, &b);
        for (_, r) in &a.kernels {
            check_invariants(r, &m);
        }
    }

    #[test]
    fn instruction_counts_ignore_the_machine(
        algo in prop::sample::select(Algorithm::KERNELS.to_vec()),
        hw in prop::sample::select(vec![7usize, 14]),
    ) {
        let s = ConvShape::same3x3(4, 8, hw, hw).unwrap();
        let cfg = AlgoConfig::default_for(algo, &s);
        let runs: Vec<_> = convlab::sim::machine_presets()
            .iter()
            .map(|m| simulate_config(&cfg, &s, m, 1).unwrap().total)
            .collect();
        for r in &runs[1..] {
            prop_assert_eq!(r.vector_inst, runs[0].vector_inst);
            prop_assert_eq!(r.scalar_inst, runs[0].scalar_inst);
            prop_assert_eq!(r.barrier_count, runs[0].barrier_count);
        }
    }
}
