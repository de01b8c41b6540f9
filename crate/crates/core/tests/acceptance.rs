//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use convlab::algos::analytic_counts;
use convlab::ir::{
    barrier_census, lower, register_pressure, Affine, Buffer, Builder, Instr, KernelProgram,
    RegClass,
};
use convlab::layers::{LayerSpec, LAYERS};
use convlab::report::{build_report, ReportRequest, VARIANTS};
use convlab::sim::{bank_conflicts, simulate, simulate_config, MachineConfig};
use convlab::tune::{tune, SearchSpace};
use convlab::verify::{verify_layer, VerifyOptions};
use convlab::{AlgoConfig, Algorithm, ConvShape};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn conv4() -> ConvShape {
    LayerSpec::by_name("conv4.x").unwrap().shape()
}

fn mib(bytes: u64) -> f64 {
    bytes as f64 / (1024.0 * 1024.0)
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let worst: RefCell<BTreeMap<&str, f64>> = RefCell::new(BTreeMap::new());
    let run_case = |layer: &LayerSpec, scale: usize, seed: u64| -> Result<(), String> {
        let opts = VerifyOptions {
            scale,
            seed,
            ilpm_kcrs_filters: false,
        };
        for c in verify_layer(layer, &opts).map_err(|e| e.to_string())? {
            let mut w = worst.borrow_mut();
            let e = w.entry(c.variant).or_insert(0.0);
            *e = e.max(c.max_rel_error);
            ensure(c.passed(), || c.dump())?;
        }
        Ok(())
    };
    for layer in &LAYERS {
        for scale in [8, 16, 32] {
            run_case(layer, scale, 0)?;
        }
    }
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 8,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let strategy = (
        0..LAYERS.len(),
        prop::sample::select(vec![8usize, 16, 32]),
        any::<u64>(),
    );
    runner
        .run(&strategy, |(l, scale, seed)| {
            run_case(&LAYERS[l], scale, seed).map_err(TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || {
        format!("took {elapsed:?}, budget 120 s")
    })?;
    let w = worst.borrow();
    let parts: Vec<String> = VARIANTS
        .iter()
        .map(|v| format!("{v} {:.1e}", w[v]))
        .collect();
    Ok(format!(
        "20 cases, worst rel. error {} in {:.1?}",
        parts.join(", "),
        elapsed
    ))
}

fn im2col_traffic() -> Check {
    let s = conv4();
    let counts = analytic_counts(&AlgoConfig::default_for(Algorithm::Im2col, &s), &s)
        .map_err(|e| e.to_string())?;
    let st = counts.stage("im2col_im2col").ok_or("no unroll stage")?;
    let (oh, ow) = s.out_hw();
    let unrolled = (s.in_channels * 9 * oh * ow * 4) as u64;
    let input = (s.in_channels * s.height * s.width * 4) as u64;
    ensure(unrolled == 1_806_336 && st.write_bytes == unrolled, || {
        format!("unrolled write {}", st.write_bytes)
    })?;
    ensure(input == 200_704 && st.read_bytes == input, || {
        format!("unroll read {}", st.read_bytes)
    })?;
    Ok(format!(
        "unrolled write {} B ({:.2} MiB), unroll read {} B ({:.2} MiB)",
        st.write_bytes,
        mib(st.write_bytes),
        st.read_bytes,
        mib(st.read_bytes)
    ))
}

fn winograd_traffic() -> Check {
    let s = conv4();
    let counts = analytic_counts(&AlgoConfig::default_for(Algorithm::Winograd, &s), &s)
        .map_err(|e| e.to_string())?;
    let st = counts
        .stage("winograd_trans_from_image")
        .ok_or("no input transform stage")?;
    let tiles = s.height.div_ceil(2) * s.width.div_ceil(2);
    let expect = (s.in_channels * tiles * 16 * 4) as u64;
    ensure(expect == 802_816 && st.write_bytes == expect, || {
        format!("transformed input write {}", st.write_bytes)
    })?;
    Ok(format!(
        "transformed input write {} B ({:.2} MiB)",
        st.write_bytes,
        mib(st.write_bytes)
    ))
}

fn winograd_multiplies() -> Check {
    let mut shapes: Vec<ConvShape> = LAYERS
        .iter()
        .map(|l| l.shape())
        .filter(|s| s.height % 2 == 0)
        .collect();
    shapes.push(ConvShape::same3x3(3, 5, 6, 10).unwrap());
    for s in &shapes {
        let counts = analytic_counts(&AlgoConfig::default_for(Algorithm::Winograd, s), s)
            .map_err(|e| e.to_string())?;
        let hadamard = counts
            .stage("winograd_gemm")
            .ok_or("no gemm stage")?
            .multiplies;
        ensure(hadamard * 36 == s.macs() * 16, || {
            format!("{s:?}: {hadamard} vs {} MACs", s.macs())
        })?;
    }
    let s = conv4();
    let counts = analytic_counts(&AlgoConfig::default_for(Algorithm::Winograd, &s), &s).unwrap();
    let hadamard = counts.stage("winograd_gemm").unwrap().multiplies;
    Ok(format!(
        "{} shapes, conv4.x {hadamard} / {} = 16/36",
        shapes.len(),
        s.macs()
    ))
}

fn ilpm_traffic() -> Check {
    let s = conv4();
    let cfg = AlgoConfig::ilpm(14, 14, false);
    let counts = analytic_counts(&cfg, &s).map_err(|e| e.to_string())?;
    let filter = (s.out_channels * s.in_channels * 9 * 4) as u64;
    let input = (s.in_channels * s.height * s.width * 4) as u64;
    let read = counts.global_read_bytes_analytic;
    ensure(filter == 2_359_296 && read == filter + input, || {
        format!("analytic read {read}")
    })?;
    let rel = (mib(read) - 2.46).abs() / 2.46;
    ensure(rel <= 0.05, || {
        format!("{:.3} MiB is {:.1}% from 2.46", mib(read), rel * 100.0)
    })?;

    let small = s.with_channels(64, 64);
    let small_filter = (64 * 64 * 9 * 4) as u64;
    let mut fetched = Vec::new();
    for m in [MachineConfig::integrated(), MachineConfig::embedded()] {
        let r = simulate_config(&AlgoConfig::ilpm(7, 7, false), &small, &m, 1)
            .map_err(|e| e.to_string())?
            .total;
        let f = r.post_l2_by_buffer.get("filter").copied().unwrap_or(0);
        ensure(f == small_filter, || {
            format!("{}: filter DRAM bytes {f} != {small_filter}", m.name)
        })?;
        fetched.push(f);
    }
    Ok(format!(
        "read {read} B = {filter} filter + {} input = {:.3} MiB ({:+.1}% vs 2.46); simulated filter fetch {} B = filter size",
        read - filter,
        mib(read),
        (mib(read) / 2.46 - 1.0) * 100.0,
        fetched[0]
    ))
}

fn barrier_counts() -> Check {
    let s = conv4();
    let census = |cfg: AlgoConfig| -> Result<u64, String> {
        Ok(barrier_census(
            &lower(&cfg, &s).map_err(|e| e.to_string())?.kernels[0],
        ))
    };
    let ilpm = census(AlgoConfig::ilpm(14, 14, false))?;
    let nocache = census(AlgoConfig::direct(false, 4, 7, 7))?;
    let cache = census(AlgoConfig::direct(true, 4, 7, 7))?;
    let c = s.in_channels as u64;
    ensure(ilpm == c && nocache == c && cache == 4 * c, || {
        format!("ilpm {ilpm}, nocache {nocache}, cache {cache}")
    })?;
    Ok(format!(
        "C=256, OCPT=4: ilpm {ilpm}, direct_nocache {nocache}, direct_cache {cache}"
    ))
}

/// Four loads into one register, each followed by an add that consumes it.
fn fig2a() -> KernelProgram {
    let mut b = Builder::new("fig2a", (1, 1), (1, 1, 1));
    let acc = b.reg(RegClass::Accumulator);
    let r1 = b.reg(RegClass::Image);
    for i in 0..4 {
        b.push(Instr::LdGlobal {
            dst: r1,
            buf: Buffer::Input,
            addr: Affine::constant(4 * i),
            guards: vec![],
        });
        b.push(Instr::Add {
            dst: acc,
            a: acc,
            b: r1,
            negate_b: false,
        });
    }
    b.st_global(acc, Buffer::Output, Affine::constant(0), vec![]);
    b.finish()
}

/// Four independent loads, then a reduction tree.
fn fig2b() -> KernelProgram {
    let mut b = Builder::new("fig2b", (1, 1), (1, 1, 1));
    let xs: Vec<_> = (0..4)
        .map(|i| {
            b.ld_global(
                Buffer::Input,
                Affine::constant(4 * i),
                vec![],
                RegClass::Image,
            )
        })
        .collect();
    let s0 = b.add(xs[0], xs[1]);
    let s1 = b.add(xs[2], xs[3]);
    let s = b.add(s0, s1);
    b.st_global(s, Buffer::Output, Affine::constant(0), vec![]);
    b.finish()
}

fn register_counts() -> Check {
    let s = conv4();
    let depth = 9;
    let pressure = |cfg: AlgoConfig| -> Result<usize, String> {
        let k = &lower(&cfg, &s).map_err(|e| e.to_string())?.kernels[0];
        Ok(register_pressure(k, depth).class(RegClass::Filter))
    };
    let ilpm = pressure(AlgoConfig::ilpm(14, 14, false))?;
    let direct = pressure(AlgoConfig::direct(false, 4, 7, 7))?;
    ensure(ilpm == 1 && direct == 9, || {
        format!("filter registers: ilpm {ilpm}, direct_nocache {direct}")
    })?;
    let a = register_pressure(&fig2a(), 4).max_live;
    let b = register_pressure(&fig2b(), 4).max_live;
    ensure(a == 2 && b == 5, || {
        format!("micro examples max_live {a} and {b}")
    })?;
    Ok(format!("depth {depth}: filter registers ilpm {ilpm}, direct_nocache {direct}; micro examples max_live {a}, {b}"))
}

const LOADS: i64 = 10;

fn missing_line(i: i64) -> Affine {
    Affine::tid_x(4).plus(&Affine::constant(i * 4096))
}

fn independent_loads(grid: usize) -> KernelProgram {
    let mut b = Builder::new("independent", (32, 1), (grid, 1, 1));
    let vals: Vec<_> = (0..LOADS)
        .map(|i| b.ld_global(Buffer::Input, missing_line(i), vec![], RegClass::Image))
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

fn dependent_loads(grid: usize) -> KernelProgram {
    let mut b = Builder::new("dependent", (32, 1), (grid, 1, 1));
    let acc = b.accumulators(1)[0];
    let r1 = b.reg(RegClass::Image);
    for i in 0..LOADS {
        b.push(Instr::LdGlobal {
            dst: r1,
            buf: Buffer::Input,
            addr: missing_line(i),
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

fn scoreboard() -> Check {
    let m = MachineConfig {
        l2_lines: 4096,
        ..MachineConfig::default()
    };
    ensure(m.lat_global == 400, || {
        "default lat_global is not 400".into()
    })?;
    let run = |p: &KernelProgram, m: &MachineConfig| {
        simulate(p, m, 1)
            .map(|r| r.cycles)
            .map_err(|e| e.to_string())
    };
    let fast = run(&independent_loads(1), &m)?;
    let slow = run(&dependent_loads(1), &m)?;
    let n = LOADS as u64;
    let lat = m.lat_global as u64;
    let fast_bound = n + lat + n * m.lat_alu as u64 + 16;
    ensure(fast >= n + lat && fast <= fast_bound, || {
        format!("independent loads took {fast}, expected about {}", n + lat)
    })?;
    let chain = n as f64 * lat as f64;
    ensure((slow as f64 / chain - 1.0).abs() <= 0.05, || {
        format!("dependent chain took {slow}, expected about {chain}")
    })?;
    let ratio = slow as f64 / fast as f64;
    ensure(ratio >= 5.0, || format!("ratio {ratio:.2}"))?;
    let p = dependent_loads(8);
    let mut tlp = Vec::new();
    for warps in 1..=8 {
        tlp.push(run(
            &p,
            &MachineConfig {
                max_warps_per_cu: warps,
                ..m.clone()
            },
        )?);
    }
    ensure(tlp.windows(2).all(|w| w[1] <= w[0]), || {
        format!("not monotone: {tlp:?}")
    })?;
    Ok(format!(
        "independent {fast} cycles, chain {slow} cycles, ratio {ratio:.1}x; 1..8 warps {tlp:?}"
    ))
}

fn bank_conflict_model() -> Check {
    let m = MachineConfig::default();
    let broadcast = vec![256u64; m.warp_size as usize];
    let strided: Vec<u64> = (0..m.warp_size as u64)
        .map(|lane| lane * m.banks as u64 * 4)
        .collect();
    let (b, st) = (
        bank_conflicts(&broadcast, m.banks),
        bank_conflicts(&strided, m.banks),
    );
    ensure(b == 0 && st == m.warp_size as u64 - 1, || {
        format!("broadcast {b}, strided {st}")
    })?;
    let s = conv4().with_channels(64, 64);
    let mut seen = Vec::new();
    for m in [MachineConfig::integrated(), MachineConfig::embedded()] {
        for cfg in [
            AlgoConfig::ilpm(2, 2, false),
            AlgoConfig::ilpm(7, 7, false),
            AlgoConfig::ilpm(14, 14, false),
        ] {
            let r = simulate_config(&cfg, &s, &m, 1)
                .map_err(|e| e.to_string())?
                .total;
            ensure(r.bank_conflict_extra_cycles == 0, || {
                format!(
                    "{} on {}: {} extra cycles",
                    cfg.describe(),
                    m.name,
                    r.bank_conflict_extra_cycles
                )
            })?;
            seen.push(r.bank_conflict_extra_cycles);
        }
    }
    Ok(format!(
        "broadcast {b}, stride-{} {st}, ilpm main loop {} runs with 0 extra cycles",
        m.banks,
        seen.len()
    ))
}

fn end_to_end_ordering() -> Check {
    let s = conv4().with_channels(64, 64);
    let mut lines = Vec::new();
    for m in [MachineConfig::embedded(), MachineConfig::integrated()] {
        let mut best = BTreeMap::new();
        for a in Algorithm::KERNELS {
            let r = tune(a, &s, &m, &SearchSpace::default()).map_err(|e| e.to_string())?;
            best.insert(a, r.best_metrics.cycles);
        }
        let c = |a: Algorithm| best[&a];
        let ok = c(Algorithm::Ilpm) < c(Algorithm::Direct)
            && c(Algorithm::Direct) < c(Algorithm::FusedUnroll)
            && c(Algorithm::Winograd) < c(Algorithm::Im2col);
        let listed: Vec<String> = best.iter().map(|(a, c)| format!("{a} {c}")).collect();
        let line = format!("{}: {}", m.name, listed.join(", "));
        ensure(ok, || format!("ordering violated on {line}"))?;
        lines.push(line);
    }
    Ok(format!("tuned cycles {}", lines.join("; ")))
}

fn golden_csv() -> Check {
    let req = ReportRequest {
        layers: vec![
            LayerSpec::by_name("conv4.x").unwrap(),
            LayerSpec::by_name("conv5.x").unwrap(),
        ],
        variants: VARIANTS.to_vec(),
        machines: vec![MachineConfig::embedded(), MachineConfig::dedicated()],
        scale: 16,
    };
    let a = build_report(&req).map_err(|e| e.to_string())?.to_csv();
    let b = build_report(&req).map_err(|e| e.to_string())?.to_csv();
    ensure(a == b, || "two runs differ".into())?;
    Ok(format!(
        "{} lines, {} bytes identical across two runs",
        a.lines().count(),
        a.len()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence", oracle_equivalence),
        ("im2col traffic", im2col_traffic),
        ("winograd transform traffic", winograd_traffic),
        ("winograd multiply reduction", winograd_multiplies),
        ("ilpm traffic", ilpm_traffic),
        ("barrier census", barrier_counts),
        ("register pressure", register_counts),
        ("scoreboard behaviour", scoreboard),
        ("bank conflicts", bank_conflict_model),
        ("end-to-end ordering", end_to_end_ordering),
        ("golden csv", golden_csv),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
