use convlab::algos::{self, analytic_counts};
use convlab::ir::{
    barrier_census, compile, dynamic_counts, execute_lowered, find_hazards, lower,
    register_pressure, Instr, KernelProgram, LoweredKernels, RegClass,
};
use convlab::{AlgoConfig, Algorithm, ConvShape, Layout, Tensor};

fn cases() -> Vec<(ConvShape, AlgoConfig)> {
    let s = ConvShape::same3x3(8, 16, 14, 14).unwrap();
    let odd = ConvShape::same3x3(3, 8, 7, 7).unwrap();
    let strided = ConvShape::new(4, 8, 9, 9, 3, 3, 1, 2).unwrap();
    let mut out = Vec::new();
    for shape in [s, odd, strided] {
        for algo in [
            Algorithm::Im2col,
            Algorithm::FusedUnroll,
            Algorithm::Direct,
            Algorithm::Ilpm,
        ] {
            out.push((shape, AlgoConfig::default_for(algo, &shape)));
        }
        if shape.stride == 1 {
            out.push((shape, AlgoConfig::default_for(Algorithm::Winograd, &shape)));
        }
        let (oh, ow) = shape.out_hw();
        let tile = if ow % 7 == 0 { 7 } else { 1 };
        let ty = if oh % 2 == 0 { 2 } else { 1 };
        out.push((shape, AlgoConfig::direct(false, 2, tile, ty)));
        out.push((
            shape,
            AlgoConfig {
                transpose_output: true,
                ..AlgoConfig::ilpm(tile, ty, true)
            },
        ));
        out.push((
            shape,
            AlgoConfig {
                wg_channels: Some(4),
                ..AlgoConfig::ilpm(tile, ty, false)
            },
        ));
    }
    out.push((
        s,
        AlgoConfig::default_for(Algorithm::Im2col, &s).with_gemm_tiles(8, 32, 5),
    ));
    out.push((
        s,
        AlgoConfig::default_for(Algorithm::Winograd, &s).with_gemm_tiles(4, 16, 3),
    ));
    out
}

fn operands(shape: &ConvShape, seed: u64) -> (Tensor, Tensor) {
    let x = Tensor::random(
        Layout::Chw,
        &[shape.in_channels, shape.height, shape.width],
        seed,
    );
    let f = Tensor::random(
        Layout::Kcrs,
        &[
            shape.out_channels,
            shape.in_channels,
            shape.filter_h,
            shape.filter_w,
        ],
        seed + 1,
    );
    (x, f)
}

fn total_fma(l: &LoweredKernels) -> u64 {
    l.kernels
        .iter()
        .map(|k| dynamic_counts(k).total(k).fma)
        .sum()
}

#[test]
fn interpreter_reproduces_host_output_exactly() {
    for (i, (shape, cfg)) in cases().into_iter().enumerate() {
        let (x, f) = operands(&shape, 100 + i as u64);
        let host = algos::run(&cfg, &x, &f, &shape).unwrap();
        for l in [lower(&cfg, &shape).unwrap(), compile(&cfg, &shape).unwrap()] {
            let ir = execute_lowered(&l, &cfg, &shape, &x, &f).unwrap();
            assert!(
                ir.data() == host.output.data(),
                "{} on {:?} differs",
                cfg.describe(),
                shape
            );
        }
    }
}

#[test]
fn compilation_preserves_work_and_barriers() {
    for (shape, cfg) in cases() {
        let (l, c) = (lower(&cfg, &shape).unwrap(), compile(&cfg, &shape).unwrap());
        assert_eq!(total_fma(&l), total_fma(&c), "{}", cfg.describe());
        for (a, b) in l.kernels.iter().zip(&c.kernels) {
            assert_eq!(
                barrier_census(a),
                barrier_census(b),
                "{} {}",
                cfg.describe(),
                a.name
            );
            assert!(
                find_hazards(b).unwrap().is_empty(),
                "{} {}",
                cfg.describe(),
                b.name
            );
        }
    }
}

#[test]
fn dynamic_counts_agree_with_analytic_counts() {
    for (shape, cfg) in cases() {
        let l = lower(&cfg, &shape).unwrap();
        let counts = analytic_counts(&cfg, &shape).unwrap();
        assert_eq!(
            total_fma(&l),
            counts.padded_multiplies,
            "{}",
            cfg.describe()
        );
        for k in &l.kernels {
            let st = counts
                .stage(&k.name)
                .unwrap_or_else(|| panic!("no stage {}", k.name));
            assert_eq!(
                barrier_census(k),
                st.barriers_per_workgroup,
                "{} {}",
                cfg.describe(),
                k.name
            );
            assert_eq!(
                k.workgroups(),
                st.workgroups,
                "{} {}",
                cfg.describe(),
                k.name
            );
            let adds = dynamic_counts(k).total(k).add;
            if st.adds > 0 {
                assert!(adds >= st.adds, "{}: {adds} < {}", k.name, st.adds);
            }
        }
    }
}

#[test]
fn lowered_programs_are_race_free() {
    for (shape, cfg) in cases() {
        for k in &lower(&cfg, &shape).unwrap().kernels {
            assert!(
                find_hazards(k).unwrap().is_empty(),
                "{} {}",
                cfg.describe(),
                k.name
            );
        }
    }
}

fn remove_nth_barrier(block: &mut Vec<Instr>, n: &mut usize) -> bool {
    for i in 0..block.len() {
        match &mut block[i] {
            Instr::Barrier => {
                if *n == 0 {
                    block.remove(i);
                    return true;
                }
                *n -= 1;
            }
            Instr::Loop { body, .. } => {
                if remove_nth_barrier(body, n) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

fn static_barriers(block: &[Instr]) -> usize {
    block
        .iter()
        .map(|i| match i {
            Instr::Barrier => 1,
            Instr::Loop { body, .. } => static_barriers(body),
            _ => 0,
        })
        .sum()
}

#[test]
fn every_barrier_is_needed() {
    let s = ConvShape::same3x3(3, 8, 8, 8).unwrap();
    let cfgs = [
        AlgoConfig::default_for(Algorithm::Im2col, &s),
        AlgoConfig::default_for(Algorithm::FusedUnroll, &s),
        AlgoConfig::direct(true, 2, 4, 4),
        AlgoConfig::direct(false, 2, 4, 4),
        AlgoConfig::ilpm(4, 4, true),
        AlgoConfig::default_for(Algorithm::Winograd, &s),
    ];
    for cfg in cfgs {
        for k in &lower(&cfg, &s).unwrap().kernels {
            for n in 0..static_barriers(&k.body) {
                let mut p: KernelProgram = k.clone();
                let mut idx = n;
                assert!(remove_nth_barrier(&mut p.body, &mut idx));
                assert!(
                    !find_hazards(&p).unwrap().is_empty(),
                    "{} barrier {n} of {} is redundant",
                    k.name,
                    cfg.describe()
                );
            }
        }
    }
}

#[test]
fn ilpm_tiny_example() {
    let s = ConvShape::same3x3(2, 16, 4, 4).unwrap();
    let l = lower(&AlgoConfig::ilpm(4, 4, false), &s).unwrap();
    let k = &l.kernels[0];
    assert_eq!(barrier_census(k), 2);
    assert_eq!(dynamic_counts(k).fma, 288);
}

#[test]
fn direct_cache_barriers_follow_loop_nest() {
    let s = ConvShape::same3x3(4, 8, 8, 8).unwrap();
    let l = lower(&AlgoConfig::direct(true, 2, 4, 4), &s).unwrap();
    assert_eq!(barrier_census(&l.kernels[0]), 8);
    let big = ConvShape::same3x3(256, 256, 14, 14).unwrap();
    let l = lower(&AlgoConfig::direct(true, 4, 7, 7), &big).unwrap();
    assert_eq!(barrier_census(&l.kernels[0]), 1024);
    let l = lower(&AlgoConfig::ilpm(14, 14, false), &big).unwrap();
    assert_eq!(barrier_census(&l.kernels[0]), 256);
}

#[test]
fn im2col_stage_only_moves_data() {
    let s = ConvShape::same3x3(8, 16, 14, 14).unwrap();
    let l = lower(&AlgoConfig::default_for(Algorithm::Im2col, &s), &s).unwrap();
    let k = l.get("im2col_im2col").unwrap();
    let c = dynamic_counts(k);
    assert_eq!(c.fma + c.mul + c.add, 0);
    assert_eq!(c.ld_shared + c.st_shared + c.barrier, 0);
    assert!(c.ld_global > 0 && c.st_global > 0 && c.ialu_vector > 0);
    assert_eq!(barrier_census(k), 0);
    assert_eq!(k.shared_bytes, 0);
}

#[test]
fn filter_register_pressure() {
    let s = ConvShape::same3x3(16, 64, 14, 14).unwrap();
    let ilpm = &lower(&AlgoConfig::ilpm(7, 7, false), &s).unwrap().kernels[0];
    assert_eq!(register_pressure(ilpm, 4).class(RegClass::Filter), 1);
    let direct = &lower(&AlgoConfig::direct(false, 4, 7, 7), &s)
        .unwrap()
        .kernels[0];
    assert_eq!(register_pressure(direct, 9).class(RegClass::Filter), 9);
    let acc = 7 * 7;
    assert!(register_pressure(ilpm, 4).max_live >= acc);
}

#[test]
fn oversized_workgroups_are_rejected() {
    let s = ConvShape::same3x3(4, 4, 64, 64).unwrap();
    let cfg = AlgoConfig::direct(true, 1, 64, 32);
    assert!(lower(&cfg, &s).is_err());
}
