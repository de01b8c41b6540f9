use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use convlab::par;
use convlab::sim::{simulate_config, MachineConfig};
use convlab::tensor::{Layout, Tensor};
use convlab::tune::SearchSpace;
use convlab::{Algorithm, ConvShape};

fn simulate_candidates(c: &mut Criterion) {
    let shape = ConvShape::same3x3(16, 16, 14, 14).unwrap();
    let machine = MachineConfig::embedded();
    let space = SearchSpace {
        tiles: vec![2, 7, 14],
        out_channels_per_thread: vec![2, 4],
        ..SearchSpace::default()
    };
    let configs = space.candidates(Algorithm::Direct, &shape);
    let run = |cfg: &convlab::AlgoConfig| {
        simulate_config(cfg, &shape, &machine, 1)
            .map(|p| p.total.cycles)
            .ok()
    };
    let mut g = c.benchmark_group("simulate_candidates");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("par", configs.len()), |b| {
        b.iter(|| par::map(&configs, run))
    });
    g.bench_function(BenchmarkId::new("seq", configs.len()), |b| {
        b.iter(|| par::map_seq(&configs, run))
    });
    g.finish();
}

fn fill_planes(c: &mut Criterion) {
    let x = Tensor::random(Layout::Chw, &[64, 56, 56], 1);
    let plane = 56 * 56;
    let work = |k: usize, out: &mut [f32]| {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for c in 0..64 {
                acc += x.data()[c * plane + i] * (k + c) as f32;
            }
            *o = acc;
        }
    };
    let mut out = vec![0.0f32; 64 * plane];
    let mut g = c.benchmark_group("fill_planes");
    g.bench_function("par", |b| {
        b.iter(|| par::for_each_chunk(&mut out, plane, work))
    });
    g.bench_function("seq", |b| {
        b.iter(|| par::for_each_chunk_seq(&mut out, plane, work))
    });
    g.finish();
}

criterion_group!(benches, simulate_candidates, fill_planes);
criterion_main!(benches);
