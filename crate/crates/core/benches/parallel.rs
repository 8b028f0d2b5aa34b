use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use saswise::corruption::{corruption_sweep, CorruptionKind};
use saswise::ensemble::evaluate_pool_with;
use saswise::model::{enumerate_paths, Architecture, StackedModel};
use saswise::numerics::{Rng, Tensor};
use saswise::pruning::{score_paths_builtin, MetricKind};
use saswise::training::{Dataset, Sample, Split};
use saswise::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn jittered(counts: &[usize], rng: &mut Rng) -> StackedModel {
    let arch = Architecture::unet7(32, 1, 8, 1).unwrap();
    let mut m = StackedModel::build_template(arch, rng).unwrap().clone_and_stack(counts).unwrap();
    for (j, &a) in counts.iter().enumerate() {
        for k in 1..a {
            for v in m.candidate_mut(j, k).tensors_mut().flat_map(|t| t.data_mut().iter_mut()) {
                *v += rng.uniform_range(-0.05, 0.05);
            }
        }
    }
    m
}

fn image(rng: &mut Rng) -> Tensor {
    Tensor::from_fn(&[1, 32, 32], |_| rng.uniform())
}

fn bench_pool(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let m = jittered(&[2; 7], &mut rng);
    let pool = enumerate_paths(&m).unwrap();
    let x = image(&mut rng);
    let mut g = c.benchmark_group("evaluate_pool_128");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| evaluate_pool_with(&m, black_box(&x), &pool, e).unwrap())
        });
    }
    g.finish();
}

fn bench_scoring(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let m = jittered(&[2; 7], &mut rng);
    let pool = enumerate_paths(&m).unwrap();
    let samples = (0..4)
        .map(|_| {
            let x = image(&mut rng);
            Sample { y: x.clone(), x }
        })
        .collect();
    let val = Dataset::new(samples, Split::Val).unwrap();
    let mut g = c.benchmark_group("score_paths_4x128");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| score_paths_builtin(&m, &val, &pool, MetricKind::Mae, e).unwrap())
        });
    }
    g.finish();
}

fn bench_corruption(c: &mut Criterion) {
    let mut rng = Rng::new(3);
    let imgs: Vec<Tensor> = (0..20).map(|_| Tensor::from_fn(&[32, 32], |_| rng.uniform())).collect();
    let levels: Vec<CorruptionKind> =
        [64, 32, 16, 8, 4].iter().map(|&spokes| CorruptionKind::KspaceRadial { spokes }).collect();
    let mut g = c.benchmark_group("kspace_sweep_20x5");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| corruption_sweep(black_box(&imgs), &levels, 7, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_pool, bench_scoring, bench_corruption);
criterion_main!(benches);
