use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hduva_core::distributions::{dirichlet_sample, DirichletParams};
use hduva_core::mmd::{gram_blocks_with, Kernel, KernelSpec};
use hduva_core::parallel::monte_carlo;
use hduva_core::scenarios::{gen_rotated_overlap, BaseSource, RotatedMode, RotatedParams, SyntheticDigits};
use hduva_core::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const STRATEGIES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn gram(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pts = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..64).map(|_| rng.sample(StandardNormal)).collect()).collect() };
    let (x, y) = (pts(256), pts(256));
    let kernel = Kernel::Composite(KernelSpec::default());
    let mut g = c.benchmark_group("gram_blocks");
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| gram_blocks_with(exec, &x, &y, &kernel).unwrap()));
    }
    g.finish();
}

fn dirichlet_mc(c: &mut Criterion) {
    let params = DirichletParams::new(vec![0.5, 2.0, 3.0]).unwrap();
    let mut g = c.benchmark_group("dirichlet_monte_carlo");
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                monte_carlo(exec, 50_000, 3, 1, |rng, out| {
                    out.copy_from_slice(dirichlet_sample(&params, rng).unwrap().weights());
                })
            })
        });
    }
    g.finish();
}

fn render(c: &mut Criterion) {
    let src = BaseSource::synthetic(SyntheticDigits::new(28, 10, 2000, 0).unwrap());
    let mut p = RotatedParams::new(RotatedMode::Workshop);
    p.per_angle = 200;
    let m = gen_rotated_overlap(&src, &p, 0).unwrap();
    let mut g = c.benchmark_group("manifest_render");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| m.render_all(Some(&src), exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, gram, dirichlet_mc, render);
criterion_main!(benches);
