use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qmoe::datasets::{make_two_moons, scale_dataset};
use qmoe::gradients::{jacobian_adjoint, jacobian_finite_diff, jacobian_parameter_shift, vjp_adjoint, DEFAULT_FD_STEP};
use qmoe::models::{HybridModel, ModelSpec, RouterSpec};
use qmoe::training::loss_and_grad;
use qmoe::GradientBackend;
use qmoe_bench::fixture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn jacobians(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobian");
    for (n, l) in [(2, 12), (4, 6), (8, 4)] {
        let (spec, params, x) = fixture(n, l);
        let id = format!("n{n}_L{l}");
        group.bench_with_input(BenchmarkId::new("adjoint", &id), &n, |b, _| {
            b.iter(|| jacobian_adjoint(&spec, black_box(&params), &x).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parameter_shift", &id), &n, |b, _| {
            b.iter(|| jacobian_parameter_shift(&spec, black_box(&params), &x).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("finite_diff", &id), &n, |b, _| {
            b.iter(|| jacobian_finite_diff(&spec, black_box(&params), &x, DEFAULT_FD_STEP).unwrap())
        });
        let weights: Vec<f64> = (0..1usize << n).map(|i| (i % 3) as f64 - 1.0).collect();
        group.bench_with_input(BenchmarkId::new("vjp_adjoint", &id), &n, |b, _| {
            b.iter(|| vjp_adjoint(&spec, black_box(&params), &x, &weights).unwrap())
        });
    }
    group.finish();
}

fn batch_gradient(c: &mut Criterion) {
    let (ds, _) = scale_dataset(make_two_moons(32, 0.1, 1).unwrap()).unwrap();
    let xs: Vec<&[f64]> = ds.features().iter().map(Vec::as_slice).collect();
    let mut group = c.benchmark_group("loss_and_grad_batch32");
    for (name, router) in [
        ("linear", RouterSpec::Linear),
        ("deep", RouterSpec::Deep { hidden: vec![13, 13] }),
        (
            "quantum",
            RouterSpec::Quantum {
                n_qubits: None,
                n_layers: 12,
                mapping: Default::default(),
            },
        ),
    ] {
        let spec = ModelSpec {
            name: name.into(),
            router,
            n_experts: 2,
        };
        let model = HybridModel::init(&spec, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| loss_and_grad(&model, black_box(&xs), ds.labels(), GradientBackend::Adjoint).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, jacobians, batch_gradient);
criterion_main!(benches);
