use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use she_core::covariance::CovarianceModel;
use she_core::galerkin::{GalerkinSystem, InitialData, SystemSpec};
use she_core::integrators::StepScheme;
use she_core::montecarlo::{mean_square_curve, EnsembleConfig};
use she_core::stability::{region_sweep, Classifier, RegionConfig};
use she_core::Exec;

fn backends() -> [(&'static str, Exec); 2] {
    [
        ("parallel", Exec::Parallel),
        ("sequential", Exec::Sequential),
    ]
}

fn ensemble(c: &mut Criterion) {
    let model = CovarianceModel::power_law(1.001, 100).unwrap();
    let sys = GalerkinSystem::assemble(SystemSpec::new(20, 20, 1.0, 1.0, model)).unwrap();
    let u0 = InitialData::PolyX1mx.project(20).unwrap();
    let mut group = c.benchmark_group("mean_square_curve");
    group.sample_size(10);
    for (name, exec) in backends() {
        let cfg = EnsembleConfig::new(512, 1, 1e-3, 500, StepScheme::ImplicitEuler).with_exec(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| mean_square_curve(&sys, cfg, &u0).unwrap())
        });
    }
    group.finish();
}

fn region(c: &mut Criterion) {
    let model = CovarianceModel::power_law(1.001, 10).unwrap();
    let sys = GalerkinSystem::assemble(SystemSpec::new(10, 10, 0.0, 0.0, model)).unwrap();
    let mut group = c.benchmark_group("region_sweep_mc");
    group.sample_size(10);
    for (name, exec) in backends() {
        let mut cfg = RegionConfig::new((0.0, 4.0), (-10.0, 10.0));
        cfg.beta1.count = 6;
        cfg.beta0.count = 6;
        cfg.classifier = Classifier::MonteCarlo {
            paths: 100,
            horizon: 0.5,
        };
        cfg.exec = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| region_sweep(&sys, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble, region);
criterion_main!(benches);
