use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rmst_core::estimators::{estimate, Method, NuisanceConfig};
use rmst_core::pseudo::rmst_pseudo_per_arm;
use rmst_core::simgen::SimScenario;

fn estimators(c: &mut Criterion) {
    let data = SimScenario::named("S1").unwrap().generate(1000).unwrap();
    let po = rmst_pseudo_per_arm(&data, 12.0).unwrap();
    let config = NuisanceConfig::default();
    let mut group = c.benchmark_group("estimate n=1000");
    group.sample_size(20);
    for method in Method::ALL {
        group.bench_function(method.name(), |b| {
            b.iter(|| estimate(black_box(&po), method, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, estimators);
criterion_main!(benches);
