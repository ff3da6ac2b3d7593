//! Sequential against data-parallel execution of the hot loops on the
//! 120 x 40 half beam.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use levelset_density::driver::{Problem, ProblemSpec};
use levelset_density::grid::build_filter;
use levelset_density::io::RunConfig;
use levelset_density::par;

fn problem() -> Problem {
    let cfg = RunConfig::from_toml_str("").unwrap();
    Problem::new(ProblemSpec::from_config(&cfg).unwrap()).unwrap()
}

fn bench(c: &mut Criterion) {
    let p = problem();
    let s = p.spec.initial.clone();
    let ev = p.evaluate(&s, 60, None).unwrap();

    for (label, on) in [("sequential", false), ("parallel", true)] {
        par::set_enabled(on);
        let mut g = c.benchmark_group(label);
        g.sample_size(20);
        g.bench_function("evaluate", |b| b.iter(|| p.evaluate(black_box(&s), 60, Some(&ev.target)).unwrap()));
        g.bench_function("density_filter_build", |b| {
            b.iter(|| build_filter(black_box(&p.spec.grid), p.spec.density_filter_radius).unwrap())
        });
        g.bench_function("density_filter_apply", |b| b.iter(|| p.f_rho.apply(black_box(&s.s_rho)).unwrap()));
        g.finish();
    }
    par::set_enabled(true);
}

criterion_group!(benches, bench);
criterion_main!(benches);
