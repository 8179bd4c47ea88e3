use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use d2dra::oracle::{grid_search_all, grid_search_reference, OracleOptions};
use d2dra::{Goal, GridSpec};
use d2dra_bench::{dataset, system};

fn oracle(c: &mut Criterion) {
    let ds = dataset(1, 3);
    let inst = &ds.instances()[0];
    let sys = system(500.0);
    let opts = OracleOptions::default();

    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    for spec in [GridSpec::new(21, 21).unwrap(), GridSpec::default()] {
        g.bench_function(format!("all_goals/{spec}"), |b| {
            b.iter(|| grid_search_all(black_box(inst), &spec, &sys, &opts).unwrap())
        });
    }
    let small = GridSpec::new(21, 21).unwrap();
    g.bench_function("reference/21x21", |b| {
        b.iter(|| grid_search_reference(black_box(inst), Goal::MaxSe, &small, &sys, opts.budget).unwrap())
    });
    g.finish();
}

criterion_group!(benches, oracle);
criterion_main!(benches);
