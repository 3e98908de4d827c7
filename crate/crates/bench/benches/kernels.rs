use std::hint::black_box;

use camix_core::{
    iterated_rule, parse_rule, preimage_census, Boxed, Budget, LocalRule, Point, Stepper, TorusConfig,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn p(c: &[i64]) -> Point {
    Point::new(c.to_vec())
}

fn ex34() -> LocalRule {
    LocalRule::linear(2, 2, vec![(p(&[0, 0]), 1), (p(&[0, 1]), 1), (p(&[1, 1]), 1)]).unwrap()
}

fn ex43() -> LocalRule {
    parse_rule(include_str!("../../../rules/ex43.rule")).unwrap()
}

fn permutivity(c: &mut Criterion) {
    let r = ex43();
    c.bench_function("permutive_offsets_brute_force ex43", |b| {
        b.iter(|| r.permutive_offsets_brute_force(Budget::default()).unwrap())
    });
}

fn torus_step(c: &mut Criterion) {
    let r = ex34();
    let stepper = Stepper::new(&r, &[256, 256]).unwrap();
    let cfg = TorusConfig::random(2, &[256, 256], 1, 0).unwrap();
    let mut out = cfg.clone();
    c.bench_function("step 256x256 ex34", |b| b.iter(|| stepper.step_into(black_box(&cfg), &mut out).unwrap()));
}

fn census(c: &mut Criterion) {
    let r = ex34();
    let w = Boxed::new(p(&[0, 0]), p(&[2, 2])).unwrap();
    c.bench_function("census 3x3 ex34", |b| b.iter(|| preimage_census(&r, &w, Budget::default()).unwrap()));
}

fn laurent_power(c: &mut Criterion) {
    let r = ex43();
    c.bench_function("iterated_rule ex43 n=1000", |b| b.iter(|| iterated_rule(&r, black_box(1000)).unwrap()));
}

criterion_group!(benches, permutivity, torus_step, census, laurent_power);
criterion_main!(benches);
