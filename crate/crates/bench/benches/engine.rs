use criterion::{black_box, criterion_group, criterion_main, Criterion};
use exclusion_core::coupling::{attractive_rates, increasing_rates};
use exclusion_core::exact::build_generator;
use exclusion_core::monotone::is_monotone;
use exclusion_core::sim::{random_configuration, stream_rng, CoupledEngine, SingleEngine};
use exclusion_core::{make_model_positional, CoupledState, CouplingKind, Exact, ModelId, RateSpec};

fn gg() -> RateSpec {
    let p = [2, 1, 1, 2].map(Exact::from_integer);
    make_model_positional(ModelId::GgSymmetrized, &p).unwrap()
}

fn traffic() -> RateSpec {
    make_model_positional(ModelId::Traffic2, &[Exact::new(1, 2), Exact::new(1, 2)]).unwrap()
}

fn monotonicity(c: &mut Criterion) {
    let spec = gg();
    c.bench_function("is_monotone/gg/f64", |b| b.iter(|| is_monotone::<f64>(black_box(&spec))));
    c.bench_function("is_monotone/gg/exact", |b| b.iter(|| is_monotone::<Exact>(black_box(&spec))));
}

fn tables(c: &mut Criterion) {
    let spec = gg();
    let rates = spec.table::<f64>();
    let mut rng = stream_rng(1, 0);
    let xi = random_configuration(32, 12, &mut rng).unwrap();
    let zeta = random_configuration(32, 20, &mut rng).unwrap();
    c.bench_function("coupling/increasing/L32", |b| b.iter(|| increasing_rates(&rates, black_box(&xi), &zeta)));
    c.bench_function("coupling/attractive/L32", |b| b.iter(|| attractive_rates(&rates, black_box(&xi), &zeta)));
}

fn generators(c: &mut Criterion) {
    let spec = traffic();
    c.bench_function("generator/traffic2/L10", |b| b.iter(|| build_generator::<f64>(&spec, black_box(10)).unwrap()));
}

fn engines(c: &mut Criterion) {
    let spec = traffic();
    let mut rng = stream_rng(2, 0);
    let eta = random_configuration(128, 64, &mut rng).unwrap();
    c.bench_function("single/1000_events", |b| {
        b.iter(|| {
            let mut engine = SingleEngine::new(&spec, eta).unwrap();
            let mut rng = stream_rng(3, 0);
            for _ in 0..1000 {
                let (_, x, y) = engine.next_event(&mut rng).unwrap();
                engine.apply(x, y);
            }
            engine.state()
        })
    });
    let mut rng = stream_rng(4, 0);
    let pair = CoupledState::new(
        random_configuration(32, 16, &mut rng).unwrap(),
        random_configuration(32, 16, &mut rng).unwrap(),
    )
    .unwrap();
    c.bench_function("coupled/attractive/100_events", |b| {
        b.iter(|| {
            let mut engine = CoupledEngine::new(&spec, pair, CouplingKind::Attractive).unwrap();
            let mut rng = stream_rng(5, 0);
            for _ in 0..100 {
                match engine.next_event(&mut rng).unwrap() {
                    Some((_, m)) => engine.apply(&m),
                    None => break,
                }
            }
        })
    });
}

criterion_group!(benches, monotonicity, tables, generators, engines);
criterion_main!(benches);
