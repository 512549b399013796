use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use primplan::{
    build_index, build_library, check, parameterize, solve_lp_2d, CloudStack, HalfPlane, IndexParams, Preset,
    Vector2, Vector3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vector3::new(rng.random_range(0.0..5.0), rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0)))
        .collect()
}

fn bench_check(c: &mut Criterion) {
    let points = cloud(2000, 7);
    let mut group = c.benchmark_group("check");
    for preset in [Preset::Low, Preset::Medium, Preset::High] {
        let lib = build_library(&preset.library_config()).unwrap();
        let index = build_index(&lib, IndexParams::default()).unwrap();
        let slice = lib.num_slices() / 2;
        group.bench_with_input(BenchmarkId::from_parameter(lib.paths.len()), &points, |b, pts| {
            b.iter(|| check(&index, pts, slice).unwrap())
        });
    }
    group.finish();
}

fn bench_sample(c: &mut Criterion) {
    let mut stack = CloudStack::new(5);
    for i in 0..5 {
        stack.push_frame(cloud(20_000, i), Vector3::zeros());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("sample_fixed 2000 of 100k", |b| b.iter(|| stack.sample_fixed(2000, &mut rng)));
}

fn bench_lp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Random tangent half-planes of the unit disc: always feasible and bounded.
    let planes: Vec<HalfPlane> = (0..16)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            HalfPlane::new(a.cos(), a.sin(), 1.0)
        })
        .chain([
            HalfPlane::new(1.0, 0.0, 2.0),
            HalfPlane::new(-1.0, 0.0, 2.0),
            HalfPlane::new(0.0, 1.0, 2.0),
            HalfPlane::new(0.0, -1.0, 2.0),
        ])
        .collect();
    c.bench_function("lp 20 half-planes", |b| b.iter(|| solve_lp_2d(Vector2::new(0.3, 1.0), &planes).unwrap()));
}

fn bench_topp(c: &mut Criterion) {
    let cfg = Preset::High.library_config();
    let lib = build_library(&cfg).unwrap();
    let path = &lib.paths[0];
    c.bench_function("parameterize one arc", |b| {
        b.iter(|| parameterize(path, 1.0, 1.0, &cfg.bounds, &cfg.topp).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_check, bench_sample, bench_lp, bench_topp
}
criterion_main!(benches);
