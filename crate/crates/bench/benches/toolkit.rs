use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use pccorrupt::augment::emd_assign;
use pccorrupt::corruption::{apply_corruption, CorruptionInput, CorruptionKind, CorruptionSpec, SeverityTable};
use pccorrupt::geometry::KnnIndex;
use pccorrupt::nn::{Architecture, Mode, NetworkState};
use pccorrupt::occlusion::{nearest_hit_exhaustive, Bvh};
use pccorrupt_bench::{batch, cloud, mesh, rays, sphere};

fn knn(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn");
    for n in [1024, 4096] {
        let pts = cloud(0, n).into_points();
        g.bench_with_input(BenchmarkId::new("build", n), &pts, |b, pts| b.iter(|| KnnIndex::build(black_box(pts))));
        let index = KnnIndex::build(&pts);
        g.bench_with_input(BenchmarkId::new("query_k16_x256", n), &pts, |b, pts| {
            b.iter(|| {
                for q in pts.iter().step_by(n / 256) {
                    black_box(index.query(q, 16).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn corruptions(c: &mut Criterion) {
    let table = SeverityTable::default();
    let input = cloud(1, 1024);
    let shape = mesh(1);
    let mut g = c.benchmark_group("corruption_s3");
    g.sample_size(20);
    for kind in CorruptionKind::ALL {
        let spec = CorruptionSpec::new(kind, 3, 0).unwrap();
        let source = if kind.needs_mesh() {
            CorruptionInput::with_mesh(&input, &shape)
        } else {
            CorruptionInput::cloud(&input)
        };
        g.bench_function(kind.name(), |b| b.iter(|| apply_corruption(source, &spec, &table, 1).unwrap()));
    }
    g.finish();
}

fn raycast(c: &mut Criterion) {
    let mut g = c.benchmark_group("raycast_1000");
    let rays = rays(1000);
    for faces in [360, 5000] {
        let m = sphere(faces);
        let bvh = Bvh::build(&m);
        g.bench_with_input(BenchmarkId::new("bvh", m.faces().len()), &rays, |b, rays| {
            b.iter(|| rays.iter().filter(|r| bvh.nearest_hit(r).is_some()).count())
        });
        if m.faces().len() <= 500 {
            g.bench_with_input(BenchmarkId::new("exhaustive", m.faces().len()), &rays, |b, rays| {
                b.iter(|| rays.iter().filter(|r| nearest_hit_exhaustive(&m, r).is_some()).count())
            });
        }
    }
    g.finish();
}

fn assignment(c: &mut Criterion) {
    let mut g = c.benchmark_group("emd_assign");
    g.sample_size(10);
    for n in [64, 256, 1024] {
        let a = cloud(0, n).into_points();
        let b = cloud(2, n).into_points();
        g.bench_function(BenchmarkId::from_parameter(n), |bench| bench.iter(|| emd_assign(&a, &b).unwrap()));
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let state = NetworkState::new(Architecture::new(4), 0).unwrap();
    let data = batch(16, 1024);
    let clouds: Vec<_> = data.iter().map(|d| d.cloud.points()).collect();
    let mut g = c.benchmark_group("network_16x1024");
    g.sample_size(10);
    g.bench_function("forward_eval", |b| b.iter(|| state.forward(&clouds, Mode::Eval).unwrap()));
    g.bench_function("forward_backward", |b| {
        b.iter(|| {
            let pass = state.forward(&clouds, Mode::Train).unwrap();
            let d = DMatrix::from_element(clouds.len(), 4, 0.25);
            state.backward(&pass.cache, &d).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, knn, corruptions, raycast, assignment, network);
criterion_main!(benches);
