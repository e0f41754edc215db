//! Per-step evaluation cost of the three walls-pulling strategies on a
//! large walls cloud. The fixed strategy skips the nearest-neighbor
//! queries, which is where the other two spend nearly all their time.

use criterion::{criterion_group, criterion_main, Criterion};
use fpba_core::ba::{
    assign_nearest_planes, walls_loss_fixed_nearest_wall, walls_loss_iterative_nearest_wall,
    walls_loss_nearest_point, FixedWallAssignment,
};
use fpba_core::clouds::SemanticClouds;
use fpba_core::floorplan::build_floorplan3d;
use fpba_core::geometry::{PointCloud, Pose, Provenance};
use fpba_core::io::{Floorplan2D, FloorplanSegment};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N_POINTS: usize = 100_000;
const N_FRAMES: usize = 50;

fn plan() -> Floorplan2D {
    let seg = |u1: f64, v1: f64, u2: f64, v2: f64| FloorplanSegment { u1, v1, u2, v2 };
    Floorplan2D::new(vec![
        seg(0.0, 0.0, 9.0, 0.0),
        seg(9.0, 0.0, 9.0, 4.0),
        seg(9.0, 4.0, 0.0, 4.0),
        seg(0.0, 4.0, 0.0, 0.0),
        seg(3.0, 0.0, 3.0, 1.5),
        seg(6.0, 2.5, 6.0, 4.0),
    ])
    .unwrap()
}

/// A walls cloud of `N_POINTS` points scattered near the plan walls,
/// spread over `N_FRAMES` camera poses.
fn walls_fixture() -> (SemanticClouds, Vec<Pose>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let fp = plan();
    let mut points = Vec::with_capacity(N_POINTS);
    let mut prov = Vec::with_capacity(N_POINTS);
    for i in 0..N_POINTS {
        let seg = &fp.segments[rng.gen_range(0..fp.segments.len())];
        let t: f64 = rng.gen_range(0.0..1.0);
        let off: f64 = rng.gen_range(-0.05..0.05);
        let dx = seg.u2 - seg.u1;
        let dz = seg.v2 - seg.v1;
        let len = (dx * dx + dz * dz).sqrt();
        points.push(Vector3::new(
            seg.u1 + t * dx + off * (dz / len),
            rng.gen_range(0.0..2.5),
            seg.v1 + t * dz - off * (dx / len),
        ));
        prov.push(Provenance {
            frame: i % N_FRAMES,
            row: 0,
            col: i as u32,
        });
    }
    let poses = vec![Pose::identity(); N_FRAMES];
    let walls = PointCloud {
        points: points.clone(),
        normals: None,
        provenance: Some(prov),
    };
    let clouds = SemanticClouds {
        full: walls.clone(),
        floor: PointCloud::new(vec![]),
        walls,
        stride: 1,
        full_cam: points,
        floor_in_full: vec![],
        walls_in_full: (0..N_POINTS as u32).collect(),
    };
    (clouds, poses)
}

fn bench_strategies(c: &mut Criterion) {
    let (clouds, poses) = walls_fixture();
    let fp3d = build_floorplan3d(&plan(), 0.0, 2.5, 500.0, 1).unwrap();
    let plane_of = assign_nearest_planes(&clouds, &poses, &fp3d);
    let assignment = FixedWallAssignment {
        pairs: plane_of
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as u32, p))
            .collect(),
    };

    let mut group = c.benchmark_group("walls_loss_step");
    group.sample_size(20);
    group.bench_function("nearest_point", |b| {
        b.iter(|| walls_loss_nearest_point(&clouds, &poses, &fp3d))
    });
    group.bench_function("iterative_nearest_wall", |b| {
        b.iter(|| walls_loss_iterative_nearest_wall(&clouds, &poses, &fp3d))
    });
    group.bench_function("fixed_nearest_wall", |b| {
        b.iter(|| walls_loss_fixed_nearest_wall(&clouds, &poses, &assignment, &fp3d))
    });
    group.finish();
}

criterion_group!(benches, bench_strategies);
criterion_main!(benches);
