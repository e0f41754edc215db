//! Finite-difference verification of every analytic gradient, and the
//! structural loss invariants.

use fpba_core::ba::{
    assign_nearest_planes, assign_nearest_points, evaluate_plane_targets, evaluate_point_targets,
    floor_loss, geometric_loss, walls_loss_fixed_nearest_wall, walls_loss_iterative_nearest_wall,
    FixedWallAssignment, FloorModel, MatchPair, MatchSet, PoseGradients,
};
use fpba_core::clouds::SemanticClouds;
use fpba_core::floorplan::{build_floorplan3d, Floorplan3D};
use fpba_core::geometry::{Plane, PointCloud, Pose, Provenance};
use fpba_core::io::{Floorplan2D, FloorplanSegment};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N_FRAMES: usize = 5;
const FD_EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random_poses(rng: &mut ChaCha8Rng) -> Vec<Pose> {
    (0..N_FRAMES)
        .map(|_| {
            Pose::new(
                UnitQuaternion::from_euler_angles(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                ),
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-1.0..1.0),
                ),
            )
        })
        .collect()
}

fn random_cam_point(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(0.5..3.0),
    )
}

/// A semantic cloud whose floor and walls each hold `per_class` points
/// spread across the frames, with camera-frame caches filled in.
fn random_clouds(rng: &mut ChaCha8Rng, poses: &[Pose], per_class: usize) -> SemanticClouds {
    let mut full_points = Vec::new();
    let mut full_cam = Vec::new();
    let mut prov = Vec::new();
    let mut floor_idx = Vec::new();
    let mut walls_idx = Vec::new();

    for i in 0..(2 * per_class) {
        let frame = rng.gen_range(0..N_FRAMES);
        let cam = random_cam_point(rng);
        full_cam.push(cam);
        full_points.push(poses[frame].transform_point(&cam));
        prov.push(Provenance {
            frame,
            row: 0,
            col: i as u32,
        });
        if i < per_class {
            floor_idx.push(i as u32);
        } else {
            walls_idx.push(i as u32);
        }
    }

    let pick = |idx: &[u32]| PointCloud {
        points: idx.iter().map(|&i| full_points[i as usize]).collect(),
        normals: None,
        provenance: Some(idx.iter().map(|&i| prov[i as usize]).collect()),
    };
    let floor = pick(&floor_idx);
    let walls = pick(&walls_idx);
    SemanticClouds {
        full: PointCloud {
            points: full_points,
            normals: None,
            provenance: Some(prov),
        },
        floor,
        walls,
        stride: 1,
        full_cam,
        floor_in_full: floor_idx,
        walls_in_full: walls_idx,
    }
}

fn small_fp3d() -> Floorplan3D {
    let fp = Floorplan2D::new(vec![
        FloorplanSegment {
            u1: -3.0,
            v1: -2.0,
            u2: 3.0,
            v2: -2.0,
        },
        FloorplanSegment {
            u1: 3.0,
            v1: -2.0,
            u2: 3.0,
            v2: 2.0,
        },
        FloorplanSegment {
            u1: 3.0,
            v1: 2.0,
            u2: -3.0,
            v2: 2.0,
        },
    ])
    .unwrap();
    build_floorplan3d(&fp, -1.5, 1.5, 200.0, 17).unwrap()
}

/// Central finite differences of `f` in every local pose coordinate,
/// compared against `analytic` with relative tolerance `TOL`.
fn check_gradients<F: Fn(&[Pose]) -> f64>(
    poses: &[Pose],
    analytic: &PoseGradients,
    f: F,
    label: &str,
) {
    for frame in 0..poses.len() {
        for coord in 0..6 {
            let mut delta_t = Vector3::zeros();
            let mut delta_r = Vector3::zeros();
            if coord < 3 {
                delta_t[coord] = FD_EPS;
            } else {
                delta_r[coord - 3] = FD_EPS;
            }
            let mut plus = poses.to_vec();
            plus[frame] = plus[frame].retract(&delta_t, &delta_r);
            let mut minus = poses.to_vec();
            minus[frame] = minus[frame].retract(&(-delta_t), &(-delta_r));
            let fd = (f(&plus) - f(&minus)) / (2.0 * FD_EPS);
            let an = if coord < 3 {
                analytic.d_translation[frame][coord]
            } else {
                analytic.d_rotation[frame][coord - 3]
            };
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
            assert!(
                err < TOL,
                "{label}: frame {frame} coord {coord}: fd {fd:.8} vs analytic {an:.8} (rel {err:.2e})"
            );
        }
    }
}

#[test]
fn geometric_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let poses = random_poses(&mut rng);
    let pairs: Vec<MatchPair> = (0..100)
        .map(|_| {
            let fa = rng.gen_range(0..N_FRAMES);
            let mut fb = rng.gen_range(0..N_FRAMES);
            while fb == fa {
                fb = rng.gen_range(0..N_FRAMES);
            }
            MatchPair {
                frame_a: fa as u32,
                cam_a: random_cam_point(&mut rng),
                frame_b: fb as u32,
                cam_b: random_cam_point(&mut rng),
            }
        })
        .collect();
    let matches = MatchSet { pairs };
    let (_, grads) = geometric_loss(&matches, &poses);
    check_gradients(
        &poses,
        &grads,
        |p| geometric_loss(&matches, p).0,
        "geometric",
    );
}

#[test]
fn floor_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let poses = random_poses(&mut rng);
    let clouds = random_clouds(&mut rng, &poses, 100);
    let floor = FloorModel {
        plane: Plane::new(Vector3::new(0.0, 1.0, 0.0), 2.0).unwrap(),
    };
    let (_, grads) = floor_loss(&clouds, &poses, &floor);
    check_gradients(&poses, &grads, |p| floor_loss(&clouds, p, &floor).0, "floor");
}

#[test]
fn nearest_point_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let poses = random_poses(&mut rng);
    let clouds = random_clouds(&mut rng, &poses, 100);
    let fp3d = small_fp3d();
    // Targets are held fixed across the finite-difference evaluations,
    // mirroring their treatment as constants in the analytic gradient.
    let targets = assign_nearest_points(&clouds, &poses, &fp3d);
    let (_, grads) = evaluate_point_targets(&clouds, &poses, &targets);
    check_gradients(
        &poses,
        &grads,
        |p| evaluate_point_targets(&clouds, p, &targets).0,
        "walls nearest-point",
    );
}

#[test]
fn iterative_nearest_wall_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let poses = random_poses(&mut rng);
    let clouds = random_clouds(&mut rng, &poses, 100);
    let fp3d = small_fp3d();
    let plane_of = assign_nearest_planes(&clouds, &poses, &fp3d);
    let (_, grads) = evaluate_plane_targets(&clouds, &poses, &fp3d, &plane_of);
    check_gradients(
        &poses,
        &grads,
        |p| evaluate_plane_targets(&clouds, p, &fp3d, &plane_of).0,
        "walls iterative-nearest-wall",
    );
}

#[test]
fn fixed_nearest_wall_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let poses = random_poses(&mut rng);
    let clouds = random_clouds(&mut rng, &poses, 100);
    let fp3d = small_fp3d();
    let plane_of = assign_nearest_planes(&clouds, &poses, &fp3d);
    let assignment = FixedWallAssignment {
        pairs: plane_of
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as u32, p))
            .collect(),
    };
    let (_, grads) = walls_loss_fixed_nearest_wall(&clouds, &poses, &assignment, &fp3d);
    check_gradients(
        &poses,
        &grads,
        |p| walls_loss_fixed_nearest_wall(&clouds, p, &assignment, &fp3d).0,
        "walls fixed-nearest-wall",
    );
}

#[test]
fn geometric_loss_zero_on_consistent_landmarks() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let poses = random_poses(&mut rng);
    let mut pairs = Vec::new();
    for _ in 0..60 {
        let landmark = Vector3::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-3.0..3.0),
        );
        let fa = rng.gen_range(0..N_FRAMES);
        let mut fb = rng.gen_range(0..N_FRAMES);
        while fb == fa {
            fb = rng.gen_range(0..N_FRAMES);
        }
        pairs.push(MatchPair {
            frame_a: fa as u32,
            cam_a: poses[fa].inverse().transform_point(&landmark),
            frame_b: fb as u32,
            cam_b: poses[fb].inverse().transform_point(&landmark),
        });
    }
    let (loss, _) = geometric_loss(&MatchSet { pairs }, &poses);
    assert!(loss < 1e-9, "consistent landmarks give loss {loss}");
}

#[test]
fn geometric_invariant_under_global_rigid_motion_but_pulling_terms_not() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let poses = random_poses(&mut rng);
    let clouds = random_clouds(&mut rng, &poses, 80);
    let fp3d = small_fp3d();
    let floor = FloorModel {
        plane: Plane::new(Vector3::new(0.0, 1.0, 0.0), 0.5).unwrap(),
    };
    let pairs: Vec<MatchPair> = (0..50)
        .map(|_| {
            let fa = rng.gen_range(0..N_FRAMES);
            let fb = (fa + 1) % N_FRAMES;
            MatchPair {
                frame_a: fa as u32,
                cam_a: random_cam_point(&mut rng),
                frame_b: fb as u32,
                cam_b: random_cam_point(&mut rng),
            }
        })
        .collect();
    let matches = MatchSet { pairs };

    let global = Pose::new(
        UnitQuaternion::from_euler_angles(0.4, -0.7, 0.2),
        Vector3::new(2.0, 1.0, -3.0),
    );
    let moved: Vec<Pose> = poses.iter().map(|p| global.compose(p)).collect();

    let (g0, _) = geometric_loss(&matches, &poses);
    let (g1, _) = geometric_loss(&matches, &moved);
    assert!(
        (g0 - g1).abs() < 1e-9,
        "geometric term not rigid-invariant: {g0} vs {g1}"
    );

    let (f0, _) = floor_loss(&clouds, &poses, &floor);
    let (f1, _) = floor_loss(&clouds, &moved, &floor);
    assert!(
        (f0 - f1).abs() > 1e-3,
        "floor term unexpectedly invariant: {f0} vs {f1}"
    );

    let (w0, _) = walls_loss_iterative_nearest_wall(&clouds, &poses, &fp3d);
    let (w1, _) = walls_loss_iterative_nearest_wall(&clouds, &moved, &fp3d);
    assert!(
        (w0 - w1).abs() > 1e-3,
        "walls term unexpectedly invariant: {w0} vs {w1}"
    );
}

#[test]
fn single_wall_inw_equals_fnw() {
    // One wall: every nearest-plane assignment lands on it, so the
    // iterative and the fixed strategies see identical terms.
    let fp = Floorplan2D::new(vec![FloorplanSegment {
        u1: -2.0,
        v1: 0.0,
        u2: 2.0,
        v2: 0.0,
    }])
    .unwrap();
    let fp3d = build_floorplan3d(&fp, 0.0, 2.0, 300.0, 23).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let poses = random_poses(&mut rng);
    let clouds = random_clouds(&mut rng, &poses, 60);

    let (inw, _) = walls_loss_iterative_nearest_wall(&clouds, &poses, &fp3d);
    let assignment = FixedWallAssignment {
        pairs: (0..clouds.walls.len() as u32).map(|i| (i, 0)).collect(),
    };
    let (fnw, _) = walls_loss_fixed_nearest_wall(&clouds, &poses, &assignment, &fp3d);
    assert!(fnw >= 0.0);
    assert!(
        (inw - fnw).abs() < 1e-9,
        "single-wall INW {inw} != FNW {fnw}"
    );
}

#[test]
fn fnw_zero_iff_points_on_their_planes() {
    let fp = Floorplan2D::new(vec![FloorplanSegment {
        u1: -2.0,
        v1: 0.0,
        u2: 2.0,
        v2: 0.0,
    }])
    .unwrap();
    let fp3d = build_floorplan3d(&fp, 0.0, 2.0, 100.0, 29).unwrap();
    let poses = vec![Pose::identity()];

    // Points exactly on the wall plane z = 0.
    let on_plane: Vec<Vector3<f64>> = (0..20)
        .map(|i| Vector3::new(-1.0 + 0.1 * i as f64, 0.5, 0.0))
        .collect();
    let n = on_plane.len();
    let clouds = SemanticClouds {
        full: PointCloud {
            points: on_plane.clone(),
            normals: None,
            provenance: Some(
                (0..n)
                    .map(|i| Provenance {
                        frame: 0,
                        row: 0,
                        col: i as u32,
                    })
                    .collect(),
            ),
        },
        floor: PointCloud::new(vec![]),
        walls: PointCloud {
            points: on_plane.clone(),
            normals: None,
            provenance: Some(
                (0..n)
                    .map(|i| Provenance {
                        frame: 0,
                        row: 0,
                        col: i as u32,
                    })
                    .collect(),
            ),
        },
        stride: 1,
        full_cam: on_plane,
        floor_in_full: vec![],
        walls_in_full: (0..n as u32).collect(),
    };
    let assignment = FixedWallAssignment {
        pairs: (0..n as u32).map(|i| (i, 0)).collect(),
    };
    let (loss, _) = walls_loss_fixed_nearest_wall(&clouds, &poses, &assignment, &fp3d);
    assert!(loss.abs() < 1e-12);

    // Ten points each 0.1 m off the plane: the mean distance is 0.1.
    let mut off = clouds.clone();
    for p in off
        .full_cam
        .iter_mut()
        .chain(off.walls.points.iter_mut())
        .chain(off.full.points.iter_mut())
    {
        p.z += 0.1;
    }
    let (loss, _) = walls_loss_fixed_nearest_wall(&off, &poses, &assignment, &fp3d);
    assert!((loss - 0.1).abs() < 1e-12, "mean distance {loss}");
}
