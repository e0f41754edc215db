use fpba_core::ba::*;
use fpba_core::clouds::SemanticClouds;
use fpba_core::floorplan::build_floorplan3d;
use fpba_core::geometry::{Plane, PointCloud, Pose};
use fpba_core::io::{Floorplan2D, FloorplanSegment};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let n_frames: usize = std::env::args().nth(1).unwrap().parse().unwrap();
    let pert: f64 = std::env::args().nth(2).unwrap().parse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let gt: Vec<Pose> = (0..n_frames)
        .map(|i| {
            Pose::new(
                UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.05 * i as f64),
                Vector3::new(0.1 * i as f64, 0.0, 0.0),
            )
        })
        .collect();
    let mut pairs = Vec::new();
    for f in 0..n_frames - 1 {
        for _ in 0..20 {
            let lm = gt[f].transform_point(&Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..4.0),
            ));
            pairs.push(MatchPair {
                frame_a: f as u32,
                cam_a: gt[f].inverse().transform_point(&lm),
                frame_b: (f + 1) as u32,
                cam_b: gt[f + 1].inverse().transform_point(&lm),
            });
        }
    }
    let matches = MatchSet { pairs };
    // random-walk perturbation, first frame fixed
    let mut poses = vec![gt[0]];
    let mut acc_t = Vector3::zeros();
    let mut acc_r = Vector3::zeros();
    for i in 1..n_frames {
        acc_t += Vector3::new(rng.gen_range(-pert..pert), rng.gen_range(-pert..pert), rng.gen_range(-pert..pert));
        acc_r += Vector3::new(rng.gen_range(-pert..pert), rng.gen_range(-pert..pert), rng.gen_range(-pert..pert)) * 0.3;
        poses.push(gt[i].retract(&acc_t, &acc_r));
    }

    let clouds = SemanticClouds {
        full: PointCloud::new(vec![]),
        floor: PointCloud::new(vec![]),
        walls: PointCloud::new(vec![]),
        stride: 1,
        full_cam: vec![],
        floor_in_full: vec![],
        walls_in_full: vec![],
    };
    let fp3d = build_floorplan3d(
        &Floorplan2D::new(vec![FloorplanSegment { u1: 0.0, v1: 0.0, u2: 1.0, v2: 0.0 }]).unwrap(),
        0.0, 1.0, 10.0, 1,
    ).unwrap();
    let floor = FloorModel { plane: Plane::new(Vector3::new(0.0, 1.0, 0.0), 0.0).unwrap() };
    let config = BAConfig {
        lambda_floor: 0.0,
        lambda_walls: 0.0,
        walls_strategy: WallsStrategy::NearestPoint,
        lr_initial: 1e-3,
        lr_reduced: 1e-4,
        lr_switch_step: 20_000,
        convergence_eps: 1e-5,
        momentum: 0.9,
        realign_period: 0,
        max_steps: 40_000,
    };
    let t0 = std::time::Instant::now();
    let result = optimize_poses(&poses, &matches, &clouds, &fp3d, &floor, &config, None).unwrap();
    let log = result.log;
    let last = log.records.last().unwrap();
    let post: Vec<f64> = log.records.iter().filter(|r| r.step > 20_000).map(|r| r.total).collect();
    let ni = post.windows(2).filter(|w| w[1] <= w[0]).count();
    let frac = if post.len() > 1 { ni as f64 / (post.len() - 1) as f64 } else { 1.0 };
    println!(
        "frames={n_frames} pert={pert}: end step {} eps={} post_steps={} non_incr={:.1}% loss {:.6}->{:.6} ({:.1}s)",
        last.step, log.terminated_by_eps, post.len(), frac * 100.0,
        log.records[0].total, last.total, t0.elapsed().as_secs_f64()
    );
}
