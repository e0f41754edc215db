use fpba_core::clouds::build_semantic_clouds;
use fpba_core::floorplan::{build_floorplan3d, nearest_segment_distance};
use fpba_core::geometry::Pose;
use fpba_core::io::{load_sequence, parse_floorplan, LabelMap};

fn main() {
    let scene = std::path::Path::new(&std::env::args().nth(1).unwrap()).to_owned();
    let frames = load_sequence(&scene).unwrap();
    let poses: Vec<Pose> = frames.iter().map(|f| f.initial_pose).collect();
    let clouds = build_semantic_clouds(&frames, &poses, 8, LabelMap::default()).unwrap();
    let fp2d = parse_floorplan(scene.join("floorplan.txt")).unwrap();
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &clouds.full.points { ymin = ymin.min(p.y); ymax = ymax.max(p.y); }
    let fp3d = build_floorplan3d(&fp2d, ymin, ymax, 2000.0, 1).unwrap();

    let mut beyond = 0usize;
    let mut total = 0usize;
    let mut sum_gap = 0.0;
    for p in &clouds.walls.points {
        let seg_d = nearest_segment_distance(p.x, p.z, &fp2d);
        // plane distance of the INW assignment
        let (idx, _) = fp3d.tree().nearest(p).unwrap();
        let plane_d = fp3d.walls[fp3d.point_wall[idx] as usize].plane.distance(p);
        total += 1;
        if plane_d < seg_d - 0.01 {
            beyond += 1;
            sum_gap += seg_d - plane_d;
        }
    }
    println!("walls points: {total}; beyond-segment (plane<seg-1cm): {} ({:.1}%), mean gap {:.3}",
        beyond, beyond as f64 / total as f64 * 100.0, sum_gap / beyond.max(1) as f64);
}
