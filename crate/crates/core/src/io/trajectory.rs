//! Trajectory file: one `index tx ty tz qx qy qz qw` line per frame.

use crate::error::{Error, Result};
use crate::geometry::Pose;
use std::io::Write;
use std::path::Path;

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<(usize, Pose)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad frame index"))?;
        let mut vals = [0.0f64; 7];
        for (i, f) in fields[1..].iter().enumerate() {
            vals[i] = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad number '{f}'")))?;
        }
        let pose = Pose::from_parts(
            vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6],
        )
        .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        out.push((index, pose));
    }
    Ok(out)
}

pub fn write_trajectory(poses: &[(usize, Pose)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (index, pose) in poses {
        let t = pose.translation();
        let q = pose.rotation().quaternion();
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            index, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
