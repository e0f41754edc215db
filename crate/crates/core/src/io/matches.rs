//! Keypoint match file: `frame_a ua va frame_b ub vb` per line.

use super::KeypointMatch;
use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Result of loading a match file: the in-bounds matches plus the number
/// of records dropped for out-of-bounds coordinates.
#[derive(Debug, Clone)]
pub struct MatchLoad {
    pub matches: Vec<KeypointMatch>,
    pub dropped_out_of_bounds: usize,
}

/// Load matches, validating frame indices against `frame_sizes`
/// (width, height per frame index).
///
/// Unknown frame indices are a hard error; coordinates outside the image
/// are dropped and counted.
pub fn load_matches(path: impl AsRef<Path>, frame_sizes: &[(usize, usize)]) -> Result<MatchLoad> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut matches = Vec::new();
    let mut dropped = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        let frame_a: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad frame index"))?;
        let ua: f64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad coordinate"))?;
        let va: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad coordinate"))?;
        let frame_b: usize = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad frame index"))?;
        let ub: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad coordinate"))?;
        let vb: f64 = fields[5]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad coordinate"))?;

        for f in [frame_a, frame_b] {
            if f >= frame_sizes.len() {
                return Err(Error::UnknownFrame {
                    frame: f,
                    count: frame_sizes.len(),
                });
            }
        }
        if frame_a == frame_b {
            return Err(Error::parse(
                path,
                lineno,
                format!("match within a single frame {frame_a}"),
            ));
        }
        let (wa, ha) = frame_sizes[frame_a];
        let (wb, hb) = frame_sizes[frame_b];
        let in_bounds = |u: f64, v: f64, w: usize, h: usize| {
            u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64
        };
        if !in_bounds(ua, va, wa, ha) || !in_bounds(ub, vb, wb, hb) {
            dropped += 1;
            continue;
        }
        matches.push(KeypointMatch {
            frame_a,
            ua,
            va,
            frame_b,
            ub,
            vb,
        });
    }

    Ok(MatchLoad {
        matches,
        dropped_out_of_bounds: dropped,
    })
}

pub fn write_matches(matches: &[KeypointMatch], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for m in matches {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            m.frame_a, m.ua, m.va, m.frame_b, m.ub, m.vb
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes() -> Vec<(usize, usize)> {
        vec![(160, 120); 10]
    }

    fn tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fpba-match-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn loads_well_formed_lines() {
        let p = tmp(
            "ok.txt",
            "0 10.5 20.25 1 30 40\n1 1 1 2 2 2\n3 0 0 4 159 119\n5 10 10 6 11 11\n7 5 5 8 6 6\n",
        );
        let load = load_matches(&p, &sizes()).unwrap();
        assert_eq!(load.matches.len(), 5);
        assert_eq!(load.dropped_out_of_bounds, 0);
    }

    #[test]
    fn unknown_frame_is_hard_error() {
        let p = tmp("unknown.txt", "0 1 1 99 2 2\n");
        assert!(matches!(
            load_matches(&p, &sizes()),
            Err(Error::UnknownFrame { frame: 99, .. })
        ));
    }

    #[test]
    fn out_of_bounds_dropped_with_count() {
        let p = tmp("oob.txt", "0 200 20 1 30 40\n0 10 20 1 30 40\n");
        let load = load_matches(&p, &sizes()).unwrap();
        assert_eq!(load.matches.len(), 1);
        assert_eq!(load.dropped_out_of_bounds, 1);
    }

    #[test]
    fn roundtrip() {
        let ms = vec![
            KeypointMatch {
                frame_a: 0,
                ua: 1.5,
                va: 2.25,
                frame_b: 3,
                ub: 100.0,
                vb: 90.125,
            };
            3
        ];
        let dir = std::env::temp_dir().join("fpba-match-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("rt.txt");
        write_matches(&ms, &p).unwrap();
        let load = load_matches(&p, &sizes()).unwrap();
        assert_eq!(load.matches, ms);
    }
}
