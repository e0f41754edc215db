//! Floorplan vector file: a units header plus one wall segment per line.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// A wall segment in floorplan coordinates (meters after parsing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorplanSegment {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl FloorplanSegment {
    pub fn length(&self) -> f64 {
        ((self.u2 - self.u1).powi(2) + (self.v2 - self.v1).powi(2)).sqrt()
    }
}

/// A 2D floorplan: wall segments in meters. `units_per_meter` records the
/// source-unit factor that was divided out at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct Floorplan2D {
    pub segments: Vec<FloorplanSegment>,
    pub units_per_meter: f64,
}

impl Floorplan2D {
    pub fn new(segments: Vec<FloorplanSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyFloorplan);
        }
        Ok(Floorplan2D {
            segments,
            units_per_meter: 1.0,
        })
    }
}

/// Parse a floorplan file. Coordinates are converted to meters using the
/// `units_per_meter` header.
pub fn parse_floorplan(path: impl AsRef<Path>) -> Result<Floorplan2D> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut units: Option<f64> = None;
    let mut segments = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("units_per_meter") => {
                let v: f64 = parts
                    .next()
                    .ok_or_else(|| Error::parse(path, lineno, "missing units_per_meter value"))?
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, "bad units_per_meter value"))?;
                if !(v > 0.0) {
                    return Err(Error::parse(path, lineno, "units_per_meter must be > 0"));
                }
                units = Some(v);
            }
            Some("segment") => {
                let upm = units.ok_or_else(|| {
                    Error::parse(path, lineno, "segment before units_per_meter header")
                })?;
                let mut coord = || -> Result<f64> {
                    parts
                        .next()
                        .ok_or_else(|| Error::parse(path, lineno, "segment needs 4 coordinates"))?
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, lineno, "bad segment coordinate"))
                };
                let seg = FloorplanSegment {
                    u1: coord()? / upm,
                    v1: coord()? / upm,
                    u2: coord()? / upm,
                    v2: coord()? / upm,
                };
                if seg.length() <= 1e-6 {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!(
                            "zero-length segment ({}, {}) -> ({}, {})",
                            seg.u1, seg.v1, seg.u2, seg.v2
                        ),
                    ));
                }
                segments.push(seg);
            }
            Some(other) => {
                return Err(Error::parse(path, lineno, format!("unknown record '{other}'")));
            }
            None => unreachable!("blank lines are skipped"),
        }
    }

    if segments.is_empty() {
        return Err(Error::EmptyFloorplan);
    }
    Ok(Floorplan2D {
        segments,
        units_per_meter: units.unwrap_or(1.0),
    })
}

/// Write a floorplan in meters (`units_per_meter 1`).
pub fn write_floorplan(fp: &Floorplan2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "units_per_meter 1").expect("vec write");
    for s in &fp.segments {
        writeln!(out, "segment {} {} {} {}", s.u1, s.v1, s.u2, s.v2).expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fpba-fp-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn parses_two_segments() {
        let p = tmpfile(
            "two.txt",
            "units_per_meter 1\nsegment 0 0 5 0\nsegment 5 0 5 4\n",
        );
        let fp = parse_floorplan(&p).unwrap();
        assert_eq!(fp.segments.len(), 2);
        assert_eq!(fp.segments[0].u2, 5.0);
    }

    #[test]
    fn resolves_units() {
        let p = tmpfile("units.txt", "units_per_meter 100\nsegment 0 0 500 0\n");
        let fp = parse_floorplan(&p).unwrap();
        assert!((fp.segments[0].length() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_segment_names_line() {
        let p = tmpfile(
            "zero.txt",
            "units_per_meter 1\nsegment 0 0 1 0\nsegment 2 2 2 2\n",
        );
        match parse_floorplan(&p) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("zero-length"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_floorplan_is_error() {
        let p = tmpfile("empty.txt", "units_per_meter 1\n");
        assert!(matches!(parse_floorplan(&p), Err(Error::EmptyFloorplan)));
    }

    #[test]
    fn write_parse_roundtrip_is_exact() {
        let fp = Floorplan2D::new(vec![
            FloorplanSegment {
                u1: 0.125,
                v1: -3.75,
                u2: 4.0 / 3.0,
                v2: 0.1,
            },
            FloorplanSegment {
                u1: 1e-3,
                v1: 2.0,
                u2: 7.25,
                v2: 2.0,
            },
        ])
        .unwrap();
        let dir = std::env::temp_dir().join("fpba-fp-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("roundtrip.txt");
        write_floorplan(&fp, &p).unwrap();
        let fp2 = parse_floorplan(&p).unwrap();
        assert_eq!(fp.segments, fp2.segments);
        // Re-writing reproduces the bytes.
        let bytes1 = std::fs::read(&p).unwrap();
        let p2 = dir.join("roundtrip2.txt");
        write_floorplan(&fp2, &p2).unwrap();
        assert_eq!(bytes1, std::fs::read(&p2).unwrap());
    }
}
