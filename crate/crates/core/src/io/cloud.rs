//! Binary point-cloud export: little-endian points with optional normals
//! and provenance blocks.

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Provenance};
use nalgebra::Vector3;
use std::io::{Read, Write};
use std::path::Path;

const CLOUD_MAGIC: &[u8; 4] = b"FBC1";
const FLAG_NORMALS: u8 = 1;
const FLAG_PROVENANCE: u8 = 2;

pub fn export_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wr = std::io::BufWriter::new(file);
    let mut flags = 0u8;
    if cloud.normals.is_some() {
        flags |= FLAG_NORMALS;
    }
    if cloud.provenance.is_some() {
        flags |= FLAG_PROVENANCE;
    }
    let emit = |wr: &mut dyn Write, bytes: &[u8]| -> Result<()> {
        wr.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    emit(&mut wr, CLOUD_MAGIC)?;
    emit(&mut wr, &[flags])?;
    emit(&mut wr, &(cloud.len() as u64).to_le_bytes())?;
    for p in &cloud.points {
        for c in [p.x, p.y, p.z] {
            emit(&mut wr, &c.to_le_bytes())?;
        }
    }
    if let Some(normals) = &cloud.normals {
        for n in normals {
            for c in [n.x, n.y, n.z] {
                emit(&mut wr, &c.to_le_bytes())?;
            }
        }
    }
    if let Some(prov) = &cloud.provenance {
        for pr in prov {
            emit(&mut wr, &(pr.frame as u32).to_le_bytes())?;
            emit(&mut wr, &pr.row.to_le_bytes())?;
            emit(&mut wr, &pr.col.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn import_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = std::io::BufReader::new(file);

    let mut head = [0u8; 13];
    rd.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    if &head[0..4] != CLOUD_MAGIC {
        return Err(Error::Format {
            path: path.into(),
            msg: "bad cloud magic".into(),
        });
    }
    let flags = head[4];
    let count = u64::from_le_bytes(head[5..13].try_into().unwrap()) as usize;

    let read_vec3s = |rd: &mut dyn Read| -> Result<Vec<Vector3<f64>>> {
        let mut raw = vec![0u8; count * 24];
        rd.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
        Ok(raw
            .chunks_exact(24)
            .map(|c| {
                Vector3::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                    f64::from_le_bytes(c[16..24].try_into().unwrap()),
                )
            })
            .collect())
    };

    let points = read_vec3s(&mut rd)?;
    let normals = if flags & FLAG_NORMALS != 0 {
        Some(read_vec3s(&mut rd)?)
    } else {
        None
    };
    let provenance = if flags & FLAG_PROVENANCE != 0 {
        let mut raw = vec![0u8; count * 12];
        rd.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
        Some(
            raw.chunks_exact(12)
                .map(|c| Provenance {
                    frame: u32::from_le_bytes(c[0..4].try_into().unwrap()) as usize,
                    row: u32::from_le_bytes(c[4..8].try_into().unwrap()),
                    col: u32::from_le_bytes(c[8..12].try_into().unwrap()),
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(PointCloud {
        points,
        normals,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tmpdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fpba-cloud-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn roundtrip_preserves_bytes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let points: Vec<Vector3<f64>> = (0..1000)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(points);
        let p1 = tmpdir().join("a.fbc");
        export_cloud(&cloud, &p1).unwrap();
        let loaded = import_cloud(&p1).unwrap();
        assert_eq!(cloud, loaded);
        let p2 = tmpdir().join("b.fbc");
        export_cloud(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn empty_cloud_has_zero_count_header() {
        let p = tmpdir().join("empty.fbc");
        export_cloud(&PointCloud::new(vec![]), &p).unwrap();
        let loaded = import_cloud(&p).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(std::fs::read(&p).unwrap().len(), 13);
    }

    #[test]
    fn normals_flag_roundtrips() {
        let cloud = PointCloud {
            points: vec![Vector3::new(1.0, 2.0, 3.0)],
            normals: Some(vec![Vector3::new(0.0, 1.0, 0.0)]),
            provenance: Some(vec![Provenance {
                frame: 7,
                row: 11,
                col: 13,
            }]),
        };
        let p = tmpdir().join("n.fbc");
        export_cloud(&cloud, &p).unwrap();
        let loaded = import_cloud(&p).unwrap();
        assert!(loaded.normals.is_some());
        assert_eq!(loaded, cloud);
    }
}
