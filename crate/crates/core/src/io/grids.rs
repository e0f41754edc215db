//! Binary 2D grids: 16-bit depth and 8-bit label images.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const DEPTH_MAGIC: &[u8; 4] = b"FBD1";
const LABEL_MAGIC: &[u8; 4] = b"FBL1";

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            data: vec![T::default(); width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "grid data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }
}

fn read_header(path: &Path, magic: &[u8; 4], buf: &mut impl Read) -> Result<(usize, usize)> {
    let mut head = [0u8; 12];
    buf.read_exact(&mut head)
        .map_err(|e| Error::io(path, e))?;
    if &head[0..4] != magic {
        return Err(Error::Format {
            path: path.into(),
            msg: format!(
                "bad magic {:?}, expected {:?}",
                &head[0..4],
                std::str::from_utf8(magic).unwrap()
            ),
        });
    }
    let w = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    Ok((w, h))
}

pub fn write_depth_grid(grid: &Grid<u16>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(12 + grid.data.len() * 2);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(grid.width as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height as u32).to_le_bytes());
    for v in &grid.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_depth_grid(path: impl AsRef<Path>) -> Result<Grid<u16>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = std::io::BufReader::new(file);
    let (w, h) = read_header(path, DEPTH_MAGIC, &mut rd)?;
    let mut raw = vec![0u8; w * h * 2];
    rd.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
    let data = raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Grid::from_data(w, h, data)
}

pub fn write_label_grid(grid: &Grid<u8>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wr = std::io::BufWriter::new(file);
    wr.write_all(LABEL_MAGIC).map_err(|e| Error::io(path, e))?;
    wr.write_all(&(grid.width as u32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    wr.write_all(&(grid.height as u32).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    wr.write_all(&grid.data).map_err(|e| Error::io(path, e))
}

pub fn read_label_grid(path: impl AsRef<Path>) -> Result<Grid<u8>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = std::io::BufReader::new(file);
    let (w, h) = read_header(path, LABEL_MAGIC, &mut rd)?;
    let mut data = vec![0u8; w * h];
    rd.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
    Grid::from_data(w, h, data)
}
