//! RDC1 cube files.
//!
//! Little-endian layout: magic `RDC1`, then `u32` version (1), kind
//! (0 = interleaved complex f32, 1 = magnitude f32), dim0, dim1 and
//! frame count, then the payload frame by frame, each frame row-major
//! `dim0 x dim1`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rd_pipeline::{MapValues, RdMap};
use crate::signal_model::{BeatFrame, Provenance, RadarConfig};

pub const MAGIC: &[u8; 4] = b"RDC1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

const OFFSET_VERSION: u64 = 4;
const OFFSET_KIND: u64 = 8;
const OFFSET_DIMS: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeKind {
    Complex = 0,
    Magnitude = 1,
}

impl CubeKind {
    fn floats_per_cell(self) -> usize {
        match self {
            CubeKind::Complex => 2,
            CubeKind::Magnitude => 1,
        }
    }
}

/// A stack of equally sized 2D frames stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    kind: CubeKind,
    dim0: usize,
    dim1: usize,
    frames: usize,
    data: Vec<f32>,
}

impl Cube {
    pub fn new(kind: CubeKind, dim0: usize, dim1: usize) -> Self {
        Self { kind, dim0, dim1, frames: 0, data: Vec::new() }
    }

    pub fn kind(&self) -> CubeKind {
        self.kind
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        (self.dim0, self.dim1)
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    /// Raw payload, frame-major and row-major.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn frame_len(&self) -> usize {
        self.dim0 * self.dim1 * self.kind.floats_per_cell()
    }

    fn check_push(&self, kind: CubeKind, shape: (usize, usize)) -> Result<()> {
        if kind != self.kind {
            return Err(Error::Domain(format!("cannot add a {kind:?} frame to a {:?} cube", self.kind)));
        }
        if shape != (self.dim0, self.dim1) {
            return Err(Error::Shape { expected: (self.dim0, self.dim1), actual: shape });
        }
        Ok(())
    }

    pub fn push_magnitude(&mut self, frame: &Array2<f64>) -> Result<()> {
        self.check_push(CubeKind::Magnitude, frame.dim())?;
        self.data.extend(frame.iter().map(|&v| v as f32));
        self.frames += 1;
        Ok(())
    }

    pub fn push_complex(&mut self, frame: &Array2<Complex64>) -> Result<()> {
        self.check_push(CubeKind::Complex, frame.dim())?;
        for v in frame.iter() {
            self.data.push(v.re as f32);
            self.data.push(v.im as f32);
        }
        self.frames += 1;
        Ok(())
    }

    /// Store a map as-is: complex maps as complex, magnitude maps (linear
    /// or dB, normalized or not) as magnitude.
    pub fn push_map(&mut self, map: &RdMap) -> Result<()> {
        match map.values() {
            MapValues::Complex(v) => self.push_complex(v),
            MapValues::Magnitude(v) => self.push_magnitude(v),
        }
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.frames {
            return Err(Error::Domain(format!("frame {index} outside cube of {} frames", self.frames)));
        }
        Ok(())
    }

    pub fn magnitude_frame(&self, index: usize) -> Result<Array2<f64>> {
        self.check_index(index)?;
        if self.kind != CubeKind::Magnitude {
            return Err(Error::Domain("cube holds complex frames".into()));
        }
        let start = index * self.frame_len();
        let slice = &self.data[start..start + self.frame_len()];
        Ok(Array2::from_shape_fn((self.dim0, self.dim1), |(i, j)| slice[i * self.dim1 + j] as f64))
    }

    pub fn complex_frame(&self, index: usize) -> Result<Array2<Complex64>> {
        self.check_index(index)?;
        if self.kind != CubeKind::Complex {
            return Err(Error::Domain("cube holds magnitude frames".into()));
        }
        let start = index * self.frame_len();
        let slice = &self.data[start..start + self.frame_len()];
        Ok(Array2::from_shape_fn((self.dim0, self.dim1), |(i, j)| {
            let k = 2 * (i * self.dim1 + j);
            Complex64::new(slice[k] as f64, slice[k + 1] as f64)
        }))
    }

    /// Mutable payload of one frame, for in-place rewriting.
    pub fn frame_data_mut(&mut self, index: usize) -> Result<&mut [f32]> {
        self.check_index(index)?;
        let len = self.frame_len();
        Ok(&mut self.data[index * len..(index + 1) * len])
    }

    pub fn frame_data(&self, index: usize) -> Result<&[f32]> {
        self.check_index(index)?;
        let len = self.frame_len();
        Ok(&self.data[index * len..(index + 1) * len])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.kind as u32, self.dim0 as u32, self.dim1 as u32, self.frames as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parse an RDC1 byte stream. Errors carry the byte offset of the
    /// offending field.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: u64, reason: String| Error::Format { offset, reason };
        if bytes.len() < 4 {
            return Err(fmt(bytes.len() as u64, "file ends inside the magic".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt(0, format!("bad magic {:02x?}, expected \"RDC1\"", &bytes[..4])));
        }
        let word = |offset: usize| -> Result<u32> {
            bytes
                .get(offset..offset + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .ok_or_else(|| fmt(bytes.len() as u64, format!("header truncated; field at offset {offset} missing")))
        };
        let version = word(4)?;
        if version != VERSION {
            return Err(fmt(OFFSET_VERSION, format!("unsupported version {version}")));
        }
        let kind = match word(8)? {
            0 => CubeKind::Complex,
            1 => CubeKind::Magnitude,
            k => return Err(fmt(OFFSET_KIND, format!("unknown kind {k}"))),
        };
        let (dim0, dim1, frames) = (word(12)? as usize, word(16)? as usize, word(20)? as usize);
        if dim0 == 0 || dim1 == 0 {
            return Err(fmt(OFFSET_DIMS, format!("zero frame dimension {dim0} x {dim1}")));
        }
        let payload = dim0
            .checked_mul(dim1)
            .and_then(|c| c.checked_mul(frames))
            .and_then(|c| c.checked_mul(kind.floats_per_cell() * 4))
            .filter(|&b| b <= (isize::MAX as usize) - HEADER_LEN)
            .ok_or_else(|| fmt(OFFSET_DIMS, format!("dimensions {dim0} x {dim1} x {frames} overflow")))?;
        let expected = HEADER_LEN + payload;
        if bytes.len() < expected {
            let float_size = 4;
            let complete = HEADER_LEN + (bytes.len() - HEADER_LEN) / float_size * float_size;
            return Err(fmt(
                complete as u64,
                format!("payload truncated: {} of {} bytes present", bytes.len() - HEADER_LEN, payload),
            ));
        }
        if bytes.len() > expected {
            return Err(fmt(expected as u64, format!("{} trailing bytes", bytes.len() - expected)));
        }
        let data = bytes[HEADER_LEN..].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Ok(Self { kind, dim0, dim1, frames, data })
    }
}

pub fn write_rd_cube(cube: &Cube, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cube.to_bytes())?;
    Ok(())
}

pub fn read_rd_cube(path: impl AsRef<Path>) -> Result<Cube> {
    Cube::from_bytes(&fs::read(path)?)
}

/// Writes a cube of known frame count frame by frame.
pub struct CubeWriter {
    out: BufWriter<File>,
    kind: CubeKind,
    shape: (usize, usize),
    expected: usize,
    written: usize,
}

impl CubeWriter {
    pub fn create(path: impl AsRef<Path>, kind: CubeKind, shape: (usize, usize), frames: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        for v in [VERSION, kind as u32, shape.0 as u32, shape.1 as u32, frames as u32] {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(Self { out, kind, shape, expected: frames, written: 0 })
    }

    pub fn write_magnitude(&mut self, frame: &Array2<f64>) -> Result<()> {
        if self.kind != CubeKind::Magnitude {
            return Err(Error::Domain("writer expects complex frames".into()));
        }
        if frame.dim() != self.shape {
            return Err(Error::Shape { expected: self.shape, actual: frame.dim() });
        }
        if self.written == self.expected {
            return Err(Error::Domain(format!("cube already holds {} frames", self.expected)));
        }
        for v in frame.iter() {
            self.out.write_all(&(*v as f32).to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::Domain(format!("wrote {} of {} frames", self.written, self.expected)));
        }
        self.out.flush()?;
        Ok(())
    }
}

/// Cube of a sequence of maps, which must agree in shape and representation.
pub fn cube_from_maps(maps: &[RdMap]) -> Result<Cube> {
    let first = maps.first().ok_or_else(|| Error::Domain("no maps to store".into()))?;
    let kind = match first.values() {
        MapValues::Complex(_) => CubeKind::Complex,
        MapValues::Magnitude(_) => CubeKind::Magnitude,
    };
    let (d0, d1) = first.dim();
    let mut cube = Cube::new(kind, d0, d1);
    for m in maps {
        cube.push_map(m)?;
    }
    Ok(cube)
}

/// Cube of raw beat frames (`N x M` complex each).
pub fn cube_from_frames(frames: &[BeatFrame]) -> Result<Cube> {
    let first = frames.first().ok_or_else(|| Error::Domain("no frames to store".into()))?;
    let (n, m) = first.dim();
    let mut cube = Cube::new(CubeKind::Complex, n, m);
    for f in frames {
        cube.push_complex(f.samples())?;
    }
    Ok(cube)
}

/// Load externally recorded ADC data: an RDC1 complex cube of `N x M`
/// frames matching `cfg`.
pub fn ingest_adc_cube(path: impl AsRef<Path>, cfg: &RadarConfig) -> Result<Vec<BeatFrame>> {
    cfg.validate()?;
    let cube = read_rd_cube(path)?;
    if cube.kind() != CubeKind::Complex {
        return Err(Error::Domain("ADC cubes must hold complex samples".into()));
    }
    if cube.frame_shape() != cfg.frame_shape() {
        return Err(Error::Shape { expected: cfg.frame_shape(), actual: cube.frame_shape() });
    }
    (0..cube.frame_count()).map(|i| BeatFrame::new(cube.complex_frame(i)?, *cfg, Provenance::Recorded)).collect()
}
