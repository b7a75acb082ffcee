//! Little-endian binary file formats.
//!
//! | magic  | contents                                                            |
//! |--------|---------------------------------------------------------------------|
//! | `ZSOL` | version, dtype (1 = f32), ndim, reserved 0, `ndim` u32 dims, payload |
//! | `ZSPT` | version, u32 count, count × (x, y) f32, presence byte, confidences  |
//! | `ZSTK` | version, 77 u32 ids, then start/length/class/end as u16             |
//! | `ZSMD` | version, D_img u32, D_txt u32, τ f32, weights, bias (f32)           |

use std::fs;
use std::path::Path;

use crate::align::ProjectionModel;
use crate::error::{Error, Result};
use crate::grid::{EmbeddingMatrix, Grid, Point, PointSet};
use crate::tssm::{TitleSpan, TokenSequence, SEQUENCE_LEN};

pub const TENSOR_MAGIC: &[u8; 4] = b"ZSOL";
pub const POINTS_MAGIC: &[u8; 4] = b"ZSPT";
pub const TOKENS_MAGIC: &[u8; 4] = b"ZSTK";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ZSMD";
pub const VERSION: u8 = 0x01;
pub const DTYPE_F32: u8 = 0x01;

/// Dense row-major `f32` tensor as stored in a `ZSOL` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > u8::MAX as usize {
            return Err(Error::invalid(format!("unsupported tensor rank {}", dims.len())));
        }
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match count {
            Some(n) if n == data.len() => Ok(Self { dims, data }),
            _ => Err(Error::invalid(format!(
                "tensor dims {:?} do not match {} values",
                dims,
                data.len()
            ))),
        }
    }

    pub fn from_grid(grid: &Grid) -> Self {
        Self {
            dims: vec![grid.height(), grid.width()],
            data: grid.values().to_vec(),
        }
    }

    pub fn from_embeddings(m: &EmbeddingMatrix) -> Self {
        Self {
            dims: vec![m.rows(), m.dim()],
            data: m.values().to_vec(),
        }
    }

    pub fn into_grid(self) -> Result<Grid> {
        match self.dims[..] {
            [h, w] => Grid::new(h, w, self.data),
            _ => Err(Error::format("tensor", format!("expected a 2-D grid, got dims {:?}", self.dims))),
        }
    }

    /// A 1-D tensor is a single row; a 2-D tensor is `rows × dim`.
    pub fn into_embeddings(self) -> Result<EmbeddingMatrix> {
        match self.dims[..] {
            [d] => EmbeddingMatrix::new(1, d, self.data),
            [n, d] => EmbeddingMatrix::new(n, d, self.data),
            _ => Err(Error::format(
                "tensor",
                format!("expected a 1-D or 2-D embedding tensor, got dims {:?}", self.dims),
            )),
        }
    }

    /// A `gh × gw × D` patch grid, flattened to `(gh * gw) × D` plus the grid shape.
    pub fn into_patch_grid(self) -> Result<(EmbeddingMatrix, (usize, usize))> {
        match self.dims[..] {
            [gh, gw, d] => Ok((EmbeddingMatrix::new(gh * gw, d, self.data)?, (gh, gw))),
            _ => Err(Error::format(
                "tensor",
                format!("expected a 3-D patch grid, got dims {:?}", self.dims),
            )),
        }
    }
}

struct Reader<'a> {
    kind: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(kind: &'static str, buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Self { kind, buf, pos: 0 };
        if r.take(4)? != magic {
            return Err(Error::format(kind, "bad magic"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::format(kind, format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(self.kind, "unexpected end of file")),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.kind, "length overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::format(
                self.kind,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ))
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn to_u32(kind: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(kind, format!("value {v} exceeds u32")))
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(9 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F32, t.dims.len() as u8, 0]);
    for &d in &t.dims {
        out.extend_from_slice(&to_u32("tensor", d)?.to_le_bytes());
    }
    put_f32s(&mut out, &t.data);
    Ok(out)
}

pub fn decode_tensor(buf: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new("tensor", buf, TENSOR_MAGIC)?;
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 {
        return Err(Error::format("tensor", format!("unsupported dtype {dtype}")));
    }
    let ndim = r.u8()? as usize;
    if r.u8()? != 0 {
        return Err(Error::format("tensor", "reserved byte is not zero"));
    }
    if ndim == 0 {
        return Err(Error::format("tensor", "zero-rank tensor"));
    }
    let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("tensor", "element count overflow"))?;
    let data = r.f32_vec(count)?;
    r.finish()?;
    Tensor::new(dims, data)
}

pub fn encode_points(points: &PointSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(10 + 12 * points.len());
    out.extend_from_slice(POINTS_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&to_u32("points", points.len())?.to_le_bytes());
    for p in points.points() {
        out.extend_from_slice(&p.x.to_le_bytes());
        out.extend_from_slice(&p.y.to_le_bytes());
    }
    match points.confidences() {
        Some(c) => {
            out.push(1);
            put_f32s(&mut out, c);
        }
        None => out.push(0),
    }
    Ok(out)
}

pub fn decode_points(buf: &[u8]) -> Result<PointSet> {
    let mut r = Reader::new("points", buf, POINTS_MAGIC)?;
    let n = r.u32()? as usize;
    let coords = r.f32_vec(n.checked_mul(2).ok_or_else(|| Error::format("points", "count overflow"))?)?;
    if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
        return Err(Error::format("points", format!("non-finite coordinate {v}")));
    }
    let points: Vec<Point> = coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
    let set = match r.u8()? {
        0 => PointSet::new(points),
        1 => PointSet::with_confidences(points, r.f32_vec(n)?)
            .map_err(|e| Error::format("points", e.to_string()))?,
        b => return Err(Error::format("points", format!("invalid confidence flag {b}"))),
    };
    r.finish()?;
    Ok(set)
}

pub fn encode_tokens(seq: &TokenSequence) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(5 + 4 * SEQUENCE_LEN + 8);
    out.extend_from_slice(TOKENS_MAGIC);
    out.push(VERSION);
    for id in seq.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    let span = seq.title_span();
    for v in [span.start, span.len, seq.class_index(), seq.end_index()] {
        let v = u16::try_from(v).map_err(|_| Error::format("tokens", "index exceeds u16"))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tokens(buf: &[u8]) -> Result<TokenSequence> {
    let mut r = Reader::new("tokens", buf, TOKENS_MAGIC)?;
    let mut ids = [0u32; SEQUENCE_LEN];
    for id in ids.iter_mut() {
        *id = r.u32()?;
    }
    let start = r.u16()? as usize;
    let len = r.u16()? as usize;
    let class_index = r.u16()? as usize;
    let end_index = r.u16()? as usize;
    r.finish()?;
    TokenSequence::from_parts(ids, TitleSpan { start, len }, class_index, end_index)
        .map_err(|e| Error::format("tokens", e.to_string()))
}

pub fn encode_checkpoint(model: &ProjectionModel) -> Result<Vec<u8>> {
    let (di, dt) = (model.image_dim(), model.text_dim());
    let mut out = Vec::with_capacity(17 + 4 * (di * dt + dt));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&to_u32("checkpoint", di)?.to_le_bytes());
    out.extend_from_slice(&to_u32("checkpoint", dt)?.to_le_bytes());
    out.extend_from_slice(&(model.temperature() as f32).to_le_bytes());
    for &w in model.weights() {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    for &b in model.bias() {
        out.extend_from_slice(&(b as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<ProjectionModel> {
    let mut r = Reader::new("checkpoint", buf, CHECKPOINT_MAGIC)?;
    let di = r.u32()? as usize;
    let dt = r.u32()? as usize;
    let tau = r.f32()? as f64;
    let n = di
        .checked_mul(dt)
        .ok_or_else(|| Error::format("checkpoint", "weight count overflow"))?;
    let weights = r.f32_vec(n)?.into_iter().map(f64::from).collect();
    let bias = r.f32_vec(dt)?.into_iter().map(f64::from).collect();
    r.finish()?;
    ProjectionModel::from_parts(di, dt, weights, bias, tau).map_err(|e| Error::format("checkpoint", e.to_string()))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&read_file(path.as_ref())?).map_err(|e| with_path(e, path.as_ref()))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_file(path.as_ref(), &encode_tensor(t)?)
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointSet> {
    decode_points(&read_file(path.as_ref())?).map_err(|e| with_path(e, path.as_ref()))
}

pub fn write_points(path: impl AsRef<Path>, points: &PointSet) -> Result<()> {
    write_file(path.as_ref(), &encode_points(points)?)
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<TokenSequence> {
    decode_tokens(&read_file(path.as_ref())?).map_err(|e| with_path(e, path.as_ref()))
}

pub fn write_tokens(path: impl AsRef<Path>, seq: &TokenSequence) -> Result<()> {
    write_file(path.as_ref(), &encode_tokens(seq)?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ProjectionModel> {
    decode_checkpoint(&read_file(path.as_ref())?).map_err(|e| with_path(e, path.as_ref()))
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &ProjectionModel) -> Result<()> {
    write_file(path.as_ref(), &encode_checkpoint(model)?)
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Format { kind, reason } => Error::Format {
            kind,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    }
}
