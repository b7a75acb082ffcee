//! Dense 2-D grids, embedding matrices and point sets.
//!
//! Every numeric routine here accumulates in `f64` and stores `f32`.

use crate::error::{check_dim, Error, Result};

/// Row-major `height × width` grid of `f32` values with no sign constraint.
///
/// Similarity maps live here; [`DensityMap`] is the non-negative refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "grid must be at least 1x1, got {height}x{width}"
            )));
        }
        check_dim("grid value count", height * width, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite grid value at index {i}")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    /// Replaces negative entries with zero.
    pub fn clamp_non_negative(self) -> DensityMap {
        let values = self.values.into_iter().map(|v| v.max(0.0)).collect();
        DensityMap(Grid { values, ..self })
    }
}

/// Non-negative per-pixel object mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap(Grid);

impl DensityMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        let grid = Grid::new(height, width, values)?;
        Self::try_from(grid)
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Grid::zeros(height, width).map(DensityMap)
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn max_pool(&self, window: usize) -> Result<DensityMap> {
        max_pool(&self.0, window).map(DensityMap)
    }

    pub fn upsample(&self, factor: usize) -> Result<DensityMap> {
        bilinear_upsample(&self.0, factor).map(DensityMap)
    }
}

impl TryFrom<Grid> for DensityMap {
    type Error = Error;

    fn try_from(grid: Grid) -> Result<Self> {
        if let Some(i) = grid.values.iter().position(|&v| v < 0.0) {
            return Err(Error::data(format!(
                "density map has negative value {} at index {i}",
                grid.values[i]
            )));
        }
        if !grid.sum().is_finite() {
            return Err(Error::Numerical("density map mass is not finite".into()));
        }
        Ok(DensityMap(grid))
    }
}

impl std::ops::Deref for DensityMap {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.0
    }
}

/// `rows × dim` row-major matrix of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "embedding matrix must be at least 1x1, got {rows}x{dim}"
            )));
        }
        check_dim("embedding value count", rows * dim, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite embedding entry at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            check_dim("embedding row length", dim, row.len())?;
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
}

impl Point {
    pub fn new(x: f32, y: f32) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx.hypot(dy)
    }
}

/// Pixel coordinates with optional per-point confidence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    points: Vec<Point>,
    confidences: Option<Vec<f32>>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self {
            points,
            confidences: None,
        }
    }

    pub fn with_confidences(points: Vec<Point>, confidences: Vec<f32>) -> Result<Self> {
        check_dim("confidence count", points.len(), confidences.len())?;
        if let Some(c) = confidences.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::data(format!("invalid confidence {c}")));
        }
        Ok(Self {
            points,
            confidences: Some(confidences),
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn confidences(&self) -> Option<&[f32]> {
        self.confidences.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fails unless every point satisfies `0 <= x < width`, `0 <= y < height`.
    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            let inside = p.x >= 0.0 && p.y >= 0.0 && (p.x as f64) < width as f64 && (p.y as f64) < height as f64;
            if !inside {
                return Err(Error::data(format!(
                    "point {i} at ({}, {}) lies outside a {height}x{width} image",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

/// Cosine similarity computed in `f64`.
///
/// Returns 0 when either norm is below `1e-12`.
pub fn cosine_similarity<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    check_dim("cosine operand length", a.len(), b.len())?;
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    Ok(cosine_from_sums(dot, na, nb))
}

pub(crate) const NORM_EPS: f64 = 1e-12;

// sqrt(na * nb) rather than sqrt(na) * sqrt(nb) so identical inputs give exactly 1.
pub(crate) fn cosine_from_sums(dot: f64, na: f64, nb: f64) -> f64 {
    if na.sqrt() < NORM_EPS || nb.sqrt() < NORM_EPS {
        return 0.0;
    }
    let mut denom = (na * nb).sqrt();
    if !denom.is_finite() || denom == 0.0 {
        denom = na.sqrt() * nb.sqrt();
    }
    (dot / denom).clamp(-1.0, 1.0)
}

/// `window × window` max filter with the window clamped to the grid.
pub fn max_pool(grid: &Grid, window: usize) -> Result<Grid> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "pool window must be odd and >= 1, got {window}"
        )));
    }
    let (h, w) = (grid.height, grid.width);
    let r = window / 2;
    // separable: horizontal pass, then vertical
    let mut horiz = vec![0.0f32; h * w];
    for row in 0..h {
        let src = &grid.values[row * w..(row + 1) * w];
        for col in 0..w {
            let lo = col.saturating_sub(r);
            let hi = (col + r).min(w - 1);
            horiz[row * w + col] = src[lo..=hi].iter().copied().fold(f32::NEG_INFINITY, f32::max);
        }
    }
    let mut out = vec![0.0f32; h * w];
    for row in 0..h {
        let lo = row.saturating_sub(r);
        let hi = (row + r).min(h - 1);
        for col in 0..w {
            let mut m = f32::NEG_INFINITY;
            for rr in lo..=hi {
                m = m.max(horiz[rr * w + col]);
            }
            out[row * w + col] = m;
        }
    }
    Ok(Grid {
        height: h,
        width: w,
        values: out,
    })
}

/// Source taps for one output coordinate of a half-pixel-centred bilinear resize.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

pub(crate) fn upsample_taps(len: usize, factor: usize) -> Vec<Tap> {
    (0..len * factor)
        .map(|i| {
            let src = ((i as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

/// Bilinear resize by an integer factor (align-corners = false, edge clamped).
pub fn bilinear_upsample(grid: &Grid, factor: usize) -> Result<Grid> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    let out = upsample_f64(
        grid.height,
        grid.width,
        &grid.values.iter().map(|&v| v as f64).collect::<Vec<_>>(),
        factor,
    );
    Ok(Grid {
        height: grid.height * factor,
        width: grid.width * factor,
        values: out.into_iter().map(|v| v as f32).collect(),
    })
}

pub(crate) fn upsample_f64(h: usize, w: usize, src: &[f64], factor: usize) -> Vec<f64> {
    let rows = upsample_taps(h, factor);
    let cols = upsample_taps(w, factor);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for rt in &rows {
        for ct in &cols {
            let top = src[rt.lo * w + ct.lo] * (1.0 - ct.frac) + src[rt.lo * w + ct.hi] * ct.frac;
            let bottom = src[rt.hi * w + ct.lo] * (1.0 - ct.frac) + src[rt.hi * w + ct.hi] * ct.frac;
            out.push(top * (1.0 - rt.frac) + bottom * rt.frac);
        }
    }
    out
}

/// Transpose of [`upsample_f64`]: maps a gradient on the upsampled grid back
/// onto the source grid.
pub(crate) fn upsample_adjoint_f64(h: usize, w: usize, grad_out: &[f64], factor: usize) -> Vec<f64> {
    let rows = upsample_taps(h, factor);
    let cols = upsample_taps(w, factor);
    let mut grad = vec![0.0; h * w];
    let ow = cols.len();
    for (i, rt) in rows.iter().enumerate() {
        for (j, ct) in cols.iter().enumerate() {
            let g = grad_out[i * ow + j];
            if g == 0.0 {
                continue;
            }
            let (wr0, wr1) = (1.0 - rt.frac, rt.frac);
            let (wc0, wc1) = (1.0 - ct.frac, ct.frac);
            grad[rt.lo * w + ct.lo] += g * wr0 * wc0;
            grad[rt.lo * w + ct.hi] += g * wr0 * wc1;
            grad[rt.hi * w + ct.lo] += g * wr1 * wc0;
            grad[rt.hi * w + ct.hi] += g * wr1 * wc1;
        }
    }
    grad
}

/// Default ground-truth kernel width in pixels.
pub const DEFAULT_SIGMA: f64 = 2.0;

/// Kernel support radius in units of sigma.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

/// Renders each point as an isotropic Gaussian truncated at `4σ`.
///
/// Each kernel is sampled at pixel centres (integer coordinates) over the
/// disk of radius `4σ` and scaled so that the disk holds the continuous
/// truncated mass `1 - e^{-8}`. Pixels outside the image are dropped.
pub fn gaussian_splat(points: &PointSet, height: usize, width: usize, sigma: f64) -> Result<DensityMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("density map must be at least 1x1"));
    }
    points.check_bounds(height, width)?;
    let mut acc = vec![0.0f64; height * width];
    let radius = TRUNCATION_SIGMAS * sigma;
    let target_mass = 1.0 - (-TRUNCATION_SIGMAS * TRUNCATION_SIGMAS / 2.0).exp();
    let mut taps: Vec<(i64, i64, f64)> = Vec::new();
    for p in points.points() {
        let (px, py) = (p.x as f64, p.y as f64);
        taps.clear();
        let (r0, r1) = ((py - radius).ceil() as i64, (py + radius).floor() as i64);
        let (c0, c1) = ((px - radius).ceil() as i64, (px + radius).floor() as i64);
        let mut total = 0.0;
        for r in r0..=r1 {
            for c in c0..=c1 {
                let d2 = (c as f64 - px).powi(2) + (r as f64 - py).powi(2);
                if d2 <= radius * radius {
                    let v = (-d2 / (2.0 * sigma * sigma)).exp();
                    total += v;
                    taps.push((r, c, v));
                }
            }
        }
        if taps.is_empty() || total <= 0.0 {
            // kernel narrower than the pixel pitch
            let (r, c) = (py.round() as i64, px.round() as i64);
            taps.clear();
            taps.push((r, c, 1.0));
            total = 1.0;
        }
        let scale = target_mass / total;
        for &(r, c, v) in &taps {
            if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                acc[r as usize * width + c as usize] += v * scale;
            }
        }
    }
    DensityMap::new(height, width, acc.into_iter().map(|v| v as f32).collect())
}
