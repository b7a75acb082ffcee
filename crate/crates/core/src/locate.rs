//! Density-map peak decoding and sliding-window inference.

use std::fmt;
use std::str::FromStr;

use crate::align::{patch_factor, ProjectionModel};
use crate::error::{check_dim, Error, Result};
use crate::grid::{max_pool, DensityMap, EmbeddingMatrix, Grid, Point, PointSet};
use crate::tssm::TextBundle;

pub const DENSE_ALPHA: f64 = 5.0 / 255.0;
pub const SPARSE_ALPHA: f64 = 10.0 / 255.0;
pub const DEFAULT_BETA: f64 = 0.06;
pub const DEFAULT_POOL_WINDOW: usize = 7;
pub const WINDOW_SIZE: usize = 384;
pub const WINDOW_STRIDE: usize = 128;

/// Small, tightly packed objects (dense) or larger, scattered ones (sparse).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityRegime {
    #[default]
    Dense,
    Sparse,
}

impl DensityRegime {
    pub fn alpha(self) -> f64 {
        match self {
            DensityRegime::Dense => DENSE_ALPHA,
            DensityRegime::Sparse => SPARSE_ALPHA,
        }
    }
}

impl FromStr for DensityRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(DensityRegime::Dense),
            "sparse" => Ok(DensityRegime::Sparse),
            other => Err(Error::invalid(format!(
                "unknown density regime `{other}` (expected dense or sparse)"
            ))),
        }
    }
}

impl fmt::Display for DensityRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensityRegime::Dense => "dense",
            DensityRegime::Sparse => "sparse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Peak threshold on the pooled map.
    pub alpha: f64,
    /// Background threshold on the candidate value.
    pub beta: f64,
    pub pool_window: usize,
    pub regime: DensityRegime,
}

impl DecodeConfig {
    pub fn for_regime(regime: DensityRegime) -> Self {
        Self {
            alpha: regime.alpha(),
            beta: DEFAULT_BETA,
            pool_window: DEFAULT_POOL_WINDOW,
            regime,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!(
                "decode thresholds out of range: alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.pool_window.is_multiple_of(2) {
            return Err(Error::invalid("pool window must be odd"));
        }
        Ok(())
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self::for_regime(DensityRegime::Dense)
    }
}

/// Local maxima of `map` that pass both thresholds.
///
/// A pixel is a candidate when it equals the pooled map, the pooled value
/// exceeds `alpha`, and the pixel value is at least `beta`. Candidates forming
/// an 8-connected plateau of equal value collapse onto the plateau's first
/// pixel in row-major order. Points are `(column, row)`; confidence is the
/// map value.
pub fn decode_points(map: &Grid, cfg: &DecodeConfig) -> Result<PointSet> {
    cfg.validate()?;
    let pooled = max_pool(map, cfg.pool_window)?;
    let (h, w) = (map.height(), map.width());
    let vals = map.values();
    let is_candidate: Vec<bool> = vals
        .iter()
        .zip(pooled.values())
        .map(|(&v, &p)| v == p && p as f64 > cfg.alpha && v as f64 >= cfg.beta)
        .collect();

    let mut seen = vec![false; h * w];
    let mut points = Vec::new();
    let mut conf = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !is_candidate[start] || seen[start] {
            continue;
        }
        let value = vals[start];
        points.push(Point::new((start % w) as f32, (start / w) as f32));
        conf.push(value);
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if !seen[j] && is_candidate[j] && vals[j] == value {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    PointSet::with_confidences(points, conf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Fixed-size windows at a fixed stride, the last one in each direction
/// pulled back to the image edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub image_height: usize,
    pub image_width: usize,
    pub window_height: usize,
    pub window_width: usize,
    pub stride: usize,
    /// `(x, y)` origins, row-major.
    pub origins: Vec<(usize, usize)>,
}

impl WindowPlan {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn windows(&self) -> impl Iterator<Item = Window> + '_ {
        self.origins.iter().map(|&(x, y)| Window {
            x,
            y,
            width: self.window_width,
            height: self.window_height,
        })
    }
}

fn axis_origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = len - window;
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        let clamped = o.min(last);
        if out.last() != Some(&clamped) {
            out.push(clamped);
        }
        if clamped == last {
            break;
        }
        o += stride;
    }
    out
}

/// 384×384 windows every 128 px.
pub fn plan_windows(height: usize, width: usize) -> Result<WindowPlan> {
    plan_windows_with(height, width, WINDOW_SIZE, WINDOW_STRIDE)
}

pub fn plan_windows_with(height: usize, width: usize, window: usize, stride: usize) -> Result<WindowPlan> {
    if height == 0 || width == 0 || window == 0 || stride == 0 {
        return Err(Error::invalid("image, window and stride sizes must be >= 1"));
    }
    if stride > window {
        return Err(Error::invalid(format!(
            "stride {stride} exceeds window {window} and would leave gaps"
        )));
    }
    let (wh, ww) = (window.min(height), window.min(width));
    let ys = axis_origins(height, wh, stride);
    let xs = axis_origins(width, ww, stride);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(WindowPlan {
        image_height: height,
        image_width: width,
        window_height: wh,
        window_width: ww,
        stride,
        origins,
    })
}

/// Per-pixel mean over every window covering the pixel.
pub fn fuse_windows(maps: &[DensityMap], plan: &WindowPlan) -> Result<DensityMap> {
    check_dim("window map count", plan.len(), maps.len())?;
    let (h, w) = (plan.image_height, plan.image_width);
    let mut sum = vec![0.0f64; h * w];
    let mut count = vec![0u32; h * w];
    for (map, win) in maps.iter().zip(plan.windows()) {
        check_dim("window map height", win.height, map.height())?;
        check_dim("window map width", win.width, map.width())?;
        for r in 0..win.height {
            let row = &map.values()[r * win.width..(r + 1) * win.width];
            let base = (win.y + r) * w + win.x;
            for (c, &v) in row.iter().enumerate() {
                sum[base + c] += v as f64;
                count[base + c] += 1;
            }
        }
    }
    if let Some(i) = count.iter().position(|&c| c == 0) {
        return Err(Error::data(format!("pixel {i} is not covered by any window")));
    }
    let values = sum.iter().zip(&count).map(|(s, &c)| (s / c as f64) as f32).collect();
    DensityMap::new(h, w, values)
}

/// Patch embeddings for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPatches {
    pub patches: EmbeddingMatrix,
    pub grid: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub points: PointSet,
    pub count: usize,
    pub density: DensityMap,
}

/// Similarity → density per window, fuse, decode.
pub fn localize(
    windows: &[WindowPatches],
    text: &TextBundle,
    model: &ProjectionModel,
    cfg: &DecodeConfig,
    plan: &WindowPlan,
) -> Result<Localization> {
    check_dim("window patch sets", plan.len(), windows.len())?;
    let maps = windows
        .iter()
        .map(|wp| {
            let factor = patch_factor((plan.window_height, plan.window_width), wp.grid)?;
            model.predicted_density(&wp.patches, wp.grid, &text.self_support, factor)
        })
        .collect::<Result<Vec<_>>>()?;
    let density = fuse_windows(&maps, plan)?;
    let points = decode_points(&density, cfg)?;
    Ok(Localization {
        count: points.len(),
        points,
        density,
    })
}
