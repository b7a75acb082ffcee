//! Synthetic scenes standing in for encoder outputs.
//!
//! Objects are planted at patch centres. Object patches carry the unit fused
//! text direction plus Gaussian noise of per-component standard deviation
//! `1 / (snr · √D)`; every other patch is noise with standard deviation
//! `1 / √D`, so both have roughly unit norm.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::align::TrainSample;
use crate::error::{Error, Result};
use crate::format::{write_points, write_tensor, write_tokens, Tensor};
use crate::grid::{gaussian_splat, EmbeddingMatrix, Point, PointSet};
use crate::locate::{plan_windows, WindowPatches, WindowPlan};
use crate::manifest::{crop, Manifest, ManifestRecord};
use crate::tssm::{MockEmbedder, MockTokenizer, TextBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub scenes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub height: usize,
    pub width: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub snr: f64,
    /// Minimum Chebyshev distance, in patches, between two objects.
    pub min_spacing: usize,
    pub title: String,
    pub category: Option<String>,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            scenes: 10,
            min_objects: 3,
            max_objects: 6,
            height: 96,
            width: 96,
            patch_size: 8,
            dim: 32,
            snr: 10.0,
            min_spacing: 2,
            title: "apples".into(),
            category: None,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch_size, self.width / self.patch_size)
    }

    fn validate(&self, plan: &WindowPlan) -> Result<()> {
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be positive, got {}", self.snr)));
        }
        if self.dim == 0 || self.patch_size == 0 || self.min_objects > self.max_objects {
            return Err(Error::invalid("dim and patch_size must be >= 1 and min_objects <= max_objects"));
        }
        let ps = self.patch_size;
        let aligned = self.height.is_multiple_of(ps)
            && self.width.is_multiple_of(ps)
            && plan.window_height.is_multiple_of(ps)
            && plan.window_width.is_multiple_of(ps)
            && plan.origins.iter().all(|&(x, y)| x % ps == 0 && y % ps == 0);
        if !aligned {
            return Err(Error::invalid(format!(
                "{}x{} image with its window plan does not align with {ps}-pixel patches",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// One generated scene with its full-image patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub id: String,
    pub points: PointSet,
    /// Patch-grid indices (row-major) holding an object.
    pub object_patches: Vec<usize>,
    pub patches: EmbeddingMatrix,
    pub grid: (usize, usize),
    pub plan: WindowPlan,
}

impl SyntheticScene {
    /// Patch embeddings sliced per window, in plan order.
    pub fn windows(&self, patch_size: usize) -> Result<Vec<WindowPatches>> {
        let (_, gw) = self.grid;
        let (wh, ww) = (self.plan.window_height / patch_size, self.plan.window_width / patch_size);
        let dim = self.patches.dim();
        self.plan
            .origins
            .iter()
            .map(|&(x, y)| {
                let (r0, c0) = (y / patch_size, x / patch_size);
                let mut values = Vec::with_capacity(wh * ww * dim);
                for r in r0..r0 + wh {
                    for c in c0..c0 + ww {
                        values.extend_from_slice(self.patches.row(r * gw + c));
                    }
                }
                Ok(WindowPatches {
                    patches: EmbeddingMatrix::new(wh * ww, dim, values)?,
                    grid: (wh, ww),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub spec: SyntheticSceneSpec,
    pub text: TextBundle,
    pub scenes: Vec<SyntheticScene>,
}

impl SyntheticSet {
    /// One training sample per window of each given scene, with ground truth
    /// rendered at `sigma` and cropped to the window.
    pub fn train_samples(&self, scenes: &[SyntheticScene], sigma: f64) -> Result<Vec<TrainSample>> {
        let mut out = Vec::new();
        for scene in scenes {
            let full = gaussian_splat(&scene.points, self.spec.height, self.spec.width, sigma)?;
            for (win, wp) in scene.plan.windows().zip(scene.windows(self.spec.patch_size)?) {
                out.push(TrainSample::new(
                    wp.patches,
                    wp.grid,
                    self.text.self_support.clone(),
                    crop(&full, win)?,
                )?);
            }
        }
        Ok(out)
    }
}

/// The shared prompt bundle used by every synthetic scene.
pub fn synthetic_text(spec: &SyntheticSceneSpec) -> Result<TextBundle> {
    MockEmbedder::new(spec.dim, spec.seed ^ 0x7e57).bundle(&MockTokenizer, &spec.title)
}

fn place_objects(rng: &mut ChaCha8Rng, spec: &SyntheticSceneSpec, count: usize) -> Result<Vec<usize>> {
    let (gh, gw) = spec.grid();
    // interior patches only, so every plant sits away from the image border
    let interior: Vec<usize> = (1..gh.saturating_sub(1))
        .flat_map(|r| (1..gw.saturating_sub(1)).map(move |c| r * gw + c))
        .collect();
    let far_enough = |chosen: &[usize], cand: usize| {
        chosen.iter().all(|&o| {
            let dr = (o / gw).abs_diff(cand / gw);
            let dc = (o % gw).abs_diff(cand % gw);
            dr.max(dc) >= spec.min_spacing
        })
    };
    for _attempt in 0..100 {
        let mut chosen = Vec::with_capacity(count);
        for _ in 0..count * 50 {
            if chosen.len() == count || interior.is_empty() {
                break;
            }
            let cand = interior[rng.random_range(0..interior.len())];
            if far_enough(&chosen, cand) {
                chosen.push(cand);
            }
        }
        if chosen.len() == count {
            chosen.sort_unstable();
            return Ok(chosen);
        }
    }
    Err(Error::invalid(format!(
        "cannot place {count} objects {} patches apart in a {gh}x{gw} grid",
        spec.min_spacing
    )))
}

pub fn synthesize(spec: &SyntheticSceneSpec) -> Result<SyntheticSet> {
    let plan = plan_windows(spec.height, spec.width)?;
    spec.validate(&plan)?;
    let text = synthetic_text(spec)?;
    let norm = text.self_support.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Numerical("fused text embedding has zero norm".into()));
    }
    let unit: Vec<f64> = text.self_support.iter().map(|&v| v as f64 / norm).collect();

    let d = spec.dim as f64;
    let background = Normal::new(0.0, 1.0 / d.sqrt()).unwrap();
    let jitter = Normal::new(0.0, 1.0 / (spec.snr * d.sqrt())).unwrap();
    let (gh, gw) = spec.grid();
    let ps = spec.patch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut scenes = Vec::with_capacity(spec.scenes);
    for s in 0..spec.scenes {
        let count = rng.random_range(spec.min_objects..=spec.max_objects);
        let objects = place_objects(&mut rng, spec, count)?;
        let mut values = Vec::with_capacity(gh * gw * spec.dim);
        for p in 0..gh * gw {
            if objects.binary_search(&p).is_ok() {
                values.extend(unit.iter().map(|u| (u + jitter.sample(&mut rng)) as f32));
            } else {
                values.extend((0..spec.dim).map(|_| background.sample(&mut rng) as f32));
            }
        }
        let centre = (ps as f32 - 1.0) / 2.0;
        let points = objects
            .iter()
            .map(|&p| Point::new((p % gw * ps) as f32 + centre, (p / gw * ps) as f32 + centre))
            .collect();
        scenes.push(SyntheticScene {
            id: format!("scene_{s:04}"),
            points: PointSet::new(points),
            object_patches: objects,
            patches: EmbeddingMatrix::new(gh * gw, spec.dim, values)?,
            grid: (gh, gw),
            plan: plan.clone(),
        });
    }
    Ok(SyntheticSet {
        spec: spec.clone(),
        text,
        scenes,
    })
}

/// Writes a synthetic set as a manifest tree under `out` and returns the manifest.
///
/// Layout: `manifest.csv`, `text/`, `patches/{id}_w{k}.zsol`, `points/{id}.zspt`.
pub fn write_synthetic(set: &SyntheticSet, out: &Path) -> Result<Manifest> {
    let text_dir = PathBuf::from("text");
    let token_file = text_dir.join("tokens.zstk");
    let token_embedding_file = text_dir.join("token_embeddings.zsol");
    let sentence_file = text_dir.join("sentence.zsol");
    write_tokens(out.join(&token_file), &set.text.tokens)?;
    write_tensor(
        out.join(&token_embedding_file),
        &Tensor::from_embeddings(&set.text.token_embeddings),
    )?;
    write_tensor(
        out.join(&sentence_file),
        &Tensor::new(vec![1, set.spec.dim], set.text.sentence_embedding.clone())?,
    )?;

    let mut records = Vec::with_capacity(set.scenes.len());
    for scene in &set.scenes {
        let mut patch_files = Vec::new();
        for (k, wp) in scene.windows(set.spec.patch_size)?.iter().enumerate() {
            let rel = PathBuf::from("patches").join(format!("{}_w{k}.zsol", scene.id));
            let t = Tensor::new(vec![wp.grid.0, wp.grid.1, set.spec.dim], wp.patches.values().to_vec())?;
            write_tensor(out.join(&rel), &t)?;
            patch_files.push(rel);
        }
        let points_file = PathBuf::from("points").join(format!("{}.zspt", scene.id));
        write_points(out.join(&points_file), &scene.points)?;
        records.push(ManifestRecord {
            image_id: scene.id.clone(),
            width: set.spec.width,
            height: set.spec.height,
            patch_files,
            token_file: token_file.clone(),
            token_embedding_file: token_embedding_file.clone(),
            sentence_file: sentence_file.clone(),
            points_file,
            category: set.spec.category.clone(),
        });
    }
    let manifest = Manifest {
        root: out.to_path_buf(),
        records,
    };
    manifest.write(out.join("manifest.csv"))?;
    Ok(manifest)
}

/// [`synthesize`] then [`write_synthetic`].
pub fn gen_synthetic(spec: &SyntheticSceneSpec, out: &Path) -> Result<Manifest> {
    write_synthetic(&synthesize(spec)?, out)
}
